"""Exact-arithmetic laboratory for squares of 0/1-coefficient polynomials."""

__version__ = "0.1.0"

from .poly import (  # noqa: F401
    NewmanPolynomial,
    RatioReport,
    SquareCoefficients,
    format_polynomial,
    metrics,
    parse_polynomial,
    square,
    square_oracle,
)
from .concentration import (  # noqa: F401
    ConcentrationQuery,
    EpsilonChoice,
    TailBound,
    bad_event_E_bound,
    c_epsilon,
    choose_epsilon,
    tail_bound,
)
from .sparsify import (  # noqa: F401
    BadEventFlags,
    CaseLabel,
    CoefficientSplit,
    KeepMask,
    SparsifyConfig,
    SparsifyTrial,
    alpha_of,
    classify_case,
    detect_bad_events,
    expectation_oracle,
    expected_l1,
    expected_square_coeff,
    sample,
    split_coefficient,
    theorem_conclusion_check,
)
from .search import (  # noqa: F401
    SearchResult,
    SearchSpec,
    exhaustive_search,
    local_search,
    verify_hypothesis,
)
from .experiment import (  # noqa: F401
    CampaignConfig,
    CampaignSummary,
    emit_results,
    parse_campaign_file,
    run_campaign,
)
