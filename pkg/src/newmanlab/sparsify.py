"""Randomized coefficient thinning and its bookkeeping.

A trial keeps each coefficient of a 0/1 polynomial independently with
probability alpha = N**(-alpha_exponent) and then asks three questions about
the thinned polynomial q: did its mass drop below (1-eps) of its expectation
(event E), did any coefficient of q**2 overshoot (1+eps)*alpha**2 times the
height of p**2 (events E_k), and did its degree collapse below (c0/2)*N
(event D)?  Trials are reproducible: the per-trial stream is derived from
(master seed, trial index) alone, so results do not depend on scheduling.

All event thresholds are evaluated in exact rational arithmetic (floats are
converted to the rationals they represent), which keeps the flags consistent
with the exact inequality chain checked by `theorem_conclusion_check`.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from fractions import Fraction
from functools import lru_cache
from typing import Optional, Union

import numpy as np

from .concentration import choose_epsilon
from .poly import (
    NewmanPolynomial,
    RatioReport,
    SquareCoefficients,
    metrics,
    ratio_report,
    square,
)

__all__ = [
    "RNG_ALGORITHM",
    "SparsifyConfig",
    "KeepMask",
    "BadEventFlags",
    "SparsifyTrial",
    "CoefficientSplit",
    "CaseLabel",
    "ExclusionThreshold",
    "ConclusionReport",
    "alpha_of",
    "sample",
    "detect_bad_events",
    "expected_l1",
    "expected_square_coeff",
    "expectation_oracle",
    "expectation_oracle_all",
    "expected_l1_oracle",
    "split_coefficient",
    "classify_case",
    "case_a_exclusion_threshold",
    "theorem_conclusion_check",
]

# Recorded in every output manifest; identifies how trial streams are built.
RNG_ALGORITHM = "numpy-pcg64/seedsequence(entropy=[master_seed,trial_index])"

_ENUMERATION_DEGREE_CAP = 20

Probability = Union[Fraction, float]


def _int_nth_root(x: int, n: int) -> int:
    """Floor of the n-th root of a nonnegative integer."""
    if x < 0 or n < 1:
        raise ValueError("nth root needs x >= 0 and n >= 1")
    if x < 2 or n == 1:
        return x
    r = 1 << -(-x.bit_length() // n)  # upper seed
    while True:
        nr = ((n - 1) * r + x // r ** (n - 1)) // n
        if nr >= r:
            return r
        r = nr


def alpha_of(N: int, exponent: Fraction) -> Probability:
    """Keep probability N**(-exponent).

    Returned as an exact Fraction whenever N**exponent is rational (for
    instance N = 1024 with exponent 1/10 gives exactly 1/2), otherwise as a
    float.
    """
    if N < 1:
        raise ValueError("N must be at least 1")
    exponent = Fraction(exponent)
    if not 0 < exponent < 1:
        raise ValueError("exponent must lie in (0, 1)")
    power = N ** exponent.numerator
    root = _int_nth_root(power, exponent.denominator)
    if root ** exponent.denominator == power:
        return Fraction(1, root)
    return float(N) ** (-float(exponent))


@dataclass(frozen=True)
class SparsifyConfig:
    """Parameters of a thinning experiment.

    `epsilon` may be omitted when `rho` and `rho_prime` are given, in which
    case the largest admissible deviation parameter is chosen for them.
    """

    alpha_exponent: Fraction = Fraction(1, 10)
    epsilon: Optional[float] = None
    c0: Fraction = Fraction(1)
    rho: Optional[Fraction] = None
    rho_prime: Optional[Fraction] = None
    seed: int = 0

    def __post_init__(self) -> None:
        object.__setattr__(self, "alpha_exponent", Fraction(self.alpha_exponent))
        object.__setattr__(self, "c0", Fraction(self.c0))
        if self.rho is not None:
            object.__setattr__(self, "rho", Fraction(self.rho))
        if self.rho_prime is not None:
            object.__setattr__(self, "rho_prime", Fraction(self.rho_prime))
        if not 0 < self.alpha_exponent < 1:
            raise ValueError("alpha_exponent must lie in (0, 1)")
        if not 0 < self.c0 <= 1:
            raise ValueError("c0 must lie in (0, 1]")
        if not 0 <= self.seed < 2 ** 64:
            raise ValueError("seed must be a 64-bit unsigned integer")
        if self.epsilon is None:
            if self.rho is None or self.rho_prime is None:
                raise ValueError("epsilon must be given explicitly or derived from (rho, rho_prime)")
            object.__setattr__(self, "epsilon", choose_epsilon(self.rho, self.rho_prime).epsilon)
        epsilon = float(self.epsilon)
        if not 0 < epsilon < 1:
            raise ValueError("epsilon must lie in (0, 1)")
        object.__setattr__(self, "epsilon", epsilon)
        if self.rho is not None and self.rho_prime is not None:
            fe = Fraction(epsilon)
            if (1 + fe) / (1 - fe) ** 2 * self.rho > self.rho_prime:
                raise ValueError("epsilon amplifies rho beyond rho_prime")


@dataclass(eq=False)
class KeepMask:
    """Realized keep/drop bits, one per coefficient index 0..N."""

    bits: np.ndarray

    def __post_init__(self) -> None:
        arr = np.asarray(self.bits, dtype=np.uint8)
        if arr.ndim != 1 or arr.size == 0:
            raise ValueError("mask must be a nonempty one-dimensional sequence")
        if not np.isin(arr, (0, 1)).all():
            raise ValueError("mask bits must all be 0 or 1")
        arr.setflags(write=False)
        self.bits = arr

    def __len__(self) -> int:
        return len(self.bits)

    def same_as(self, other: "KeepMask") -> bool:
        return self.bits.shape == other.bits.shape and bool((self.bits == other.bits).all())


@dataclass(frozen=True)
class BadEventFlags:
    """Outcome flags for one trial.

    `E`: kept mass fell below (1-eps) of its expectation.
    `E_k_indices`: every k whose squared coefficient overshot the height
    budget (1+eps)*alpha**2*height(p**2); `E_k_any` mirrors nonemptiness.
    `D`: degree of q collapsed to at most (c0/2)*N.
    `l1_deviation`: two-sided diagnostic |mass - alpha*l1(p)| > eps*alpha*l1(p);
    reported separately because `E` itself is one-sided.
    """

    E: bool
    E_k_any: bool
    E_k_indices: tuple[int, ...]
    D: bool
    l1_deviation: bool

    def __post_init__(self) -> None:
        if self.E_k_any != bool(self.E_k_indices):
            raise ValueError("E_k_any must mirror nonemptiness of E_k_indices")

    @property
    def clean(self) -> bool:
        return not (self.E or self.E_k_any or self.D)


@dataclass(eq=False)
class SparsifyTrial:
    """One realized thinning: the mask, the surviving polynomial's metrics, flags."""

    mask: KeepMask
    q_metrics: Optional[RatioReport]
    q_degree: Optional[int]
    flags: BadEventFlags
    trial_seed: int

    def __post_init__(self) -> None:
        if (self.q_metrics is None) != (self.q_degree is None):
            raise ValueError("q_metrics and q_degree must be absent together")

    @property
    def is_empty(self) -> bool:
        return self.q_metrics is None


@dataclass(frozen=True)
class CoefficientSplit:
    """One squared coefficient split into independent-sum parts.

    Odd k: `first` covers j = 0..floor(k/2), `second` the mirrored upper
    range, `diagonal` is 0.  Even k: the two halves exclude j = k/2, whose
    kept term is `diagonal`.  `theta` is the expectation correction
    alpha*(1-alpha)*p_{k/2}**2 when alpha is known (0 otherwise).
    """

    k: int
    parity: str
    first: int
    second: int
    diagonal: int
    theta: Union[Fraction, float]

    @property
    def total(self) -> int:
        return self.first + self.second + self.diagonal


@dataclass(frozen=True)
class CaseLabel:
    """Which halves of a squared coefficient have small expectation.

    Label `a`: both half-sum means are at most the threshold N**alpha_exponent
    (equal to 1/alpha); `b`: exactly one; `c`: neither.
    """

    k: int
    label: str
    means: tuple
    threshold: Union[Fraction, float]


@dataclass(frozen=True)
class ExclusionThreshold:
    """Least scale beyond which small-mean coefficients cannot overshoot.

    `capped` is set when no scale below the search cap satisfies the
    inequality (then `n` is the cap itself).
    """

    n: int
    capped: bool


@dataclass(frozen=True)
class ConclusionReport:
    """Exact check of the amplified-product inequality on a clean trial."""

    holds: bool
    q_product: Fraction
    p_product: Fraction
    amplification: Fraction
    amplified_p_product: Fraction
    q_l1: int
    sparsity_reference: float  # (1-eps) * N**(1 - alpha_exponent)
    q_degree: int
    degree_floor: Fraction  # (c0/2) * N


def expected_l1(p: NewmanPolynomial, alpha: Probability) -> Probability:
    """Mean kept mass alpha * l1(p), exact when alpha is rational."""
    return alpha * p.l1


def expected_square_coeff(
    p: NewmanPolynomial,
    alpha: Probability,
    k: int,
    square_coeffs: Optional[SquareCoefficients] = None,
) -> tuple[Probability, Probability]:
    """Mean of the k-th squared coefficient of the thinned polynomial.

    Returns (value, theta): for odd k the value is alpha**2 * (p**2)_k and
    theta is 0; for even k the diagonal term contributes the correction
    theta = alpha*(1-alpha)*p_{k/2}**2 on top of alpha**2 * (p**2)_k.
    """
    if not 0 <= k <= 2 * p.degree:
        raise ValueError(f"k must lie in 0..{2 * p.degree}")
    sq = square(p) if square_coeffs is None else square_coeffs
    base = alpha * alpha * sq[k]
    if k % 2 == 1:
        return base, alpha * 0
    theta = alpha * (1 - alpha) * int(p.coefficients[k // 2]) ** 2
    return base + theta, theta


@lru_cache(maxsize=8)
def _mask_enumeration_tables(p: NewmanPolynomial) -> tuple[tuple[tuple[int, ...], ...], tuple[int, ...]]:
    """Literal enumeration of all 2**(N+1) masks.

    Returns (S, L) where S[k][w] sums the k-th squared coefficient over all
    masks of weight w, and L[w] sums the kept mass over the same masks.
    Exponentially slow by design; capped at degree 20.
    """
    n = p.degree + 1
    if p.degree > _ENUMERATION_DEGREE_CAP:
        raise ValueError(f"mask enumeration capped at degree {_ENUMERATION_DEGREE_CAP}")
    sup = p.support.tolist()
    S = [[0] * (n + 1) for _ in range(2 * p.degree + 1)]
    L = [0] * (n + 1)
    for m in range(1 << n):
        w = m.bit_count()
        kept = [j for j in sup if (m >> j) & 1]
        L[w] += len(kept)
        for a in kept:
            for b in kept:
                S[a + b][w] += 1
    return tuple(tuple(row) for row in S), tuple(L)


def _weight_probabilities(n_positions: int, alpha: Fraction) -> list[Fraction]:
    fa = Fraction(alpha)
    return [fa ** w * (1 - fa) ** (n_positions - w) for w in range(n_positions + 1)]


def expectation_oracle(p: NewmanPolynomial, alpha: Fraction, k: int) -> Fraction:
    """Exact E[(q**2)_k] by summing probability * coefficient over every mask."""
    if not 0 <= k <= 2 * p.degree:
        raise ValueError(f"k must lie in 0..{2 * p.degree}")
    S, _ = _mask_enumeration_tables(p)
    pw = _weight_probabilities(p.degree + 1, alpha)
    return sum((pw[w] * count for w, count in enumerate(S[k]) if count), Fraction(0))


def expectation_oracle_all(p: NewmanPolynomial, alpha: Fraction) -> list[Fraction]:
    """Exact E[(q**2)_k] for every k at once (same enumeration as the oracle)."""
    S, _ = _mask_enumeration_tables(p)
    pw = _weight_probabilities(p.degree + 1, alpha)
    return [
        sum((pw[w] * count for w, count in enumerate(row) if count), Fraction(0))
        for row in S
    ]


def expected_l1_oracle(p: NewmanPolynomial, alpha: Fraction) -> Fraction:
    """Exact E[kept mass] by full mask enumeration."""
    _, L = _mask_enumeration_tables(p)
    pw = _weight_probabilities(p.degree + 1, alpha)
    return sum((pw[w] * count for w, count in enumerate(L) if count), Fraction(0))


def split_coefficient(
    p: NewmanPolynomial,
    mask: KeepMask,
    k: int,
    alpha: Optional[Probability] = None,
) -> CoefficientSplit:
    """Split the realized k-th squared coefficient into its independent parts."""
    N = p.degree
    if not 0 <= k <= 2 * N:
        raise ValueError(f"k must lie in 0..{2 * N}")
    if len(mask) != N + 1:
        raise ValueError("mask length must equal degree + 1")
    c = p.coefficients
    bits = mask.bits

    def kept_product(j: int) -> int:
        jj = k - j
        if j > N or jj < 0 or jj > N:
            return 0
        return int(bits[j]) * int(c[j]) * int(bits[jj]) * int(c[jj])

    if k % 2 == 1:
        half = k // 2
        first = sum(kept_product(j) for j in range(0, half + 1))
        second = sum(kept_product(j) for j in range(half + 1, k + 1))
        return CoefficientSplit(k=k, parity="odd", first=first, second=second,
                                diagonal=0, theta=Fraction(0))
    half = k // 2
    first = sum(kept_product(j) for j in range(0, half))
    second = sum(kept_product(j) for j in range(half + 1, k + 1))
    diagonal = int(bits[half]) * int(c[half]) if half <= N else 0
    if alpha is None:
        theta: Probability = Fraction(0)
    else:
        theta = alpha * (1 - alpha) * (int(c[half]) ** 2 if half <= N else 0)
    return CoefficientSplit(k=k, parity="even", first=first, second=second,
                            diagonal=diagonal, theta=theta)


def classify_case(p: NewmanPolynomial, alpha: Probability, k: int) -> CaseLabel:
    """Group the two halves of coefficient k by whether their mean is small.

    The half-sum means are alpha**2 times the unit-product counts of each
    half-range; the even diagonal term belongs to neither half.  The
    grouping threshold is 1/alpha, i.e. N**alpha_exponent.
    """
    N = p.degree
    if not 0 <= k <= 2 * N:
        raise ValueError(f"k must lie in 0..{2 * N}")
    c = p.coefficients

    def unit(j: int) -> int:
        jj = k - j
        if j > N or jj < 0 or jj > N:
            return 0
        return int(c[j]) * int(c[jj])

    if k % 2 == 1:
        half = k // 2
        count_first = sum(unit(j) for j in range(0, half + 1))
        count_second = sum(unit(j) for j in range(half + 1, k + 1))
    else:
        half = k // 2
        count_first = sum(unit(j) for j in range(0, half))
        count_second = sum(unit(j) for j in range(half + 1, k + 1))
    mean_first = alpha * alpha * count_first
    mean_second = alpha * alpha * count_second
    threshold = Fraction(1) / alpha if isinstance(alpha, Fraction) else 1.0 / alpha
    small_first = mean_first <= threshold
    small_second = mean_second <= threshold
    if small_first and small_second:
        label = "a"
    elif small_first or small_second:
        label = "b"
    else:
        label = "c"
    return CaseLabel(k=k, label=label, means=(mean_first, mean_second), threshold=threshold)


def case_a_exclusion_threshold(
    c0: Fraction,
    epsilon: float,
    alpha_exponent: Fraction,
    cap: int = 10 ** 12,
) -> ExclusionThreshold:
    """Least N with 2*N**(3e) + 1 < (1+eps) * (c0**2/3) * N**(1-2e).

    Beyond this scale a coefficient whose two half-sums both have small
    mean can never overshoot the height budget: each half is then at most
    N**(3e) while the budget grows like N**(1-2e) thanks to the height
    floor c0**2*N**2/(2N+1) >= (c0**2/3)*N.  Returns the cap with a flag
    when no such N exists below it (e.g. for alpha_exponent >= 1/5).
    """
    c0 = Fraction(c0)
    if not 0 < c0 <= 1:
        raise ValueError("c0 must lie in (0, 1]")
    if not 0 < Fraction(alpha_exponent) < 1:
        raise ValueError("alpha_exponent must lie in (0, 1)")
    if not epsilon > 0:
        raise ValueError("epsilon must be positive")
    e = float(Fraction(alpha_exponent))
    amplitude = (1.0 + epsilon) * float(c0) ** 2 / 3.0

    def satisfied(n: int) -> bool:
        return 2.0 * n ** (3.0 * e) + 1.0 < amplitude * n ** (1.0 - 2.0 * e)

    hi = 1
    while hi <= cap and not satisfied(hi):
        hi *= 2
    if hi > cap:
        return ExclusionThreshold(n=cap, capped=True)
    lo = hi // 2  # satisfied(lo) is False (or lo == 0)
    while hi - lo > 1:
        mid = (lo + hi) // 2
        if satisfied(mid):
            hi = mid
        else:
            lo = mid
    return ExclusionThreshold(n=hi, capped=False)


# ---------------------------------------------------------------------------
# Trials.


def _exact_thresholds(
    p: NewmanPolynomial, config: SparsifyConfig, p_square_height: int
) -> tuple[Probability, Fraction, Fraction, int, Fraction]:
    """(alpha, exact alpha, low-mass cutoff, integer height cutoff, degree cutoff)."""
    alpha = alpha_of(p.degree, config.alpha_exponent)
    fa = Fraction(alpha)
    fe = Fraction(config.epsilon)
    l1_cutoff = (1 - fe) * fa * p.l1
    height_cutoff = math.floor((1 + fe) * fa * fa * p_square_height)
    degree_cutoff = Fraction(config.c0, 2) * p.degree
    return alpha, fa, l1_cutoff, height_cutoff, degree_cutoff


def _flags_for(
    p: NewmanPolynomial,
    config: SparsifyConfig,
    p_square_height: int,
    q_l1: int,
    q_degree: Optional[int],
    q_square: Optional[SquareCoefficients],
) -> BadEventFlags:
    _, fa, l1_cutoff, height_cutoff, degree_cutoff = _exact_thresholds(p, config, p_square_height)
    fe = Fraction(config.epsilon)
    expected_mass = fa * p.l1
    low_mass = Fraction(q_l1) < l1_cutoff
    deviated = abs(Fraction(q_l1) - expected_mass) > fe * expected_mass
    if q_square is None:
        indices: tuple[int, ...] = ()
    else:
        overs = np.flatnonzero(q_square.coefficients > height_cutoff)
        indices = tuple(int(k) for k in overs)
    collapsed = q_degree is None or Fraction(q_degree) <= degree_cutoff
    return BadEventFlags(
        E=low_mass,
        E_k_any=bool(indices),
        E_k_indices=indices,
        D=collapsed,
        l1_deviation=deviated,
    )


def sample(
    p: NewmanPolynomial,
    config: SparsifyConfig,
    trial_index: int,
    p_square_height: Optional[int] = None,
) -> SparsifyTrial:
    """Run one reproducible thinning trial.

    The mask is drawn from a stream derived from (config.seed, trial_index)
    only, so identical inputs reproduce the identical trial regardless of
    how trials are scheduled across workers.  Pass the precomputed height
    of p**2 when running many trials against the same p.
    """
    if trial_index < 0:
        raise ValueError("trial_index must be nonnegative")
    if p_square_height is None:
        p_square_height = square(p).height
    seed_seq = np.random.SeedSequence([int(config.seed), int(trial_index)])
    trial_seed = int(seed_seq.generate_state(1, np.uint64)[0])
    rng = np.random.Generator(np.random.PCG64(seed_seq))
    alpha = alpha_of(p.degree, config.alpha_exponent)
    bits = (rng.random(p.degree + 1) < float(alpha)).astype(np.uint8)
    mask = KeepMask(bits)
    kept = p.support[bits[p.support] == 1]
    if kept.size == 0:
        flags = _flags_for(p, config, p_square_height, 0, None, None)
        return SparsifyTrial(mask=mask, q_metrics=None, q_degree=None,
                             flags=flags, trial_seed=trial_seed)
    q = NewmanPolynomial((p.coefficients & bits)[: int(kept[-1]) + 1])
    q_square = square(q)
    flags = _flags_for(p, config, p_square_height, q.l1, q.degree, q_square)
    report = ratio_report(q.l1, q.degree, q_square.height)
    return SparsifyTrial(mask=mask, q_metrics=report, q_degree=q.degree,
                         flags=flags, trial_seed=trial_seed)


def detect_bad_events(
    p: NewmanPolynomial,
    trial: SparsifyTrial,
    config: SparsifyConfig,
    p_square_height: Optional[int] = None,
) -> BadEventFlags:
    """Recompute the flags of a trial from its mask (exact, side-effect free)."""
    if len(trial.mask) != p.degree + 1:
        raise ValueError("mask length does not match polynomial degree")
    if p_square_height is None:
        p_square_height = square(p).height
    kept = p.support[trial.mask.bits[p.support] == 1]
    if kept.size == 0:
        return _flags_for(p, config, p_square_height, 0, None, None)
    q = NewmanPolynomial((p.coefficients & trial.mask.bits)[: int(kept[-1]) + 1])
    return _flags_for(p, config, p_square_height, q.l1, q.degree, square(q))


def theorem_conclusion_check(
    p: NewmanPolynomial,
    trial: SparsifyTrial,
    config: SparsifyConfig,
    p_metrics: Optional[RatioReport] = None,
) -> ConclusionReport:
    """Exact amplified-product check for a clean trial.

    Requires a trial with a surviving polynomial and no bad events; verifies
    ratio(q)*deg(q) <= (1+eps)/(1-eps)**2 * ratio(p)*deg(p) in rational
    arithmetic and reports the mass and degree against their references.
    """
    if trial.is_empty:
        raise ValueError("trial produced the empty polynomial")
    if not trial.flags.clean:
        raise ValueError("trial has bad events; the conclusion check does not apply")
    if p_metrics is None:
        p_metrics = metrics(p)
    fe = Fraction(config.epsilon)
    amplification = (1 + fe) / (1 - fe) ** 2
    amplified = amplification * p_metrics.product
    q_report = trial.q_metrics
    assert q_report is not None
    sparsity_reference = float(1 - fe) * p.degree ** float(1 - config.alpha_exponent)
    return ConclusionReport(
        holds=q_report.product <= amplified,
        q_product=q_report.product,
        p_product=p_metrics.product,
        amplification=amplification,
        amplified_p_product=amplified,
        q_l1=q_report.l1,
        sparsity_reference=sparsity_reference,
        q_degree=q_report.degree,
        degree_floor=Fraction(config.c0, 2) * p.degree,
    )
