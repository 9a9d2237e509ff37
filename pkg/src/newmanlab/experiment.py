"""Reproducible experiment campaigns over a ladder of degrees.

A campaign builds one dense polynomial per ladder degree, runs a fixed
number of seeded thinning trials against it, tallies bad-event frequencies
next to the predicted tail bounds, and writes flat deterministic artifacts:
a summary table, per-degree trial tables, and a manifest recording the RNG
algorithm, master seed and config digest.  Identical configs produce
byte-identical files, whatever the worker count.
"""

from __future__ import annotations

import hashlib
import json
import os
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from fractions import Fraction
from typing import Optional

import numpy as np

from . import __version__
from .concentration import bad_event_E_bound
from .poly import NewmanPolynomial, parse_polynomial, square
from .search import SearchSpec, exhaustive_search
from .sparsify import RNG_ALGORITHM, SparsifyConfig, SparsifyTrial, alpha_of, sample

__all__ = [
    "TRIAL_COLUMNS",
    "SUMMARY_COLUMNS",
    "MEAN_PROXY_DEN",
    "CampaignConfig",
    "TrialRecord",
    "DegreeSummary",
    "CampaignSummary",
    "record_from_trial",
    "parse_campaign_file",
    "run_campaign",
    "emit_results",
]

TRIAL_COLUMNS = [
    "trial_index", "seed", "l1_q", "deg_q", "height_q2",
    "ratio_num", "ratio_den", "product_num", "product_den",
    "flag_E", "flag_D", "num_Ek", "first_Ek_index",
]
SUMMARY_COLUMNS = [
    "degree", "alpha", "epsilon", "trials",
    "freq_E", "freq_Ek", "freq_D", "freq_clean",
    "mean_product_num", "mean_product_den_proxy",
    "bound_E_raw", "bound_E_clamped",
]
# Exact product means are emitted as round(mean * 10**12) / 10**12.
MEAN_PROXY_DEN = 10 ** 12

_FAMILIES = ("all_ones", "from_file", "search_best")
_FORMATS = ("csv", "json")


@dataclass(frozen=True)
class CampaignConfig:
    family: str
    degree_ladder: tuple[int, ...]
    trials_per_degree: int
    alpha_exponent: Fraction = Fraction(1, 10)
    epsilon: Optional[float] = None
    rho: Optional[Fraction] = None
    rho_prime: Optional[Fraction] = None
    c0: Fraction = Fraction(1)
    seed: int = 0
    output_dir: str = "results"
    format: str = "csv"
    family_file: Optional[str] = None

    def __post_init__(self) -> None:
        object.__setattr__(self, "degree_ladder", tuple(int(n) for n in self.degree_ladder))
        object.__setattr__(self, "alpha_exponent", Fraction(self.alpha_exponent))
        object.__setattr__(self, "c0", Fraction(self.c0))
        if self.rho is not None:
            object.__setattr__(self, "rho", Fraction(self.rho))
        if self.rho_prime is not None:
            object.__setattr__(self, "rho_prime", Fraction(self.rho_prime))
        if self.family not in _FAMILIES:
            raise ValueError(f"family must be one of {_FAMILIES}")
        if self.format not in _FORMATS:
            raise ValueError(f"format must be one of {_FORMATS}")
        if any(b <= a for a, b in zip(self.degree_ladder, self.degree_ladder[1:])):
            raise ValueError("degree ladder must be strictly increasing")
        if self.degree_ladder and self.trials_per_degree < 1:
            raise ValueError("trials_per_degree must be at least 1")
        if self.family == "from_file" and not self.family_file:
            raise ValueError("from_file family needs family_file")

    def sparsify_config(self) -> SparsifyConfig:
        return SparsifyConfig(
            alpha_exponent=self.alpha_exponent,
            epsilon=self.epsilon,
            c0=self.c0,
            rho=self.rho,
            rho_prime=self.rho_prime,
            seed=self.seed,
        )

    def canonical_dict(self) -> dict:
        """Stable JSON-ready form used for hashing and the manifest."""
        return {
            "family": self.family,
            "family_file": self.family_file,
            "degree_ladder": list(self.degree_ladder),
            "trials_per_degree": self.trials_per_degree,
            "alpha_exponent": str(self.alpha_exponent),
            "epsilon": repr(self.epsilon) if self.epsilon is not None else None,
            "rho": str(self.rho) if self.rho is not None else None,
            "rho_prime": str(self.rho_prime) if self.rho_prime is not None else None,
            "c0": str(self.c0),
            "seed": self.seed,
            "format": self.format,
        }

    def sha256(self) -> str:
        blob = json.dumps(self.canonical_dict(), sort_keys=True).encode()
        return hashlib.sha256(blob).hexdigest()


@dataclass(frozen=True)
class TrialRecord:
    """Per-trial row; rationals kept exact, mask dropped."""

    trial_index: int
    trial_seed: int
    l1_q: int
    deg_q: Optional[int]
    height_q2: Optional[int]
    ratio: Optional[Fraction]
    product: Optional[Fraction]
    flag_E: bool
    flag_D: bool
    num_Ek: int
    first_Ek_index: Optional[int]

    @property
    def successful(self) -> bool:
        return self.l1_q > 0

    @property
    def clean(self) -> bool:
        return not (self.flag_E or self.flag_D or self.num_Ek > 0)

    def to_csv_row(self) -> list[str]:
        def opt(v) -> str:
            return "" if v is None else str(v)

        return [
            str(self.trial_index), str(self.trial_seed), str(self.l1_q),
            opt(self.deg_q), opt(self.height_q2),
            opt(None if self.ratio is None else self.ratio.numerator),
            opt(None if self.ratio is None else self.ratio.denominator),
            opt(None if self.product is None else self.product.numerator),
            opt(None if self.product is None else self.product.denominator),
            str(int(self.flag_E)), str(int(self.flag_D)),
            str(self.num_Ek), opt(self.first_Ek_index),
        ]


@dataclass(frozen=True)
class DegreeSummary:
    degree: int
    alpha: float
    epsilon: float
    trials: int
    count_E: int
    count_Ek: int
    count_D: int
    count_clean: int
    count_successful: int
    l1_min: Optional[int]
    l1_max: Optional[int]
    l1_mean: Optional[Fraction]
    deg_min: Optional[int]
    deg_max: Optional[int]
    deg_mean: Optional[Fraction]
    product_min: Optional[Fraction]
    product_max: Optional[Fraction]
    product_mean: Optional[Fraction]
    bound_E_raw: float
    bound_E_clamped: float

    @property
    def freq_E(self) -> float:
        return self.count_E / self.trials

    @property
    def freq_Ek(self) -> float:
        return self.count_Ek / self.trials

    @property
    def freq_D(self) -> float:
        return self.count_D / self.trials

    @property
    def freq_clean(self) -> float:
        return self.count_clean / self.trials

    def mean_product_proxy(self) -> Optional[int]:
        if self.product_mean is None:
            return None
        return round(self.product_mean * MEAN_PROXY_DEN)

    def to_csv_row(self) -> list[str]:
        proxy = self.mean_product_proxy()
        return [
            str(self.degree), repr(self.alpha), repr(self.epsilon), str(self.trials),
            repr(self.freq_E), repr(self.freq_Ek), repr(self.freq_D), repr(self.freq_clean),
            "" if proxy is None else str(proxy),
            "" if proxy is None else str(MEAN_PROXY_DEN),
            repr(self.bound_E_raw), repr(self.bound_E_clamped),
        ]

    def to_json_dict(self) -> dict:
        def frac12(v: Optional[Fraction]) -> Optional[str]:
            if v is None:
                return None
            return f"{float(v):.12f}"

        proxy = self.mean_product_proxy()
        return {
            "degree": self.degree,
            "alpha": self.alpha,
            "epsilon": self.epsilon,
            "trials": self.trials,
            "freq_E": self.freq_E,
            "freq_Ek": self.freq_Ek,
            "freq_D": self.freq_D,
            "freq_clean": self.freq_clean,
            "mean_product_num": proxy,
            "mean_product_den_proxy": None if proxy is None else MEAN_PROXY_DEN,
            "bound_E_raw": self.bound_E_raw,
            "bound_E_clamped": self.bound_E_clamped,
            "successful_trials": self.count_successful,
            "l1": {"mean": frac12(self.l1_mean), "min": self.l1_min, "max": self.l1_max},
            "deg": {"mean": frac12(self.deg_mean), "min": self.deg_min, "max": self.deg_max},
            "product": {
                "mean": frac12(self.product_mean),
                "min": None if self.product_min is None else [self.product_min.numerator, self.product_min.denominator],
                "max": None if self.product_max is None else [self.product_max.numerator, self.product_max.denominator],
            },
        }


@dataclass
class CampaignSummary:
    config: CampaignConfig
    epsilon: float
    degrees: list[DegreeSummary] = field(default_factory=list)
    trials: dict[int, list[TrialRecord]] = field(default_factory=dict)
    rng_algorithm: str = RNG_ALGORITHM

    @property
    def master_seed(self) -> int:
        return self.config.seed


def parse_campaign_file(path: str) -> CampaignConfig:
    """Read a campaign config from a `key = value` text file.

    Lists are comma separated; `#` starts a comment.  Unknown keys are
    rejected so typos fail loudly.
    """
    values: dict[str, str] = {}
    with open(path, "r", encoding="utf-8") as handle:
        for lineno, raw in enumerate(handle, 1):
            line = raw.split("#", 1)[0].strip()
            if not line:
                continue
            if "=" not in line:
                raise ValueError(f"{path}:{lineno}: expected key = value")
            key, _, val = line.partition("=")
            values[key.strip()] = val.strip()
    known = {
        "family", "family_file", "degree_ladder", "trials_per_degree",
        "alpha_exponent", "epsilon", "rho", "rho_prime", "c0", "seed",
        "output_dir", "format",
    }
    unknown = set(values) - known
    if unknown:
        raise ValueError(f"unknown config keys: {sorted(unknown)}")
    if "family" not in values or "degree_ladder" not in values or "trials_per_degree" not in values:
        raise ValueError("config needs family, degree_ladder and trials_per_degree")
    ladder = tuple(
        int(tok.strip()) for tok in values["degree_ladder"].split(",") if tok.strip()
    )
    return CampaignConfig(
        family=values["family"],
        degree_ladder=ladder,
        trials_per_degree=int(values["trials_per_degree"]),
        alpha_exponent=Fraction(values.get("alpha_exponent", "1/10")),
        epsilon=float(values["epsilon"]) if "epsilon" in values else None,
        rho=Fraction(values["rho"]) if "rho" in values else None,
        rho_prime=Fraction(values["rho_prime"]) if "rho_prime" in values else None,
        c0=Fraction(values.get("c0", "1")),
        seed=int(values.get("seed", "0")),
        output_dir=values.get("output_dir", "results"),
        format=values.get("format", "csv"),
        family_file=values.get("family_file"),
    )


def _family_polynomial(config: CampaignConfig, degree: int) -> NewmanPolynomial:
    if config.family == "all_ones":
        return NewmanPolynomial.all_ones(degree)
    if config.family == "from_file":
        assert config.family_file is not None
        with open(config.family_file, "r", encoding="utf-8") as handle:
            for raw in handle:
                line = raw.split("#", 1)[0].strip()
                if not line:
                    continue
                p = parse_polynomial(line, "exponent_list")
                if p.degree == degree:
                    return p
        raise ValueError(f"no polynomial of degree {degree} in {config.family_file}")
    spec = SearchSpec(min_degree=degree, max_degree=degree,
                      density_floor=config.c0, seed=config.seed)
    return exhaustive_search(spec).best


def record_from_trial(trial_index: int, trial: SparsifyTrial) -> TrialRecord:
    flags = trial.flags
    if trial.q_metrics is None:
        return TrialRecord(
            trial_index=trial_index, trial_seed=trial.trial_seed, l1_q=0,
            deg_q=None, height_q2=None, ratio=None, product=None,
            flag_E=flags.E, flag_D=flags.D,
            num_Ek=len(flags.E_k_indices),
            first_Ek_index=flags.E_k_indices[0] if flags.E_k_indices else None,
        )
    rep = trial.q_metrics
    return TrialRecord(
        trial_index=trial_index, trial_seed=trial.trial_seed, l1_q=rep.l1,
        deg_q=rep.degree, height_q2=rep.height, ratio=rep.ratio, product=rep.product,
        flag_E=flags.E, flag_D=flags.D,
        num_Ek=len(flags.E_k_indices),
        first_Ek_index=flags.E_k_indices[0] if flags.E_k_indices else None,
    )


def _trial_chunk(
    support_bytes: bytes,
    degree: int,
    scfg: SparsifyConfig,
    p_square_height: int,
    lo: int,
    hi: int,
) -> list[TrialRecord]:
    support = np.frombuffer(support_bytes, dtype=np.int64)
    p = NewmanPolynomial.from_support(support.tolist())
    assert p.degree == degree
    return [
        record_from_trial(t, sample(p, scfg, t, p_square_height=p_square_height))
        for t in range(lo, hi)
    ]


def _run_degree(
    p: NewmanPolynomial,
    scfg: SparsifyConfig,
    trials: int,
    p_square_height: int,
    workers: int,
) -> list[TrialRecord]:
    if workers <= 1 or trials < 2 * workers:
        return [
            record_from_trial(t, sample(p, scfg, t, p_square_height=p_square_height))
            for t in range(trials)
        ]
    support_bytes = p.support.astype(np.int64).tobytes()
    bounds = np.linspace(0, trials, workers + 1, dtype=int).tolist()
    chunks = [(lo, hi) for lo, hi in zip(bounds, bounds[1:]) if hi > lo]
    records: list[TrialRecord] = []
    with ProcessPoolExecutor(max_workers=workers) as pool:
        futures = [
            pool.submit(_trial_chunk, support_bytes, p.degree, scfg,
                        p_square_height, lo, hi)
            for lo, hi in chunks
        ]
        for future in futures:
            records.extend(future.result())
    records.sort(key=lambda r: r.trial_index)
    return records


def _summarize_degree(
    degree: int,
    alpha,
    config: CampaignConfig,
    epsilon: float,
    records: list[TrialRecord],
) -> DegreeSummary:
    trials = len(records)
    successes = [r for r in records if r.successful]
    bound = bad_event_E_bound(degree, config.c0, epsilon, config.alpha_exponent)

    def agg(values):
        if not values:
            return None, None, None
        total = sum(values, Fraction(0)) if isinstance(values[0], Fraction) else sum(values)
        return min(values), max(values), Fraction(total, len(values))

    l1_min, l1_max, l1_mean = agg([r.l1_q for r in successes])
    deg_min, deg_max, deg_mean = agg([r.deg_q for r in successes])
    prod_min, prod_max, prod_mean = agg([r.product for r in successes])
    return DegreeSummary(
        degree=degree,
        alpha=float(alpha),
        epsilon=epsilon,
        trials=trials,
        count_E=sum(r.flag_E for r in records),
        count_Ek=sum(r.num_Ek > 0 for r in records),
        count_D=sum(r.flag_D for r in records),
        count_clean=sum(r.clean for r in records),
        count_successful=len(successes),
        l1_min=l1_min, l1_max=l1_max, l1_mean=l1_mean,
        deg_min=deg_min, deg_max=deg_max, deg_mean=deg_mean,
        product_min=prod_min, product_max=prod_max, product_mean=prod_mean,
        bound_E_raw=bound.raw,
        bound_E_clamped=bound.clamped,
    )


def run_campaign(config: CampaignConfig, workers: int = 1) -> CampaignSummary:
    """Run every ladder degree and aggregate; reproducible from (config, seed)."""
    scfg = config.sparsify_config()
    epsilon = float(scfg.epsilon)
    summary = CampaignSummary(config=config, epsilon=epsilon)
    for degree in config.degree_ladder:
        p = _family_polynomial(config, degree)
        p_height = square(p).height
        alpha = alpha_of(p.degree, config.alpha_exponent)
        records = _run_degree(p, scfg, config.trials_per_degree, p_height, workers)
        summary.trials[degree] = records
        summary.degrees.append(
            _summarize_degree(degree, alpha, config, epsilon, records)
        )
    return summary


def _write_text(path: str, text: str) -> None:
    with open(path, "w", encoding="utf-8", newline="") as handle:
        handle.write(text)


def _csv_text(header: list[str], rows: list[list[str]]) -> str:
    lines = [",".join(header)]
    lines.extend(",".join(row) for row in rows)
    return "\n".join(lines) + "\n"


def emit_results(
    summary: CampaignSummary,
    format: Optional[str] = None,
    output_dir: Optional[str] = None,
) -> dict[str, str]:
    """Write summary, per-degree trial tables and the manifest; returns paths.

    Output is deterministic: fixed column orders, shortest-round-trip float
    formatting, LF newlines, and no timestamps.
    """
    fmt = summary.config.format if format is None else format
    if fmt not in _FORMATS:
        raise ValueError(f"format must be one of {_FORMATS}")
    out_dir = summary.config.output_dir if output_dir is None else output_dir
    os.makedirs(out_dir, exist_ok=True)
    paths: dict[str, str] = {}

    if fmt == "csv":
        summary_name = "summary.csv"
        summary_text = _csv_text(
            SUMMARY_COLUMNS, [row.to_csv_row() for row in summary.degrees]
        )
    else:
        summary_name = "summary.json"
        summary_text = json.dumps(
            [row.to_json_dict() for row in summary.degrees], indent=2
        ) + "\n"
    summary_path = os.path.join(out_dir, summary_name)
    _write_text(summary_path, summary_text)
    paths["summary"] = summary_path

    trial_files: dict[str, str] = {}
    for degree in summary.config.degree_ladder:
        records = summary.trials.get(degree, [])
        if fmt == "csv":
            name = f"trials_degree_{degree}.csv"
            text = _csv_text(TRIAL_COLUMNS, [r.to_csv_row() for r in records])
        else:
            name = f"trials_degree_{degree}.json"
            text = json.dumps(
                [dict(zip(TRIAL_COLUMNS, r.to_csv_row())) for r in records],
                indent=2,
            ) + "\n"
        path = os.path.join(out_dir, name)
        _write_text(path, text)
        trial_files[str(degree)] = name
    paths["trials"] = out_dir

    manifest = {
        "artifact": "newmanlab",
        "version": __version__,
        "rng_algorithm": summary.rng_algorithm,
        "master_seed": summary.master_seed,
        "epsilon": repr(summary.epsilon),
        "config": summary.config.canonical_dict(),
        "config_sha256": summary.config.sha256(),
        "summary_file": summary_name,
        "trial_files": trial_files,
        "summary_columns": SUMMARY_COLUMNS,
        "trial_columns": TRIAL_COLUMNS,
        "mean_product_den_proxy": MEAN_PROXY_DEN,
    }
    manifest_path = os.path.join(out_dir, "manifest.json")
    _write_text(manifest_path, json.dumps(manifest, indent=2, sort_keys=True) + "\n")
    paths["manifest"] = manifest_path
    return paths
