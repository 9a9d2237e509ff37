"""Tail bounds for sums of independent indicator variables.

Provides the explicit exponent c(eps), the two-sided tail bound
2*exp(-c(eps)*mean), the specialization of that bound to the thinned-mass
event driven by N**(1 - exponent), and the rule that picks the largest
deviation parameter compatible with a target amplification of the ratio
product.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from fractions import Fraction

__all__ = [
    "ConcentrationQuery",
    "TailBound",
    "EpsilonChoice",
    "c_epsilon",
    "tail_bound",
    "bad_event_E_bound",
    "choose_epsilon",
]

# Below this, (1+e)*log1p(e) - e loses too many digits; use the cubic series.
_SERIES_CUTOFF = 1e-4


def c_epsilon(epsilon: float) -> float:
    """Tail exponent min{(1+e)*ln(1+e) - e, e**2/2}.

    The first branch is the stable rewrite of -log(exp(e) * (1+e)**-(1+e));
    for tiny e it is evaluated as e**2/2 - e**3/6 so the minimum is not lost
    to cancellation.
    """
    e = float(epsilon)
    if not e > 0.0:
        raise ValueError("epsilon must be positive")
    if e < _SERIES_CUTOFF:
        first = e * e / 2.0 - e ** 3 / 6.0
    else:
        first = (1.0 + e) * math.log1p(e) - e
    return min(first, e * e / 2.0)


@dataclass(frozen=True)
class ConcentrationQuery:
    """Deviation parameter and the mean of the indicator sum being bounded."""

    epsilon: float
    mean: float

    def __post_init__(self) -> None:
        if not self.epsilon > 0:
            raise ValueError("epsilon must be positive")
        if self.mean < 0:
            raise ValueError("mean must be nonnegative")


@dataclass(frozen=True)
class TailBound:
    """A probability bound, both as computed and clamped into [0, 1]."""

    raw: float
    clamped: float


def tail_bound(query: ConcentrationQuery) -> TailBound:
    """Two-sided bound 2*exp(-c(eps)*mean) on P{|X - EX| > eps*EX}.

    Values above 1 are vacuous; the raw number is kept so callers can see
    how far from useful the bound is.
    """
    raw = 2.0 * math.exp(-c_epsilon(query.epsilon) * query.mean)
    return TailBound(raw=raw, clamped=min(1.0, raw))


def bad_event_E_bound(
    N: int,
    c0: Fraction | float,
    epsilon: float,
    alpha_exponent: Fraction | float,
) -> TailBound:
    """Bound 2*exp(-c(eps) * c0 * N**(1 - alpha_exponent)) on the low-mass event.

    This is the thinning-specific form: the kept-term count has mean at
    least c0 * N**(1 - alpha_exponent) when the input has density c0 and
    terms survive with probability N**(-alpha_exponent).
    """
    if N < 1:
        raise ValueError("N must be at least 1")
    c0f = float(c0)
    if not 0.0 < c0f <= 1.0:
        raise ValueError("c0 must lie in (0, 1]")
    ef = float(alpha_exponent)
    if not 0.0 < ef < 1.0:
        raise ValueError("alpha_exponent must lie in (0, 1)")
    mean_floor = c0f * N ** (1.0 - ef)
    return tail_bound(ConcentrationQuery(epsilon=epsilon, mean=mean_floor))


@dataclass(frozen=True)
class EpsilonChoice:
    """Largest deviation parameter keeping the amplified product under rho_prime."""

    rho: Fraction
    rho_prime: Fraction
    epsilon: float
    amplification: float  # (1 + eps) / (1 - eps)**2


def _amplification_exact(epsilon: float) -> Fraction:
    fe = Fraction(epsilon)
    return (1 + fe) / (1 - fe) ** 2


def choose_epsilon(rho: Fraction | str | float, rho_prime: Fraction | str | float) -> EpsilonChoice:
    """Pick the largest eps in (0, 1) with (1+eps)/(1-eps)**2 * rho <= rho_prime.

    The boundary satisfies r*eps**2 - (2r+1)*eps + (r-1) = 0 with
    r = rho_prime/rho; the relevant root is the one in (0, 1).  The float
    returned is nudged down, if necessary, to the largest value for which
    the inequality holds exactly in rational arithmetic.
    """
    frho = Fraction(rho)
    frho_prime = Fraction(rho_prime)
    if not 0 < frho < frho_prime <= 1:
        raise ValueError("need 0 < rho < rho_prime <= 1")
    r = float(frho_prime / frho)
    eps = ((2.0 * r + 1.0) - math.sqrt(8.0 * r + 1.0)) / (2.0 * r)
    # Largest float satisfying the exact inequality.
    while eps > 0 and _amplification_exact(eps) * frho > frho_prime:
        eps = math.nextafter(eps, 0.0)
    if not 0.0 < eps < 1.0:
        raise ValueError("no valid epsilon in (0, 1)")
    return EpsilonChoice(
        rho=frho,
        rho_prime=frho_prime,
        epsilon=eps,
        amplification=float(_amplification_exact(eps)),
    )
