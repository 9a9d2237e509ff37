"""Exact arithmetic for 0/1-coefficient polynomials and their squares.

A polynomial here is a nonempty sequence of coefficients in {0, 1} with a
nonzero leading term; the square of such a polynomial has small nonnegative
integer coefficients (never exceeding the term count), so every quantity in
this module is computed exactly, with ratios carried as `Fraction`s.

Squaring auto-selects a strategy by density: explicit support-pair
accumulation while the pair count is small, otherwise a padded real FFT
whose rounding is certified exact by an a-priori error bound, with a
carry-free big-integer convolution as the fallback.  All strategies must
agree bit-for-bit with `square_oracle`, the deliberately dumb reference.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from fractions import Fraction
from typing import Iterable, Sequence

import numpy as np

__all__ = [
    "NewmanPolynomial",
    "SquareCoefficients",
    "RatioReport",
    "parse_polynomial",
    "format_polynomial",
    "square",
    "square_oracle",
    "metrics",
    "ORACLE_DEGREE_CAP",
]

ORACLE_DEGREE_CAP = 10_000

# Strategy thresholds for square().
_TINY_LENGTH = 64        # below this many coefficients, plain Python loops win
_PAIR_LIMIT = 4_000_000  # max support pairs routed through bincount
_FFT_GUARD = 0.25        # certified rounding error must stay below this


class NewmanPolynomial:
    """Immutable polynomial with coefficients in {0, 1} and leading term 1.

    `coefficients[j]` is the coefficient of x**j.  The zero polynomial is
    not representable; the degree is always the index of the last (and
    necessarily nonzero) coefficient.
    """

    __slots__ = ("_coeffs", "_support")

    def __init__(self, coefficients: Sequence[int] | np.ndarray):
        arr = np.asarray(coefficients, dtype=np.int64)
        if arr.ndim != 1 or arr.size == 0:
            raise ValueError("coefficients must be a nonempty one-dimensional sequence")
        if not np.isin(arr, (0, 1)).all():
            raise ValueError("coefficients must all be 0 or 1")
        if arr[-1] != 1:
            raise ValueError("leading coefficient must be 1 (no trailing zeros)")
        coeffs = arr.astype(np.uint8)
        coeffs.setflags(write=False)
        support = np.flatnonzero(coeffs).astype(np.int64)
        support.setflags(write=False)
        self._coeffs = coeffs
        self._support = support

    @classmethod
    def from_support(cls, exponents: Iterable[int]) -> "NewmanPolynomial":
        """Build the polynomial whose terms are x**e for the given exponents."""
        exps = sorted(int(e) for e in exponents)
        if not exps:
            raise ValueError("support must be nonempty")
        if exps[0] < 0:
            raise ValueError("exponents must be nonnegative")
        if len(set(exps)) != len(exps):
            raise ValueError("duplicate exponents")
        coeffs = np.zeros(exps[-1] + 1, dtype=np.uint8)
        coeffs[exps] = 1
        return cls(coeffs)

    @classmethod
    def all_ones(cls, degree: int) -> "NewmanPolynomial":
        """1 + x + ... + x**degree."""
        if degree < 0:
            raise ValueError("degree must be nonnegative")
        return cls(np.ones(degree + 1, dtype=np.uint8))

    @property
    def coefficients(self) -> np.ndarray:
        return self._coeffs

    @property
    def support(self) -> np.ndarray:
        """Sorted exponents of the nonzero terms."""
        return self._support

    @property
    def degree(self) -> int:
        return len(self._coeffs) - 1

    @property
    def l1(self) -> int:
        """Number of terms (the L1 norm of the coefficient sequence)."""
        return len(self._support)

    def reversed(self) -> "NewmanPolynomial":
        """The reciprocal polynomial x**degree * p(1/x).

        Its degree is degree - min(support): reversing drops any low-order
        zero run of p.  Term count and square height are preserved.
        """
        low = int(self._support[0])
        return NewmanPolynomial(self._coeffs[::-1][: self.degree - low + 1])

    def is_palindromic(self) -> bool:
        return bool((self._coeffs == self._coeffs[::-1]).all())

    def __eq__(self, other: object) -> bool:
        if not isinstance(other, NewmanPolynomial):
            return NotImplemented
        return self._coeffs.shape == other._coeffs.shape and bool(
            (self._coeffs == other._coeffs).all()
        )

    def __hash__(self) -> int:
        return hash((self.degree, self._coeffs.tobytes()))

    def __repr__(self) -> str:
        exps = self._support.tolist()
        shown = ",".join(map(str, exps[:8])) + (",..." if len(exps) > 8 else "")
        return f"NewmanPolynomial(degree={self.degree}, support=[{shown}])"


class SquareCoefficients:
    """Exact coefficients of p**2 for a 0/1 polynomial p, indexed 0..2*deg(p)."""

    __slots__ = ("_coeffs",)

    def __init__(self, coefficients: Sequence[int] | np.ndarray):
        arr = np.asarray(coefficients, dtype=np.int64)
        if arr.ndim != 1 or arr.size == 0 or arr.size % 2 == 0:
            raise ValueError("square coefficients must have odd positive length")
        if (arr < 0).any():
            raise ValueError("square coefficients must be nonnegative")
        arr.setflags(write=False)
        self._coeffs = arr

    @property
    def coefficients(self) -> np.ndarray:
        return self._coeffs

    @property
    def height(self) -> int:
        """Largest coefficient."""
        return int(self._coeffs.max())

    @property
    def total(self) -> int:
        """Sum of all coefficients (equals the squared term count)."""
        return int(self._coeffs.sum())

    def to_list(self) -> list[int]:
        return self._coeffs.tolist()

    def __len__(self) -> int:
        return len(self._coeffs)

    def __getitem__(self, k: int) -> int:
        return int(self._coeffs[k])

    def __iter__(self):
        return iter(self._coeffs.tolist())

    def __eq__(self, other: object) -> bool:
        if not isinstance(other, SquareCoefficients):
            return NotImplemented
        return self._coeffs.shape == other._coeffs.shape and bool(
            (self._coeffs == other._coeffs).all()
        )

    def __hash__(self) -> int:
        return hash(self._coeffs.tobytes())

    def __repr__(self) -> str:
        return f"SquareCoefficients(len={len(self._coeffs)}, height={self.height})"


@dataclass(frozen=True)
class RatioReport:
    """Per-polynomial bundle: term count, degree, square height, and exact ratios.

    `ratio` is height / l1**2, `product` is ratio * degree, and
    `trivial_bound` is 1 / (2*degree + 1), the floor that `ratio` can never
    go below.
    """

    l1: int
    degree: int
    height: int
    ratio: Fraction
    product: Fraction
    trivial_bound: Fraction

    def to_json_dict(self) -> dict:
        """Flat JSON form with numerator/denominator pairs for the rationals."""
        return {
            "l1": self.l1,
            "degree": self.degree,
            "height": self.height,
            "ratio_num": self.ratio.numerator,
            "ratio_den": self.ratio.denominator,
            "product_num": self.product.numerator,
            "product_den": self.product.denominator,
            "trivial_bound_num": self.trivial_bound.numerator,
            "trivial_bound_den": self.trivial_bound.denominator,
        }


def parse_polynomial(text: str, format: str = "exponent_list") -> NewmanPolynomial:
    """Parse a polynomial from text.

    `bitstring` is the coefficient sequence c0 c1 ... cN (constant term
    first, must end in 1); `exponent_list` is a comma-separated list of
    distinct nonnegative exponents.
    """
    if format == "bitstring":
        s = text.strip()
        if not s:
            raise ValueError("empty bitstring")
        if set(s) - {"0", "1"}:
            raise ValueError(f"bitstring may contain only 0 and 1: {text!r}")
        if s[-1] != "1":
            raise ValueError("bitstring must end in 1 (leading coefficient zero)")
        return NewmanPolynomial([int(ch) for ch in s])
    if format == "exponent_list":
        parts = [piece.strip() for piece in text.split(",")]
        if parts == [""]:
            raise ValueError("empty exponent list")
        try:
            exps = [int(piece) for piece in parts]
        except ValueError as exc:
            raise ValueError(f"bad exponent list {text!r}: {exc}") from None
        return NewmanPolynomial.from_support(exps)
    raise ValueError(f"unknown polynomial format {format!r}")


def format_polynomial(p: NewmanPolynomial, format: str = "exponent_list") -> str:
    """Render a polynomial; the canonical form is the ascending exponent list."""
    if format == "exponent_list":
        return ",".join(map(str, p.support.tolist()))
    if format == "bitstring":
        return "".join(map(str, p.coefficients.tolist()))
    raise ValueError(f"unknown polynomial format {format!r}")


# ---------------------------------------------------------------------------
# Squaring strategies.  All of them return plain int64 arrays of length
# 2*degree + 1 and must agree exactly.


def _square_python(coeffs: np.ndarray) -> np.ndarray:
    c = coeffs.tolist()
    n = len(c)
    out = [0] * (2 * n - 1)
    for i in range(n):
        if c[i]:
            for j in range(n):
                if c[j]:
                    out[i + j] += 1
    return np.asarray(out, dtype=np.int64)


def _square_pairs(support: np.ndarray, degree: int) -> np.ndarray:
    sums = (support[:, None] + support[None, :]).ravel()
    return np.bincount(sums, minlength=2 * degree + 1).astype(np.int64)


def _fft_error_bound(l1: int, fft_length: int) -> float:
    # Worst-case rounding error of an FFT convolution of two 0/1 sequences
    # with l1 ones each: ||a||_2 * ||b||_2 * O(eps * log2(M)), with a wide
    # safety constant.
    eps = float(np.finfo(np.float64).eps)
    return l1 * eps * (16.0 * math.log2(fft_length) + 16.0)

def _square_fft(coeffs: np.ndarray, degree: int, l1: int) -> np.ndarray | None:
    out_len = 2 * degree + 1
    fft_length = 1 << (out_len - 1).bit_length()
    if _fft_error_bound(l1, fft_length) >= _FFT_GUARD:
        return None
    spectrum = np.fft.rfft(coeffs.astype(np.float64), n=fft_length)
    raw = np.fft.irfft(spectrum * spectrum, n=fft_length)[:out_len]
    rounded = np.rint(raw)
    residual = float(np.abs(raw - rounded).max())
    if residual >= _FFT_GUARD:  # numerical anomaly; let the exact path handle it
        return None
    return rounded.astype(np.int64)


def _square_bigint(coeffs: np.ndarray, degree: int) -> np.ndarray:
    # Pack one coefficient per 32-bit slot; squares of 0/1 polynomials have
    # coefficients <= degree + 1, so slots never carry into each other.
    out_len = 2 * degree + 1
    packed = np.zeros(len(coeffs) * 4, dtype=np.uint8)
    packed[::4] = coeffs
    value = int.from_bytes(packed.tobytes(), "little")
    squared = value * value
    raw = squared.to_bytes(4 * (out_len + 1), "little")[: 4 * out_len]
    return np.frombuffer(raw, dtype="<u4").astype(np.int64)


def square(p: NewmanPolynomial) -> SquareCoefficients:
    """Exact coefficients of p**2.

    (p**2)_k = sum_j p_j * p_{k-j}; the strategy is selected by density but
    the result is strategy-independent.
    """
    degree = p.degree
    l1 = p.l1
    if degree + 1 <= _TINY_LENGTH:
        return SquareCoefficients(_square_python(p.coefficients))
    if l1 * l1 <= _PAIR_LIMIT:
        return SquareCoefficients(_square_pairs(p.support, degree))
    out = _square_fft(p.coefficients, degree, l1)
    if out is None:
        out = _square_bigint(p.coefficients, degree)
    return SquareCoefficients(out)


def square_oracle(p: NewmanPolynomial) -> SquareCoefficients:
    """Reference squaring: the literal double loop, no strategy selection.

    Intentionally slow and kept independent of `square` so the two can be
    compared; refuses degrees above ORACLE_DEGREE_CAP.
    """
    if p.degree > ORACLE_DEGREE_CAP:
        raise ValueError(f"oracle capped at degree {ORACLE_DEGREE_CAP}, got {p.degree}")
    return SquareCoefficients(_square_python(p.coefficients))


def ratio_report(l1: int, degree: int, height: int) -> RatioReport:
    """Assemble a RatioReport from precomputed exact quantities."""
    ratio = Fraction(height, l1 * l1)
    return RatioReport(
        l1=l1,
        degree=degree,
        height=height,
        ratio=ratio,
        product=ratio * degree,
        trivial_bound=Fraction(1, 2 * degree + 1),
    )


def metrics(p: NewmanPolynomial, square_coeffs: SquareCoefficients | None = None) -> RatioReport:
    """Exact RatioReport for p; pass a precomputed square to avoid recomputing it."""
    sq = square(p) if square_coeffs is None else square_coeffs
    return ratio_report(p.l1, p.degree, sq.height)
