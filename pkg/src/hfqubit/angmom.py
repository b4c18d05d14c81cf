"""Half-integer angular momentum algebra.

Wigner 3j and 6j symbols are evaluated with the Racah sum formulas. Every
factorial ratio is accumulated as an exact :class:`fractions.Fraction` and
only the final square root is taken in floating point, so nothing overflows
for the j <= 7 range used by the hyperfine models.

Phase convention is Condon-Shortley throughout; in particular the stretched
Clebsch-Gordan coefficient ``<j1 j1; j2 j2 | j1+j2, j1+j2>`` is +1.

Basis ordering for matrix representations is descending projection,
``m = j, j-1, ..., -j``.
"""
from __future__ import annotations

import math
from dataclasses import dataclass
from fractions import Fraction
from functools import lru_cache, total_ordering
from numbers import Real

import numpy as np

__all__ = [
    "HalfInt",
    "half",
    "twice",
    "triangle",
    "projections",
    "wigner3j",
    "wigner6j",
    "wigner3j_squared",
    "wigner6j_squared",
    "clebsch_gordan",
    "ladder_matrix_elements",
]


@total_ordering
@dataclass(frozen=True)
class HalfInt:
    """An exact integer or half-integer, stored as twice its value."""

    twice_value: int

    def __post_init__(self):
        if not isinstance(self.twice_value, (int, np.integer)) or isinstance(self.twice_value, bool):
            raise TypeError(f"twice_value must be an integer, got {self.twice_value!r}")
        object.__setattr__(self, "twice_value", int(self.twice_value))

    @classmethod
    def parse(cls, value) -> "HalfInt":
        """Coerce an int, float, Fraction, HalfInt or ``"7/2"`` string."""
        return cls(twice(value))

    @property
    def is_integer(self) -> bool:
        return self.twice_value % 2 == 0

    def __float__(self) -> float:
        return self.twice_value / 2

    def __int__(self) -> int:
        if not self.is_integer:
            raise ValueError(f"{self} is not an integer")
        return self.twice_value // 2

    def as_fraction(self) -> Fraction:
        return Fraction(self.twice_value, 2)

    def __neg__(self) -> "HalfInt":
        return HalfInt(-self.twice_value)

    def __add__(self, other) -> "HalfInt":
        return HalfInt(self.twice_value + twice(other))

    __radd__ = __add__

    def __sub__(self, other) -> "HalfInt":
        return HalfInt(self.twice_value - twice(other))

    def __rsub__(self, other) -> "HalfInt":
        return HalfInt(twice(other) - self.twice_value)

    def __eq__(self, other) -> bool:
        try:
            return self.twice_value == twice(other)
        except (TypeError, ValueError):
            return NotImplemented

    def __lt__(self, other) -> bool:
        return self.twice_value < twice(other)

    def __hash__(self) -> int:
        return hash(Fraction(self.twice_value, 2))

    def __str__(self) -> str:
        if self.is_integer:
            return str(self.twice_value // 2)
        return f"{self.twice_value}/2"

    def __repr__(self) -> str:
        return f"HalfInt({self})"


def twice(value) -> int:
    """Return ``2 * value`` as an int, rejecting anything not a half-integer."""
    if isinstance(value, HalfInt):
        return value.twice_value
    if isinstance(value, bool):
        raise TypeError("booleans are not angular momenta")
    if isinstance(value, (int, np.integer)):
        return 2 * int(value)
    if isinstance(value, str):
        try:
            frac = Fraction(value.strip())
        except ValueError:
            raise ValueError(f"cannot parse {value!r} as a half-integer") from None
    elif isinstance(value, Fraction):
        frac = value
    elif isinstance(value, Real):
        t = 2 * float(value)
        if not math.isfinite(t) or abs(t - round(t)) > 1e-9:
            raise ValueError(f"{value!r} is not a half-integer")
        return int(round(t))
    else:
        raise TypeError(f"cannot interpret {value!r} as a half-integer")
    doubled = 2 * frac
    if doubled.denominator != 1:
        raise ValueError(f"{value!r} is not a half-integer")
    return int(doubled)


def half(value) -> HalfInt:
    return HalfInt.parse(value)


def projections(j) -> list[HalfInt]:
    """Projections ``j, j-1, ..., -j``."""
    tj = twice(j)
    if tj < 0:
        raise ValueError("angular momentum magnitude must be non-negative")
    return [HalfInt(tm) for tm in range(tj, -tj - 1, -2)]


def _triangle2(a: int, b: int, c: int) -> bool:
    # arguments are doubled values
    return (
        a >= 0 and b >= 0 and c >= 0
        and abs(a - b) <= c <= a + b
        and (a + b + c) % 2 == 0
    )


def triangle(j1, j2, j3) -> bool:
    """True if (j1, j2, j3) can couple."""
    return _triangle2(twice(j1), twice(j2), twice(j3))


def _projection_ok(tj: int, tm: int) -> bool:
    return abs(tm) <= tj and (tj - tm) % 2 == 0


def _delta2(a: int, b: int, c: int) -> Fraction:
    """Triangle coefficient Delta(abc) from doubled arguments."""
    f = math.factorial
    return Fraction(
        f((a + b - c) // 2) * f((a - b + c) // 2) * f((-a + b + c) // 2),
        f((a + b + c) // 2 + 1),
    )


def _signed_sqrt(x: Fraction) -> float:
    if x < 0:
        return -math.sqrt(-x)
    return math.sqrt(x)


@lru_cache(maxsize=None)
def _wigner3j2_signed_sq(a: int, b: int, c: int, ma: int, mb: int, mc: int) -> Fraction:
    """sign(3j) * 3j**2 as an exact rational."""
    if ma + mb + mc != 0:
        return Fraction(0)
    if not _triangle2(a, b, c):
        return Fraction(0)
    if not (_projection_ok(a, ma) and _projection_ok(b, mb) and _projection_ok(c, mc)):
        return Fraction(0)
    f = math.factorial
    # everything in integer units from here on
    pre = _delta2(a, b, c) * (
        f((a + ma) // 2) * f((a - ma) // 2)
        * f((b + mb) // 2) * f((b - mb) // 2)
        * f((c + mc) // 2) * f((c - mc) // 2)
    )
    k_lo = max(0, (b - c - ma) // 2, (a - c + mb) // 2)
    k_hi = min((a + b - c) // 2, (a - ma) // 2, (b + mb) // 2)
    total = Fraction(0)
    for k in range(k_lo, k_hi + 1):
        den = (
            f(k)
            * f((c - b + ma) // 2 + k)
            * f((c - a - mb) // 2 + k)
            * f((a + b - c) // 2 - k)
            * f((a - ma) // 2 - k)
            * f((b + mb) // 2 - k)
        )
        total += Fraction((-1) ** k, den)
    phase = -1 if ((a - b - mc) // 2) % 2 else 1
    return phase * pre * total * abs(total)


@lru_cache(maxsize=None)
def _wigner3j2(a: int, b: int, c: int, ma: int, mb: int, mc: int) -> float:
    return _signed_sqrt(_wigner3j2_signed_sq(a, b, c, ma, mb, mc))


def wigner3j(j1, j2, j3, m1, m2, m3) -> float:
    """Wigner 3j symbol ``(j1 j2 j3; m1 m2 m3)``.

    Returns 0 when the projections do not sum to zero or the triangle rule
    fails. Raises ``ValueError`` for non-half-integer arguments.
    """
    return _wigner3j2(twice(j1), twice(j2), twice(j3), twice(m1), twice(m2), twice(m3))


@lru_cache(maxsize=None)
def _wigner6j2_signed_sq(a: int, b: int, c: int, d: int, e: int, g: int) -> Fraction:
    triads = ((a, b, c), (a, e, g), (d, b, g), (d, e, c))
    if not all(_triangle2(*t) for t in triads):
        return Fraction(0)
    f = math.factorial
    pre = Fraction(1)
    for t in triads:
        pre *= _delta2(*t)
    sums = [sum(t) // 2 for t in triads]
    pairs = [(a + b + d + e) // 2, (a + c + d + g) // 2, (b + c + e + g) // 2]
    total = Fraction(0)
    for t in range(max(sums), min(pairs) + 1):
        den = f(t - sums[0]) * f(t - sums[1]) * f(t - sums[2]) * f(t - sums[3])
        den *= f(pairs[0] - t) * f(pairs[1] - t) * f(pairs[2] - t)
        total += Fraction((-1) ** t * f(t + 1), den)
    return pre * total * abs(total)


@lru_cache(maxsize=None)
def _wigner6j2(a: int, b: int, c: int, d: int, e: int, g: int) -> float:
    return _signed_sqrt(_wigner6j2_signed_sq(a, b, c, d, e, g))


def wigner6j(j1, j2, j3, j4, j5, j6) -> float:
    """Wigner 6j symbol ``{j1 j2 j3; j4 j5 j6}`` by the Racah formula.

    Zero whenever any of the triads (j1 j2 j3), (j1 j5 j6), (j4 j2 j6),
    (j4 j5 j3) violates the triangle rule.
    """
    return _wigner6j2(twice(j1), twice(j2), twice(j3), twice(j4), twice(j5), twice(j6))


def wigner3j_squared(j1, j2, j3, m1, m2, m3) -> Fraction:
    """Exact square of the 3j symbol."""
    return abs(_wigner3j2_signed_sq(twice(j1), twice(j2), twice(j3), twice(m1), twice(m2), twice(m3)))


def wigner6j_squared(j1, j2, j3, j4, j5, j6) -> Fraction:
    """Exact square of the 6j symbol."""
    return abs(_wigner6j2_signed_sq(twice(j1), twice(j2), twice(j3), twice(j4), twice(j5), twice(j6)))


def clebsch_gordan(j1, m1, j2, m2, J, M) -> float:
    """``<j1 m1; j2 m2 | J M>`` in the Condon-Shortley convention."""
    a, b, c = twice(j1), twice(j2), twice(J)
    ma, mb, mc = twice(m1), twice(m2), twice(M)
    w = _wigner3j2(a, b, c, ma, mb, -mc)
    if w == 0.0:
        return 0.0
    phase = -1 if ((a - b + mc) // 2) % 2 else 1
    return phase * math.sqrt(c + 1) * w


@lru_cache(maxsize=None)
def _ladder(tj: int):
    j = tj / 2
    m = np.array([tm / 2 for tm in range(tj, -tj - 1, -2)])
    jz = np.diag(m)
    jp = np.zeros((tj + 1, tj + 1))
    # row k-1 holds m[k] + 1
    for k in range(1, tj + 1):
        jp[k - 1, k] = math.sqrt(j * (j + 1) - m[k] * (m[k] + 1))
    for arr in (jz, jp):
        arr.setflags(write=False)
    return jz, jp


def ladder_matrix_elements(j) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Matrices ``(Jz, J+, J-)`` for spin ``j`` in the descending-m basis."""
    tj = twice(j)
    if tj < 0:
        raise ValueError("j must be non-negative")
    jz, jp = _ladder(tj)
    return jz.copy(), jp.copy(), jp.T.copy()
