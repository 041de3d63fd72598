"""Exact angular-momentum algebra.

Wigner 3j and 6j symbols are evaluated with the Racah sums in exact integer
arithmetic. Every angular momentum is carried as a doubled integer so that
half-integer bookkeeping never touches floating point; the only rounding
happens when the final ``sign * sqrt(rational)`` is converted to ``float``.
"""
from __future__ import annotations

import math
from dataclasses import dataclass
from fractions import Fraction
from functools import lru_cache

import numpy as np

__all__ = [
    "HalfInt",
    "PolVector",
    "twice",
    "wigner3j",
    "wigner6j",
    "spherical_components",
    "compound_tensor",
]


@dataclass(frozen=True, order=True)
class HalfInt:
    """A non-negative or negative half-integer stored as ``2 * value``."""

    twice_value: int

    @classmethod
    def of(cls, value) -> "HalfInt":
        return cls(twice(value))

    @property
    def value(self) -> Fraction:
        return Fraction(self.twice_value, 2)

    def __float__(self) -> float:
        return self.twice_value / 2

    def __add__(self, other: "HalfInt") -> "HalfInt":
        return HalfInt(self.twice_value + twice(other))

    def __sub__(self, other: "HalfInt") -> "HalfInt":
        return HalfInt(self.twice_value - twice(other))

    def __neg__(self) -> "HalfInt":
        return HalfInt(-self.twice_value)

    def __str__(self) -> str:
        if self.twice_value % 2 == 0:
            return str(self.twice_value // 2)
        return f"{self.twice_value}/2"


def twice(value) -> int:
    """Return ``2 * value`` as an int, refusing anything that is not a half-integer."""
    if isinstance(value, HalfInt):
        return value.twice_value
    if isinstance(value, (int, np.integer)):
        return 2 * int(value)
    if isinstance(value, Fraction):
        doubled = 2 * value
    elif isinstance(value, str):
        doubled = 2 * Fraction(value)
    else:
        doubled = Fraction(2 * float(value)).limit_denominator(1)
        if abs(float(doubled) - 2 * float(value)) > 1e-9:
            raise ValueError(f"{value!r} is not a half-integer")
    if doubled.denominator != 1:
        raise ValueError(f"{value!r} is not a half-integer")
    return int(doubled)


# exact factorial table, grown on demand
_FACT = [1]


def _fact(n: int) -> int:
    if n < 0:
        raise ValueError("negative factorial argument")
    while len(_FACT) <= n:
        _FACT.append(_FACT[-1] * len(_FACT))
    return _FACT[n]


def _triangle_ok(a: int, b: int, c: int) -> bool:
    # doubled arguments
    return (a + b + c) % 2 == 0 and abs(a - b) <= c <= a + b


def _delta_sq(a: int, b: int, c: int) -> Fraction:
    """Triangle coefficient Delta(abc) for doubled arguments (exact)."""
    return Fraction(
        _fact((a + b - c) // 2) * _fact((a - b + c) // 2) * _fact((-a + b + c) // 2),
        _fact((a + b + c) // 2 + 1),
    )


def _signed_sqrt(total: Fraction, radicand: Fraction) -> float:
    if total == 0 or radicand == 0:
        return 0.0
    sign = 1.0 if total > 0 else -1.0
    return sign * math.sqrt(total * total * radicand)


@lru_cache(maxsize=None)
def _wigner3j_doubled(j1: int, j2: int, j3: int, m1: int, m2: int, m3: int) -> float:
    if m1 + m2 + m3 != 0:
        return 0.0
    for j, m in ((j1, m1), (j2, m2), (j3, m3)):
        if abs(m) > j or (j + m) % 2:
            return 0.0
    if not _triangle_ok(j1, j2, j3):
        return 0.0
    # all of the following are integers after halving
    a = (j1 + j2 - j3) // 2
    b = (j1 - m1) // 2
    c = (j2 + m2) // 2
    d = (j3 - j2 + m1) // 2
    e = (j3 - j1 - m2) // 2
    kmin = max(0, -d, -e)
    kmax = min(a, b, c)
    total = 0
    for k in range(kmin, kmax + 1):
        term = Fraction(1, _fact(k) * _fact(a - k) * _fact(b - k) * _fact(c - k)
                        * _fact(d + k) * _fact(e + k))
        total += -term if k % 2 else term
    total = Fraction(total)
    radicand = _delta_sq(j1, j2, j3) * (
        _fact((j1 + m1) // 2) * _fact((j1 - m1) // 2)
        * _fact((j2 + m2) // 2) * _fact((j2 - m2) // 2)
        * _fact((j3 + m3) // 2) * _fact((j3 - m3) // 2)
    )
    if ((j1 - j2 - m3) // 2) % 2:
        total = -total
    return _signed_sqrt(total, radicand)


@lru_cache(maxsize=None)
def _wigner6j_doubled(j1: int, j2: int, j3: int, j4: int, j5: int, j6: int) -> float:
    triads = ((j1, j2, j3), (j1, j5, j6), (j4, j2, j6), (j4, j5, j3))
    if not all(_triangle_ok(*t) for t in triads):
        return 0.0
    sums = [sum(t) // 2 for t in triads]
    pairs = [(j1 + j2 + j4 + j5) // 2, (j2 + j3 + j5 + j6) // 2, (j3 + j1 + j6 + j4) // 2]
    total = Fraction(0)
    for t in range(max(sums), min(pairs) + 1):
        den = _fact(pairs[0] - t) * _fact(pairs[1] - t) * _fact(pairs[2] - t)
        for s in sums:
            den *= _fact(t - s)
        term = Fraction(_fact(t + 1), den)
        total += -term if t % 2 else term
    radicand = Fraction(1)
    for tri in triads:
        radicand *= _delta_sq(*tri)
    return _signed_sqrt(total, radicand)


def wigner3j(j1, j2, j3, m1, m2, m3) -> float:
    """Wigner 3j symbol ``(j1 j2 j3; m1 m2 m3)``.

    Arguments may be ints, floats, ``Fraction``, strings like ``"3/2"`` or
    :class:`HalfInt`. Symbols violating a selection rule are zero.
    """
    return _wigner3j_doubled(twice(j1), twice(j2), twice(j3), twice(m1), twice(m2), twice(m3))


def wigner6j(j1, j2, j3, j4, j5, j6) -> float:
    """Wigner 6j symbol ``{j1 j2 j3; j4 j5 j6}``; zero for any broken triad."""
    return _wigner6j_doubled(twice(j1), twice(j2), twice(j3), twice(j4), twice(j5), twice(j6))


@dataclass(frozen=True)
class PolVector:
    """Complex unit polarization vector in Cartesian components (x, y, z)."""

    u: tuple

    def __init__(self, u, normalize: bool = False):
        vec = np.asarray(u, dtype=complex).reshape(3)
        norm = float(np.sqrt(np.sum(np.abs(vec) ** 2)))
        if normalize:
            if norm == 0:
                raise ValueError("zero polarization vector")
            vec = vec / norm
        elif abs(norm - 1.0) > 1e-12:
            raise ValueError(f"polarization vector not unit norm (|u| = {norm!r})")
        object.__setattr__(self, "u", tuple(complex(c) for c in vec))

    @property
    def array(self) -> np.ndarray:
        return np.array(self.u, dtype=complex)

    @classmethod
    def linear(cls, axis: str) -> "PolVector":
        idx = "xyz".index(axis)
        vec = np.zeros(3, dtype=complex)
        vec[idx] = 1.0
        return cls(vec)

    def is_real(self, tol: float = 1e-14) -> bool:
        """True when the vector is linear, i.e. real up to a global phase."""
        vec = self.array
        k = int(np.argmax(np.abs(vec)))
        vec = vec * np.exp(-1j * np.angle(vec[k]))
        return bool(np.all(np.abs(vec.imag) < tol))


def spherical_components(u: PolVector) -> dict[int, complex]:
    """Spherical components ``{-1: u_-1, 0: u_0, +1: u_+1}`` of a polarization vector."""
    if not isinstance(u, PolVector):
        u = PolVector(u)
    ux, uy, uz = u.u
    s2 = math.sqrt(2.0)
    return {-1: (ux - 1j * uy) / s2, 0: uz, 1: -(ux + 1j * uy) / s2}


def compound_tensor(u: PolVector, K: int, q: int) -> complex:
    """Component ``{u* (x) u}_{Kq}`` of the rank-K compound polarization tensor."""
    if K not in (0, 1, 2):
        raise ValueError("K must be 0, 1 or 2")
    if abs(q) > K:
        raise ValueError(f"|q| = {abs(q)} exceeds K = {K}")
    sph = spherical_components(u)
    total = 0j
    for mu in (-1, 0, 1):
        for mup in (-1, 0, 1):
            w = wigner3j(1, K, 1, mu, -q, mup)
            if w == 0.0:
                continue
            sign = -1.0 if (q + mup) % 2 else 1.0
            total += sign * sph[mu] * np.conj(sph[-mup]) * w
    return complex(total * math.sqrt(2 * K + 1))
