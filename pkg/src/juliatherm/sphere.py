"""Points on the Riemann sphere and the chordal metric.

A point is a finite complex number or the distinguished point at infinity.
The chordal distance is normalized to diameter 2:

    d(a, b) = 2|a - b| / sqrt((1 + |a|^2)(1 + |b|^2)),   d(a, inf) = 2 / sqrt(1 + |a|^2).
"""

from __future__ import annotations

import cmath

import numpy as np


class SpherePoint:
    """A point of the Riemann sphere: finite complex value or infinity."""

    __slots__ = ("value", "infinite")

    def __init__(self, value=0j, infinite=False):
        if infinite:
            self.value = None
            self.infinite = True
        else:
            v = complex(value)
            if not (cmath.isfinite(v)):
                # overflowed arithmetic lands here too; treat as infinity
                self.value = None
                self.infinite = True
            else:
                self.value = v
                self.infinite = False

    @staticmethod
    def infinity() -> "SpherePoint":
        return SpherePoint(infinite=True)

    @property
    def is_infinity(self) -> bool:
        return self.infinite

    def __complex__(self):
        if self.infinite:
            raise OverflowError("point at infinity has no finite complex value")
        return self.value

    def __eq__(self, other):
        other = as_point(other)
        if self.infinite or other.infinite:
            return self.infinite and other.infinite
        return self.value == other.value

    def __hash__(self):
        return hash(None) if self.infinite else hash(self.value)

    def __repr__(self):
        if self.infinite:
            return "SpherePoint(inf)"
        return "SpherePoint(%r)" % (self.value,)


def as_point(p) -> SpherePoint:
    """Coerce complex / float / SpherePoint to SpherePoint."""
    if isinstance(p, SpherePoint):
        return p
    if p is None:
        return SpherePoint.infinity()
    v = complex(p)
    if not cmath.isfinite(v):
        return SpherePoint.infinity()
    return SpherePoint(v)


def chordal_distance(a, b) -> float:
    """Chordal distance between two sphere points (diameter 2)."""
    pa, pb = as_point(a), as_point(b)
    if pa.infinite and pb.infinite:
        return 0.0
    if pa.infinite:
        return 2.0 / np.sqrt(1.0 + abs(pb.value) ** 2)
    if pb.infinite:
        return 2.0 / np.sqrt(1.0 + abs(pa.value) ** 2)
    za, zb = pa.value, pb.value
    return 2.0 * abs(za - zb) / np.sqrt((1.0 + abs(za) ** 2) * (1.0 + abs(zb) ** 2))


def chordal_distance_arrays(z, w):
    """Vectorized chordal distance for arrays of finite complex points."""
    z = np.asarray(z, dtype=complex)
    w = np.asarray(w, dtype=complex)
    num = 2.0 * np.abs(z - w)
    den = np.sqrt((1.0 + np.abs(z) ** 2) * (1.0 + np.abs(w) ** 2))
    return num / den


def chordal_to_infinity_arrays(z):
    z = np.asarray(z, dtype=complex)
    return 2.0 / np.sqrt(1.0 + np.abs(z) ** 2)


def rotation_coeffs(a: complex, b: complex):
    """Numerator/denominator coefficients (constant first) of the sphere
    rotation z -> (a z + b) / (-conj(b) z + conj(a)), |a|^2 + |b|^2 = 1.

    Rotations are chordal isometries; used by metric tests.
    """
    n = abs(a) ** 2 + abs(b) ** 2
    if abs(n - 1.0) > 1e-12:
        s = 1.0 / np.sqrt(n)
        a, b = a * s, b * s
    return [b, a], [np.conj(a), -np.conj(b)]


def apply_mobius(num, den, p):
    """Apply the Mobius map with coefficient lists (constant first) to a point."""
    pt = as_point(p)
    c0, c1 = num[0], num[1]
    d0, d1 = den[0], den[1]
    if pt.infinite:
        if abs(d1) == 0.0:
            return SpherePoint.infinity()
        return SpherePoint(c1 / d1)
    z = pt.value
    nv = c0 + c1 * z
    dv = d0 + d1 * z
    if abs(dv) == 0.0:
        return SpherePoint.infinity()
    return SpherePoint(nv / dv)
