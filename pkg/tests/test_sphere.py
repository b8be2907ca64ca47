"""Chordal geometry of the Riemann sphere."""

import numpy as np
import pytest

from juliatherm.sphere import (
    SpherePoint,
    as_point,
    chordal_distance,
    chordal_distance_arrays,
    rotation_coeffs,
    apply_mobius,
)


def test_distance_to_self_is_zero():
    for z in (0j, 1 + 1j, -3.5 + 0.25j):
        assert chordal_distance(SpherePoint(z), SpherePoint(z)) == 0.0
    inf = SpherePoint.infinity()
    assert chordal_distance(inf, inf) == 0.0


def test_zero_to_infinity_is_antipodal():
    assert chordal_distance(SpherePoint(0.0), SpherePoint.infinity()) == pytest.approx(2.0)


def test_plus_minus_one_are_antipodal():
    # 2*|1-(-1)| / sqrt(2*2) = 4/2
    assert chordal_distance(SpherePoint(1.0), SpherePoint(-1.0)) == pytest.approx(2.0)


def test_symmetry_and_diameter_bound():
    rng = np.random.default_rng(7)
    pts = [SpherePoint(complex(a, b)) for a, b in rng.normal(size=(40, 2)) * 3]
    pts.append(SpherePoint.infinity())
    for a in pts:
        for b in pts:
            d1 = chordal_distance(a, b)
            d2 = chordal_distance(b, a)
            assert d1 == pytest.approx(d2, abs=1e-15)
            assert 0.0 <= d1 <= 2.0 + 1e-15


def test_triangle_inequality_sampled():
    rng = np.random.default_rng(11)
    zs = [complex(a, b) for a, b in rng.normal(size=(25, 2)) * 2]
    pts = [SpherePoint(z) for z in zs] + [SpherePoint.infinity()]
    for a in pts[::5]:
        for b in pts[::3]:
            for c in pts[::4]:
                assert chordal_distance(a, c) <= (
                    chordal_distance(a, b) + chordal_distance(b, c) + 1e-12)


def test_array_form_matches_scalar():
    rng = np.random.default_rng(3)
    z = rng.normal(size=8) + 1j * rng.normal(size=8)
    w = rng.normal(size=8) + 1j * rng.normal(size=8)
    arr = chordal_distance_arrays(z, w)
    for i in range(8):
        assert arr[i] == pytest.approx(
            chordal_distance(SpherePoint(z[i]), SpherePoint(w[i])), rel=1e-14)


def test_as_point_accepts_numbers_and_points():
    assert as_point(2.5).value == 2.5
    assert as_point(1 + 2j).value == 1 + 2j
    p = SpherePoint(3.0)
    assert as_point(p) is p
    assert as_point(float("inf")).infinite


def test_point_equality_and_hash():
    assert SpherePoint(1.0) == SpherePoint(1.0 + 0j)
    assert SpherePoint.infinity() == SpherePoint.infinity()
    assert SpherePoint(0.0) != SpherePoint.infinity()
    assert hash(SpherePoint(2.0)) == hash(SpherePoint(2.0 + 0j))


def test_rotation_invariance_of_chordal_distance():
    """Rotations z -> (az + b) / (-conj(b)z + conj(a)), |a|^2+|b|^2 = 1,
    are isometries of the chordal metric."""
    rng = np.random.default_rng(19)
    for _ in range(6):
        raw = rng.normal(size=4)
        a = complex(raw[0], raw[1])
        b = complex(raw[2], raw[3])
        norm = np.sqrt(abs(a) ** 2 + abs(b) ** 2)
        a, b = a / norm, b / norm
        num, den = rotation_coeffs(a, b)
        for _ in range(10):
            z = SpherePoint(complex(*rng.normal(size=2)))
            w = SpherePoint(complex(*rng.normal(size=2)))
            d0 = chordal_distance(z, w)
            d1 = chordal_distance(apply_mobius(num, den, z),
                                  apply_mobius(num, den, w))
            assert d1 == pytest.approx(d0, rel=1e-9, abs=1e-12)


def test_rotation_moves_infinity_correctly():
    # a=0, b=1: z -> 1/(-z) swaps 0 and infinity
    num, den = rotation_coeffs(0.0, 1.0)
    assert apply_mobius(num, den, SpherePoint.infinity()) == SpherePoint(0.0)
    img = apply_mobius(num, den, SpherePoint(0.0))
    assert img.infinite
