"""Pressure estimators: exactness oracles, extrapolation, certificates,
curve machinery, freezing point, kink detection."""

import math

import numpy as np
import pytest

from juliatherm.errors import (CombinatorialExplosion, DivergentWeights,
                               InconsistentCurve, SingularOrbit)
from juliatherm.measures import chi_inf_estimate, mme_measure, periodic_measure
from juliatherm.potentials import (BirkhoffSum, OrbitCombination,
                                   SumPotential, parse_potential)
from juliatherm.pressure import (PressureEstimate, extrapolate_increments,
                                 freezing_point, kink_detect,
                                 pressure_curve, pressure_periodic_sum,
                                 pressure_preimage_sum, pressure_variational,
                                 series_pressure_bound, stable_logsumexp)
from juliatherm.rational import RationalMap
from juliatherm.sampling import sample_julia

SQUARING = RationalMap([0, 0, 1], [1])
CHEBYSHEV = RationalMap([-2, 0, 1], [1])
ZERO = parse_potential("0")
LN2 = math.log(2.0)
GENERIC_ANCHOR = 2.0 * math.cos(1.0)  # irrational angle: tree avoids 0


def _fixed_point(fmap, z, tol=1e-8):
    for p in fmap.periodic_points(1):
        if not p.location.infinite and abs(complex(p.location) - z) < tol:
            return p
    raise AssertionError("fixed point not found")


# -- helpers ------------------------------------------------------------------


def test_stable_logsumexp_deterministic():
    rng = np.random.default_rng(0)
    a = rng.normal(size=200)
    shuffled = a.copy()
    rng.shuffle(shuffled)
    assert stable_logsumexp(a) == stable_logsumexp(shuffled)
    assert stable_logsumexp([]) == -math.inf


def test_extrapolate_exact_geometric():
    L = [0.7 * n + 0.5 ** n for n in range(1, 11)]
    assert extrapolate_increments(L) == pytest.approx(0.7, abs=1e-12)


def test_extrapolate_constant_untouched():
    L = [LN2 * n for n in range(1, 9)]
    assert extrapolate_increments(L) == pytest.approx(LN2, abs=1e-14)


# -- fiber sums ---------------------------------------------------------------


def test_fiber_squaring_t0_exact():
    est = pressure_preimage_sum(SQUARING, ZERO, 0.0, 1.0, n_max=12)
    assert est.method == "preimage_sum"
    assert est.bound_kind == "two_sided"
    assert est.value == pytest.approx(LN2, abs=1e-12)
    for _, p in est.approximants:
        assert p == pytest.approx(LN2, abs=1e-12)
    assert est.notes["excluded_ramified"] == 0


def test_fiber_squaring_t1_zero():
    est = pressure_preimage_sum(SQUARING, ZERO, 1.0, 1.0, n_max=12)
    assert abs(est.value) < 1e-12


def test_fiber_constant_shift():
    base = pressure_preimage_sum(SQUARING, ZERO, 0.0, 1.0, n_max=10)
    shifted = pressure_preimage_sum(SQUARING, parse_potential("0.3"), 0.0,
                                    1.0, n_max=10)
    assert shifted.value - base.value == pytest.approx(0.3, abs=1e-12)


def test_fiber_chebyshev_generic_anchor():
    for t, tol in ((0.0, 1e-12), (0.5, 1e-6), (1.0, 1e-6)):
        est = pressure_preimage_sum(CHEBYSHEV, ZERO, t, GENERIC_ANCHOR,
                                    n_max=14, budget=1 << 17)
        assert est.value == pytest.approx((1 - t) * LN2, abs=tol)
        assert est.notes["excluded_ramified"] == 0


def test_fiber_ramified_anchor_collapse_is_visible():
    # the backward tree of 2 under z^2-2 runs through the critical point 0:
    # at t > 0 exclusions gut the tree down to the fixed-point chain and
    # the estimate collapses to -ln 4 -- honestly, with the count exposed
    est = pressure_preimage_sum(CHEBYSHEV, ZERO, 1.0, 2.0, n_max=10)
    assert est.notes["excluded_ramified"] > 0
    assert est.value == pytest.approx(-math.log(4.0), abs=1e-9)
    at0 = pressure_preimage_sum(CHEBYSHEV, ZERO, 0.0, 2.0, n_max=10)
    assert at0.value == pytest.approx(LN2, abs=1e-9)
    assert at0.notes["excluded_ramified"] == 0


def test_fiber_refuse_policy_raises():
    with pytest.raises(SingularOrbit):
        pressure_preimage_sum(CHEBYSHEV, ZERO, 0.5, 2.0, n_max=6,
                              on_critical="raise")


def test_fiber_budget():
    with pytest.raises(CombinatorialExplosion):
        pressure_preimage_sum(SQUARING, ZERO, 0.0, 1.0, n_max=40)


# -- periodic sums ------------------------------------------------------------


def test_periodic_squaring_t0():
    est = pressure_periodic_sum(SQUARING, ZERO, 0.0, 8)
    n, p8 = est.approximants[-1]
    assert n == 8
    assert p8 == pytest.approx(math.log(2 ** 8 - 1) / 8, abs=1e-9)
    assert est.value == pytest.approx(LN2, abs=1e-7)
    assert est.notes["repelling_counts"][-1] == 255


def test_periodic_squaring_t1_from_below():
    est = pressure_periodic_sum(SQUARING, ZERO, 1.0, 8)
    raw = [p for _, p in est.approximants]
    assert all(p < 0 for p in raw)
    assert raw == sorted(raw)  # increases toward 0
    assert est.value == pytest.approx(0.0, abs=1e-7)


def test_periodic_chebyshev_fixed_points():
    est = pressure_periodic_sum(CHEBYSHEV, ZERO, 0.0, 1)
    assert est.approximants[0][1] == pytest.approx(LN2, abs=1e-9)


def test_periodic_metric_free():
    a = pressure_periodic_sum(SQUARING, ZERO, 0.5, 6, metric="euclidean")
    b = pressure_periodic_sum(SQUARING, ZERO, 0.5, 6, metric="spherical")
    assert a.value == b.value


def test_periodic_constant_shift_exact():
    a = pressure_periodic_sum(SQUARING, ZERO, 0.5, 6)
    b = pressure_periodic_sum(SQUARING, parse_potential("0.25"), 0.5, 6)
    assert b.value - a.value == pytest.approx(0.25, abs=1e-10)


# -- variational --------------------------------------------------------------


def test_variational_mme_squaring():
    mu = mme_measure(SQUARING, sample_julia(SQUARING, 500, seed=1))
    est = pressure_variational(SQUARING, ZERO, 0.0, [mu])
    assert est.bound_kind == "lower"
    assert est.value == pytest.approx(LN2, abs=1e-6)
    assert est.argmax_measure is mu


def test_variational_fixed_point_t1():
    mu = periodic_measure(SQUARING, _fixed_point(SQUARING, 1.0))
    est = pressure_variational(SQUARING, ZERO, 1.0, [mu])
    assert est.value == pytest.approx(-LN2, rel=1e-9)


def test_variational_chebyshev_family():
    mme = mme_measure(CHEBYSHEV, sample_julia(CHEBYSHEV, 20000, seed=13))
    fams = [mme,
            periodic_measure(CHEBYSHEV, _fixed_point(CHEBYSHEV, 2.0)),
            periodic_measure(CHEBYSHEV, _fixed_point(CHEBYSHEV, -1.0))]
    est = pressure_variational(CHEBYSHEV, ZERO, 1.0, fams)
    assert est.value == pytest.approx(0.0, abs=2.5e-2)
    assert est.notes["argmax_kind"] == "mme_sample"


def test_variational_below_fiber():
    mu = mme_measure(SQUARING, sample_julia(SQUARING, 500, seed=1))
    nu = periodic_measure(SQUARING, _fixed_point(SQUARING, 1.0))
    phi = parse_potential("re(z)")
    for t in (0.0, 0.5):
        lower = pressure_variational(SQUARING, phi, t, [mu, nu])
        fiber = pressure_preimage_sum(SQUARING, phi, t, 1.0, n_max=12)
        assert lower.value <= fiber.value + fiber.band + 1e-6


def test_variational_rejects_unknown_entropy():
    mu = mme_measure(SQUARING, sample_julia(SQUARING, 100, seed=1))
    mu.kind = "mystery"
    with pytest.raises(ValueError):
        pressure_variational(SQUARING, ZERO, 0.0, [mu])


# -- series certificate -------------------------------------------------------


def test_series_geometric_weights():
    a = 2.0
    weights = [(k, k * math.log(a)) for k in range(1, 41)]
    out = series_pressure_bound(weights, LN2 - 0.05)
    assert out.s0 is not None
    assert out.s0 < math.exp(-(LN2 - 0.05))
    # geometric series reaches 1 where sum (2s)^k = 1: s ~ 1/4
    assert out.s0 == pytest.approx(0.25, abs=1e-3)
    assert -math.log(out.s0) > LN2 - 0.05


def test_series_single_weight():
    out = series_pressure_bound([(1, 0.0)], -0.1)
    assert out.s0 == pytest.approx(1.0, abs=1e-9)


def test_series_no_mass():
    out = series_pressure_bound([(1, -math.inf), (2, -math.inf)], 0.0)
    assert out.s0 is None and out.radius_upper is None


def test_series_no_certificate_at_depth():
    # tiny weights cannot reach 1 below the cutoff
    out = series_pressure_bound([(1, -50.0), (2, -50.0)], 0.0)
    assert out.s0 is None


def test_series_divergent_weights():
    weights = [(k, 0.5 * k * k) for k in range(1, 10)]
    with pytest.raises(DivergentWeights):
        series_pressure_bound(weights, 0.0)


def test_series_validates_exponents():
    with pytest.raises(ValueError):
        series_pressure_bound([(2, 0.0), (2, 0.0)], 0.0)
    with pytest.raises(ValueError):
        series_pressure_bound([(0, 0.0)], 0.0)


# -- curves -------------------------------------------------------------------


def test_curve_fiber_squaring_line():
    grid = [0.0, 0.25, 0.5, 0.75, 1.0, 1.25, 1.5, 1.75, 2.0]
    ests = pressure_curve(SQUARING, ZERO, grid, method="preimage", x0=1.0)
    for t, est in zip(grid, ests):
        assert est.value == pytest.approx((1 - t) * LN2, abs=1e-9)
        assert est.notes["shared_census"]


def test_curve_periodic_squaring_line():
    grid = [0.0, 0.5, 1.0, 2.0]
    ests = pressure_curve(SQUARING, ZERO, grid, method="periodic", n_max=10)
    for t, est in zip(grid, ests):
        assert est.value == pytest.approx((1 - t) * LN2, abs=1e-9)


def test_curve_convex_and_decreasing():
    grid = [0.0, 0.25, 0.5, 0.75, 1.0, 1.25, 1.5]
    ests = pressure_curve(SQUARING, parse_potential("re(z)"), grid,
                          method="preimage", x0=1.0)
    vals = [e.value for e in ests]
    assert all(b <= a + 1e-9 for a, b in zip(vals, vals[1:]))
    d2 = [vals[i - 1] - 2 * vals[i] + vals[i + 1]
          for i in range(1, len(vals) - 1)]
    assert all(x >= -1e-9 for x in d2)


def test_curve_rejects_unsorted():
    with pytest.raises(ValueError):
        pressure_curve(SQUARING, ZERO, [1.0, 0.0], method="periodic")


# -- iterate scaling and co-homology ------------------------------------------


def test_iterate_scaling_fiber():
    phi = parse_potential("re(z)")
    base = pressure_preimage_sum(SQUARING, phi, 0.0, 1.0, n_max=12)
    f2 = SQUARING.iterate_map(2)
    s2 = BirkhoffSum(phi, 2, orbit_map=SQUARING)
    doubled = pressure_preimage_sum(f2, s2, 0.0, 1.0, n_max=6)
    tol = 3.0 * (2.0 * base.band + doubled.band)
    assert doubled.value == pytest.approx(2.0 * base.value, abs=max(tol, 1e-8))


def test_iterate_scaling_periodic():
    phi = parse_potential("re(z)")
    base = pressure_periodic_sum(SQUARING, phi, 0.0, 10)
    f2 = SQUARING.iterate_map(2)
    s2 = BirkhoffSum(phi, 2, orbit_map=SQUARING)
    doubled = pressure_periodic_sum(f2, s2, 0.0, 5)
    tol = 3.0 * (2.0 * base.band + doubled.band)
    assert doubled.value == pytest.approx(2.0 * base.value, abs=max(tol, 1e-8))


def test_cohomology_periodic_exact():
    # phi + h - h(f .) has identical Birkhoff sums over cycles
    phi = parse_potential("re(z)")
    h = parse_potential("im(z)")
    tilde = SumPotential([phi, h, OrbitCombination(h, (0.0, 1.0))],
                         [1.0, 1.0, -1.0])
    a = pressure_periodic_sum(SQUARING, phi, 0.5, 8)
    b = pressure_periodic_sum(SQUARING, tilde, 0.5, 8)
    assert b.value == pytest.approx(a.value, abs=1e-10)


def test_cohomology_fiber_within_bands():
    phi = parse_potential("re(z)")
    h = parse_potential("im(z)")
    tilde = SumPotential([phi, h, OrbitCombination(h, (0.0, 1.0))],
                         [1.0, 1.0, -1.0])
    a = pressure_preimage_sum(SQUARING, phi, 0.0, 1.0, n_max=12)
    b = pressure_preimage_sum(SQUARING, tilde, 0.0, 1.0, n_max=12)
    assert abs(a.value - b.value) <= 3.0 * (a.band + b.band) + 1e-9


# -- key-lemma margin spot check ----------------------------------------------


def test_key_lemma_margin_spot():
    phi = parse_potential("re(z)")
    mu = periodic_measure(SQUARING, _fixed_point(SQUARING, 1.0))
    for t in (0.0, 0.5, 1.0):
        est = pressure_periodic_sum(SQUARING, phi, t, 8)
        rhs = mu.integrate(phi, fmap=SQUARING, t=t) - t * mu.lyapunov
        assert est.value > rhs + 1e-3


# -- freezing point and kink --------------------------------------------------


def _synthetic_curve(ts, ps, band=1e-12):
    return [PressureEstimate(value=p, method="periodic_sum", approximants=(),
                             band=band, bound_kind="two_sided",
                             metric_mode="euclidean", t=t,
                             potential_source="synthetic")
            for t, p in zip(ts, ps)]


def test_freezing_squaring_sentinel():
    grid = [0.0, 0.5, 1.0, 1.5, 2.0]
    curve = pressure_curve(SQUARING, ZERO, grid, method="preimage", x0=1.0)
    chi = chi_inf_estimate(SQUARING, 4)
    assert freezing_point(SQUARING, curve, float(chi)) == math.inf


def test_freezing_two_slope_crossing():
    chi = 0.9 * LN2
    ts = [0.5 * k for k in range(25)]  # 0 .. 12
    ps = [max((1 - t) * LN2, -chi * t) for t in ts]
    got = freezing_point(None, _synthetic_curve(ts, ps), chi)
    assert got == pytest.approx(10.0, abs=1e-6)


def test_freezing_chi_zero_trivial():
    ts = [0.0, 0.5, 1.0]
    ps = [1.0, 0.8, 0.7]
    assert freezing_point(None, _synthetic_curve(ts, ps), 0.0) == math.inf


def test_freezing_grid_too_short():
    ts = [0.0, 0.4, 0.8]
    ps = [LN2 * (1 - 2 * t) for t in ts]  # still descending, no crossing
    with pytest.raises(InconsistentCurve):
        freezing_point(None, _synthetic_curve(ts, ps), LN2)


def test_freezing_multiple_sign_changes():
    ts = [0.0, 0.5, 1.0, 1.5]
    ps = [0.5, -0.5, 0.5, -0.5]
    with pytest.raises(InconsistentCurve):
        freezing_point(None, _synthetic_curve(ts, ps), 0.0)


def test_kink_two_slope():
    ts = np.arange(0.0, 12.01, 0.5)
    ps = [max((1 - t) * LN2, -0.6 * t) for t in ts]
    hit = kink_detect(list(zip(ts, ps)))
    assert hit is not None
    t_star, left, right = hit
    # branches cross at t where (1-t) ln2 = -0.6 t
    cross = LN2 / (LN2 - 0.6)
    gap = abs(-0.6 + LN2)
    assert abs(t_star - cross) <= 0.5 + 1e-9
    assert left == pytest.approx(-LN2, abs=2 * 0.5 * gap)
    assert right == pytest.approx(-0.6, abs=2 * 0.5 * gap)


def test_kink_affine_none():
    ts = np.arange(0.0, 2.01, 0.25)
    ps = [0.3 - 1.7 * t for t in ts]
    assert kink_detect(list(zip(ts, ps))) is None


def test_kink_noisy_affine_below_floor():
    rng = np.random.default_rng(3)
    ts = np.arange(0.0, 2.01, 0.25)
    ps = np.array([0.3 - 1.7 * t for t in ts]) + 1e-6 * rng.normal(size=ts.size)
    assert kink_detect(list(zip(ts, ps)), noise_floor=1e-5) is None


def test_kink_needs_uniform_grid():
    with pytest.raises(ValueError):
        kink_detect([(0.0, 1.0), (0.1, 0.9), (0.5, 0.5)])
