"""Pressure estimators for weighted backward dynamics.

Four independent routes to P(f, phi - t ln|f'|):

* fiber sums over backward trees of an anchor point,
* weighted sums over repelling periodic points,
* the variational lower bound over a family of empirical measures,
* a power-series radius certificate turning tabulated log-weights into a
  pressure lower bound.

Fiber and periodic sums produce level log-sums L_n whose increments
D_n = L_n - L_{n-1} converge geometrically for the expansive reference
maps; the reported value is a guarded iterated-Aitken limit of the
increments (plain extrapolation of L_n / n stalls at O(1/n)).  The band
is the spread of the last raw approximants, never of the extrapolants.

The curve/freezing-point/kink helpers operate on grids of estimates and
feed the phase-transition machinery.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from scipy.special import logsumexp as _scipy_lse

from .errors import (CombinatorialExplosion, DivergentWeights,
                     InconsistentCurve, SingularOrbit)
from .sphere import as_point

BAND_FLOOR = 1e-12
PREIMAGE_BUDGET = 1 << 16
_RAMIFIED_MATCH_TOL = 3e-5


@dataclass
class PressureEstimate:
    """One pressure value with its provenance and uncertainty band."""

    value: float
    method: str  # preimage_sum | periodic_sum | variational | series_bound | transfer_spectral | ifs_lambda
    approximants: tuple
    band: float
    bound_kind: str  # two_sided | lower
    metric_mode: str  # euclidean | spherical
    t: float
    potential_source: str
    notes: dict = field(default_factory=dict)
    argmax_measure: object = None


@dataclass
class PowerSeriesBound:
    """Radius certificate: if s0 is set, the tabulated series reaches 1 at
    s0 below exp(-target), so the radius is at most s0 and the pressure at
    least -ln(s0) > target."""

    coefficients: tuple
    radius_upper: object  # float or None
    s0: object  # float or None
    target: float


def stable_logsumexp(values):
    """Order-canonical log-sum-exp (sorted ascending before reduction)."""
    a = np.sort(np.asarray(values, dtype=float))
    if a.size == 0:
        return -math.inf
    return float(_scipy_lse(a))


def _aitken_once(x):
    d1 = x[1:] - x[:-1]
    d2 = x[2:] - 2.0 * x[1:-1] + x[:-2]
    out = x[2:].copy()
    safe = np.abs(d2) > 0.0
    out[safe] = x[2:][safe] - d1[1:][safe] ** 2 / d2[safe]
    return out


def extrapolate_increments(level_sums, noise=1e-12, max_levels=4):
    """Limit of D_n = L_n - L_{n-1} by guarded iterated Aitken.

    Each Aitken level removes one geometric error mode; the guard stops
    when the remaining signal sits at the noise floor or a level stops
    contracting (noise amplification), so exact-constant sequences pass
    through untouched.
    """
    L = np.asarray(level_sums, dtype=float)
    seq = np.diff(L, prepend=0.0)
    finite = np.isfinite(seq)
    if not finite.all():
        last_bad = np.max(np.nonzero(~finite)[0])
        seq = seq[last_bad + 1:]
    if seq.size == 0:
        raise ValueError("no finite increments to extrapolate")
    best = float(seq[-1])
    for _ in range(max_levels):
        if seq.size < 4:
            break
        tail_move = abs(seq[-1] - seq[-2])
        d2 = seq[-3] - 2.0 * seq[-2] + seq[-1]
        if abs(d2) <= noise * (1.0 + abs(seq[-1])):
            break
        nxt = _aitken_once(seq)
        if not np.all(np.isfinite(nxt)) or nxt.size < 2:
            break
        if abs(nxt[-1] - nxt[-2]) > tail_move:
            break
        seq = nxt
        best = float(seq[-1])
    return best


def _band_of(pvals):
    tail = np.asarray(pvals[-3:], dtype=float)
    if tail.size < 2 or not np.all(np.isfinite(tail)):
        return max(BAND_FLOOR, 1.0)
    return max(float(np.max(tail) - np.min(tail)), BAND_FLOOR)


def _source_of(potential):
    try:
        return potential.source_text()
    except Exception:
        return repr(potential)


def _uses_parameter(potential):
    probe = getattr(potential, "uses_parameter", None)
    return bool(probe()) if callable(probe) else True


# -- fiber (backward-tree) estimator ------------------------------------------


class _FiberTree:
    """Backward tree of an anchor with per-node Birkhoff accumulators.

    Levels store, for the d^n (minus pruned) preimages at depth n: the
    points, the accumulated potential sum S_n(phi), the accumulated log
    derivative ln|(f^n)'|, and a taint flag marking descent through a
    ramified preimage.  The arrays are t-independent, so one tree serves a
    whole pressure curve (unless phi itself reads the parameter symbol).
    """

    def __init__(self, fmap, potential, x0, n_max, metric, t_phi,
                 budget=PREIMAGE_BUDGET):
        x0 = as_point(x0)
        if x0.infinite:
            raise ValueError("fiber anchor must be finite")
        needed = fmap.degree ** n_max
        if needed > budget:
            raise CombinatorialExplosion(
                "fiber tree needs %d leaves at depth %d" % (needed, n_max),
                needed=needed, budget=budget)
        self.fmap = fmap
        self.metric = metric
        self.n_max = n_max
        self.anchor = complex(x0.value)
        self.levels = []
        self.ramified_direct = 0
        # finite critical points, for structural ramification detection: a
        # multiple fiber root is only located to ~sqrt(solver tolerance),
        # so testing |f'| directly under-detects by orders of magnitude
        self._crit = np.array([complex(c.value)
                               for c, _ in fmap.critical_points()
                               if not c.infinite], dtype=complex)
        pts = np.array([self.anchor], dtype=complex)
        acc_phi = np.zeros(1)
        acc_logd = np.zeros(1)
        taint = np.zeros(1, dtype=bool)
        for _ in range(n_max):
            pts, acc_phi, acc_logd, taint = self._expand(
                potential, pts, acc_phi, acc_logd, taint, t_phi)
            self.levels.append((pts, acc_phi, acc_logd, taint))

    def _expand(self, potential, pts, acc_phi, acc_logd, taint, t_phi):
        f = self.fmap
        if f.is_polynomial:
            fibers = f.preimages_array(pts)
            kids = fibers.reshape(-1)
            parent = np.repeat(np.arange(pts.size), f.degree)
        else:
            kid_list, parent = [], []
            for i in range(pts.size):
                for p, mult in f.preimages(pts[i]):
                    if p.infinite:
                        raise SingularOrbit(
                            "backward tree reached the point at infinity")
                    kid_list.extend([p.value] * mult)
                    parent.extend([i] * mult)
            kids = np.array(kid_list, dtype=complex)
            parent = np.array(parent, dtype=int)
        with np.errstate(divide="ignore"):
            logd = f.log_derivative_array(kids, self.metric)
        if self._crit.size:
            sep = np.min(np.abs(kids[:, None] - self._crit[None, :]), axis=1)
            ramified = sep < _RAMIFIED_MATCH_TOL * (1.0 + np.abs(kids))
        else:
            ramified = np.zeros(kids.shape, dtype=bool)
        self.ramified_direct += int(np.count_nonzero(ramified))
        phi = np.asarray(
            potential.evaluate(kids, fmap=f, t=t_phi, clamp=True), dtype=float)
        return (kids,
                phi + acc_phi[parent],
                logd + acc_logd[parent],
                ramified | taint[parent])

    def level_sums(self, t):
        """L_n = ln sum of exp(S_n(phi) - t ln|(f^n)'|) for n = 1..n_max;
        at t > 0 tainted nodes (ramified ancestry) are excluded."""
        out = []
        for _, acc_phi, acc_logd, taint in self.levels:
            if t == 0.0:
                out.append(stable_logsumexp(acc_phi))
            else:
                keep = ~taint
                out.append(stable_logsumexp(acc_phi[keep] - t * acc_logd[keep]))
        return out


def pressure_preimage_sum(fmap, potential, t, x0, n_max=12,
                          metric="euclidean", on_critical="exclude",
                          budget=PREIMAGE_BUDGET):
    """Fiber-sum pressure: P_n = (1/n) ln sum over n-th preimages of the
    anchor of exp(S_n(phi) - t ln|(f^n)'|), extrapolated in n.

    Preimages are counted with multiplicity at t = 0.  At t > 0 a
    ramified preimage would contribute exp(+t * inf); the shipped
    convention excludes it (and its subtree) and reports the count in
    notes["excluded_ramified"], or raises SingularOrbit when
    on_critical="raise".  Anchor choice matters when the critical orbit
    lies inside the Julia set: a backward tree rooted on the critical
    orbit's web can collapse at t > 0 (the exclusion count exposes this).
    """
    t = float(t)
    tree = _FiberTree(fmap, potential, x0, n_max, metric, t,
                      budget=budget)
    if t > 0.0 and tree.ramified_direct and on_critical == "raise":
        raise SingularOrbit(
            "%d ramified preimages in the fiber tree" % tree.ramified_direct)
    L = tree.level_sums(t)
    pvals = [Ln / (k + 1) for k, Ln in enumerate(L)]
    value = extrapolate_increments(L)
    return PressureEstimate(
        value=value, method="preimage_sum",
        approximants=tuple((k + 1, p) for k, p in enumerate(pvals)),
        band=_band_of(pvals), bound_kind="two_sided", metric_mode=metric,
        t=t, potential_source=_source_of(potential),
        notes={"anchor": tree.anchor,
               "excluded_ramified": tree.ramified_direct if t > 0.0 else 0})


# -- periodic (repelling-cycle) estimator -------------------------------------


def _periodic_level_sum(fmap, potential, t, k, metric):
    pts = [p for p in fmap.periodic_points(k)
           if p.is_repelling and not p.location.infinite]
    if not pts:
        return -math.inf, 0
    z = np.array([complex(p.location) for p in pts])
    mult = np.array([abs(p.multiplier) for p in pts])
    orbit = fmap.orbit_array(z, k - 1)
    if not np.all(np.isfinite(orbit)):
        keep = np.all(np.isfinite(orbit), axis=0)
        z, mult, orbit = z[keep], mult[keep], orbit[:, keep]
    phi = np.asarray(potential.evaluate(orbit.reshape(-1), fmap=fmap, t=t,
                                        clamp=True), dtype=float)
    snphi = phi.reshape(orbit.shape).sum(axis=0)
    return stable_logsumexp(snphi - t * np.log(mult)), len(pts)


def pressure_periodic_sum(fmap, potential, t, n, metric="euclidean"):
    """Repelling-cycle pressure: (1/k) ln sum over repelling period-k
    points of exp(S_k(phi) - t ln|multiplier|), for k up to n, with the
    increment-extrapolated limit as value.

    The weight uses the cycle multiplier, a chart-free quantity, so the
    estimator is identical in both metrics; metric_mode is recorded for
    the phi evaluation only.
    """
    t = float(t)
    if n < 1:
        raise ValueError("need at least period 1")
    L, counts = [], []
    for k in range(1, n + 1):
        Lk, ck = _periodic_level_sum(fmap, potential, t, k, metric)
        L.append(Lk)
        counts.append(ck)
    pvals = [Lk / (k + 1) for k, Lk in enumerate(L)]
    value = extrapolate_increments(L)
    return PressureEstimate(
        value=value, method="periodic_sum",
        approximants=tuple((k + 1, p) for k, p in enumerate(pvals)),
        band=_band_of([p for p in pvals if np.isfinite(p)]),
        bound_kind="two_sided", metric_mode=metric, t=t,
        potential_source=_source_of(potential),
        notes={"repelling_counts": tuple(counts)})


# -- variational lower bound --------------------------------------------------


def pressure_variational(fmap, potential, t, measures, metric="euclidean"):
    """Lower bound sup over the supplied family of
    entropy + integral of phi - t * lyapunov; records the argmax measure.

    Only measures with exactly known entropy are admissible (periodic
    orbits and maximal-entropy samples); each measure's Lyapunov exponent
    is used in the metric it was computed in.
    """
    t = float(t)
    measures = list(measures)
    if not measures:
        raise ValueError("empty measure family")
    vals = []
    for mu in measures:
        if mu.kind not in ("periodic_orbit", "mme_sample"):
            raise ValueError(
                "measure kind %r lacks exactly known entropy" % mu.kind)
        vals.append(mu.entropy + mu.integrate(potential, fmap=fmap, t=t)
                    - t * mu.lyapunov)
    i = int(np.argmax(vals))
    return PressureEstimate(
        value=float(vals[i]), method="variational",
        approximants=tuple((j, float(v)) for j, v in enumerate(vals)),
        band=BAND_FLOOR, bound_kind="lower", metric_mode=metric, t=t,
        potential_source=_source_of(potential),
        notes={"argmax_index": i, "argmax_kind": measures[i].kind,
               "family_size": len(measures)},
        argmax_measure=measures[i])


# -- power-series radius certificate ------------------------------------------


def _check_weight_growth(ms, ws):
    finite = np.isfinite(ws)
    if np.count_nonzero(finite) < 3:
        return
    m, w = ms[finite], ws[finite]
    slopes = np.diff(w) / np.diff(m)
    if slopes.size >= 2 and np.all(np.diff(slopes) > 0) and \
            slopes[-1] - slopes[0] > 0.5:
        raise DivergentWeights(
            "log-weights grow superlinearly (slope %.3g -> %.3g): series "
            "radius 0" % (slopes[0], slopes[-1]))


def series_pressure_bound(weights, target):
    """Certify pressure > target from tabulated log-weights.

    The series sum_l exp(w_l) s^(m_l) is increasing in s; bisection finds
    the smallest s0 below exp(-target) where it reaches 1.  A truncated
    table only undercounts the series, so the certificate is one-sided:
    radius <= s0, pressure >= -ln(s0) > target.  s0 = None means no
    certificate at this truncation depth.
    """
    coeffs = tuple((int(m), float(w)) for m, w in weights)
    if not coeffs:
        raise ValueError("empty weight table")
    ms = np.array([m for m, _ in coeffs], dtype=float)
    ws = np.array([w for _, w in coeffs], dtype=float)
    if np.any(ms < 1) or np.any(np.diff(ms) <= 0):
        raise ValueError("exponents must be strictly increasing positive")
    _check_weight_growth(ms, ws)

    def log_phi(s):
        if s <= 0.0:
            return -math.inf
        return stable_logsumexp(ws + ms * math.log(s))

    s_hi = math.exp(-float(target))
    probe = s_hi * (1.0 - 1e-13)
    if not np.any(np.isfinite(ws)) or log_phi(probe) < 0.0:
        return PowerSeriesBound(coefficients=coeffs, radius_upper=None,
                                s0=None, target=float(target))
    lo, hi = 0.0, probe
    for _ in range(200):
        mid = 0.5 * (lo + hi)
        if log_phi(mid) >= 0.0:
            hi = mid
        else:
            lo = mid
        if hi - lo <= 1e-15 * hi:
            break
    return PowerSeriesBound(coefficients=coeffs, radius_upper=hi, s0=hi,
                            target=float(target))


# -- curve, freezing point, kink ----------------------------------------------


def pressure_curve(fmap, potential, t_grid, method="periodic",
                   metric="euclidean", n_max=None, x0=None,
                   budget=PREIMAGE_BUDGET):
    """Pressure estimates along a sorted t grid from one shared census.

    The periodic method reuses the map's cycle census across all t; the
    preimage method builds the backward tree (with its t-independent
    Birkhoff accumulators) once, unless the potential itself reads the
    parameter symbol.
    """
    ts = [float(t) for t in t_grid]
    if any(b < a for a, b in zip(ts, ts[1:])):
        raise ValueError("t grid must be sorted ascending")
    out = []
    if method in ("preimage", "fiber", "preimage_sum"):
        n_max = 12 if n_max is None else n_max
        anchor = _default_anchor(fmap) if x0 is None else x0
        if _uses_parameter(potential):
            for t in ts:
                out.append(pressure_preimage_sum(
                    fmap, potential, t, anchor, n_max=n_max, metric=metric,
                    budget=budget))
            return out
        tree = _FiberTree(fmap, potential, anchor, n_max, metric, None,
                          budget=budget)
        for t in ts:
            L = tree.level_sums(t)
            pvals = [Ln / (k + 1) for k, Ln in enumerate(L)]
            out.append(PressureEstimate(
                value=extrapolate_increments(L), method="preimage_sum",
                approximants=tuple((k + 1, p) for k, p in enumerate(pvals)),
                band=_band_of(pvals), bound_kind="two_sided",
                metric_mode=metric, t=t,
                potential_source=_source_of(potential),
                notes={"anchor": tree.anchor, "shared_census": True,
                       "excluded_ramified":
                           tree.ramified_direct if t > 0.0 else 0}))
        return out
    if method in ("periodic", "periodic_sum"):
        n_max = 10 if n_max is None else n_max
        for t in ts:
            est = pressure_periodic_sum(fmap, potential, t, n_max,
                                        metric=metric)
            est.notes["shared_census"] = True
            out.append(est)
        return out
    raise ValueError("unknown curve method %r" % method)


def _default_anchor(fmap):
    reps = [p for p in fmap.repelling_fixed_points()
            if not p.location.infinite]
    if not reps:
        raise ValueError("no finite repelling fixed point to anchor fibers")
    return max(reps, key=lambda p: abs(p.multiplier)).location


def freezing_point(fmap, curve, chi_inf, tol=1e-9):
    """First parameter where P(t) + t*chi_inf reaches zero, or the +inf
    sentinel when the curve can never cross.

    The crossing is refined by extending the last strictly positive
    affine segment (exact for piecewise-affine data, where linear
    interpolation through the kink would bias the root to the next grid
    point).  A grid that ends while the curve is still descending is
    inconsistent rather than a sentinel; so is a second sign change.
    """
    chi = float(chi_inf)
    ts = np.array([e.t for e in curve], dtype=float)
    ps = np.array([e.value for e in curve], dtype=float)
    bands = np.array([e.band for e in curve], dtype=float)
    if ts.size < 2:
        raise ValueError("need at least two curve points")
    eps = max(float(np.max(bands)), tol)
    g = ps + ts * chi
    pos = g > eps
    if chi <= tol and g[0] > eps and pos.all():
        # flat comparison line under a positive curve: never crosses
        return math.inf
    if pos.all():
        h = ts[-1] - ts[-2]
        slope_end = (g[-1] - g[-2]) / h
        if slope_end >= -2.0 * eps / h:
            return math.inf
        raise InconsistentCurve(
            "grid ends before the crossing: g still descending at t=%g"
            % ts[-1])
    i = int(np.argmin(pos))  # first index with g <= eps
    if np.any(g[i:] > eps):
        raise InconsistentCurve("g changes sign more than once beyond noise")
    if i == 0:
        return float(ts[0])
    if i >= 2:
        h = ts[i - 1] - ts[i - 2]
        m = (g[i - 1] - g[i - 2]) / h
        if m < 0.0:
            t_star = ts[i - 1] - g[i - 1] / m
            if ts[i - 1] - tol <= t_star <= ts[i] + tol:
                return float(min(max(t_star, ts[i - 1]), ts[i]))
    # fall back to the chord of the bracketing segment
    h = ts[i] - ts[i - 1]
    drop = g[i] - g[i - 1]
    if drop >= 0.0:
        return float(ts[i])
    return float(ts[i - 1] - g[i - 1] * h / drop)


def kink_detect(curve, noise_floor=None):
    """Locate a non-differentiability on a uniform grid: the point whose
    second difference exceeds 5x the noise floor, with one-sided slopes.
    Returns None when the curve is affine up to noise."""
    pts = [(e.t, e.value) if hasattr(e, "value") else (float(e[0]),
                                                      float(e[1]))
           for e in curve]
    ts = np.array([a for a, _ in pts])
    ps = np.array([b for _, b in pts])
    if ts.size < 3:
        return None
    hs = np.diff(ts)
    if np.max(hs) - np.min(hs) > 1e-9 * (1.0 + np.max(np.abs(hs))):
        raise ValueError("kink detection needs a uniform grid")
    h = float(np.mean(hs))
    d2 = ps[:-2] - 2.0 * ps[1:-1] + ps[2:]
    floor = max(float(np.median(np.abs(d2))),
                1e-12 * (1.0 + float(np.max(np.abs(ps)))))
    if noise_floor is not None:
        floor = max(floor, float(noise_floor))
    j = int(np.argmax(np.abs(d2)))
    if abs(d2[j]) <= 5.0 * floor:
        return None
    k = j + 1  # grid index of the kink point
    left = (ps[k] - ps[k - 1]) / h
    right = (ps[k + 1] - ps[k]) / h
    return float(ts[k]), float(left), float(right)
