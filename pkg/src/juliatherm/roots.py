"""Polynomial root finding by simultaneous (Aberth-Ehrlich) iteration.

Three entry points share one iteration scheme:

* aberth_roots        -- one polynomial, coefficients constant-first;
* aberth_roots_batch  -- many polynomials of one degree (fiber solves);
* aberth_functional   -- coefficient-free: the caller supplies Newton ratios
                         p/p' evaluated any way it likes (used for periodic
                         points of high iterates whose coefficients overflow).

All roots are returned sorted lexicographically by (re, im) so downstream
reductions are deterministic.
"""

from __future__ import annotations

import numpy as np

from .errors import RootSolveFailure

_TWO_PI = 2.0 * np.pi
# fixed start-angle offset; breaks conjugation symmetry, keeps runs reproducible
_ANGLE_OFFSET = 0.39996


def trim_coeffs(coef, rel_tol=0.0):
    """Drop negligible leading (highest-order) coefficients.

    Returns (trimmed array, number of dropped coefficients).  The drop count
    is what callers turn into multiplicity of the point at infinity.
    """
    c = np.atleast_1d(np.asarray(coef, dtype=complex))
    scale = np.max(np.abs(c)) if c.size else 0.0
    if scale == 0.0:
        return c[:1] * 0.0, c.size - 1
    thresh = rel_tol * scale
    last = c.size - 1
    while last > 0 and abs(c[last]) <= thresh:
        last -= 1
    return c[: last + 1], c.size - 1 - last


def _eval_with_scale(coef, x):
    """Horner evaluation of p, p' and the running magnitude scale at x."""
    m = coef.size - 1
    p = np.full_like(x, coef[m])
    dp = np.zeros_like(x)
    s = np.full(x.shape, abs(coef[m]))
    ax = np.abs(x)
    for k in range(m - 1, -1, -1):
        dp = dp * x + p
        p = p * x + coef[k]
        s = s * ax + abs(coef[k])
    return p, dp, s

def _pairwise_repulsion(x):
    """sum_{j != i} 1/(x_i - x_j), chunked to bound memory for large m."""
    m = x.size
    out = np.zeros(m, dtype=complex)
    step = m if m <= 1024 else max(1, (1 << 21) // m)
    for lo in range(0, m, step):
        hi = min(lo + step, m)
        diff = x[lo:hi, None] - x[None, :]
        idx = np.arange(lo, hi)
        diff[idx - lo, idx] = 1.0
        inv = 1.0 / diff
        inv[idx - lo, idx] = 0.0
        out[lo:hi] = inv.sum(axis=1)
    return out


def sort_roots(roots):
    roots = np.asarray(roots, dtype=complex)
    if roots.size == 0:
        return roots
    order = np.lexsort((roots.imag, roots.real))
    return roots[order]


def aberth_roots(coef, tol=1e-12, max_iter=160):
    """All complex roots of the polynomial with constant-first coefficients.

    Degenerate degrees (0, 1) are handled directly.  Raises RootSolveFailure
    when residuals |p(x)| <= tol * scale are not reached for every root.
    """
    c, _ = trim_coeffs(coef, rel_tol=0.0)
    m = c.size - 1
    if m <= 0:
        return np.zeros(0, dtype=complex)
    if m == 1:
        return np.array([-c[0] / c[1]], dtype=complex)
    c = c / c[m]
    radius = 1.0 + np.max(np.abs(c[:-1])) if m else 1.0
    ang = _TWO_PI * (np.arange(m) + 0.5) / m + _ANGLE_OFFSET
    x = radius * np.exp(1j * ang)
    ok = np.zeros(m, dtype=bool)
    for _ in range(max_iter):
        p, dp, s = _eval_with_scale(c, x)
        ok = np.abs(p) <= tol * (s + 1.0)
        if ok.all():
            break
        w = np.where(dp != 0, p / np.where(dp != 0, dp, 1.0), 0.1 + 0.1j)
        rep = _pairwise_repulsion(x)
        denom = 1.0 - w * rep
        small = np.abs(denom) < 1e-12
        denom = np.where(small, 1.0, denom)
        x = x - w / denom
        bad = ~np.isfinite(x)
        if bad.any():
            x[bad] = radius * np.exp(1j * (ang[bad] + 1.1))
    else:
        p, _, s = _eval_with_scale(c, x)
        ok = np.abs(p) <= tol * (s + 1.0)
    if not ok.all():
        worst = float(np.max(np.abs(p)[~ok]))
        raise RootSolveFailure(
            "simultaneous iteration left %d/%d roots above tolerance"
            % (int((~ok).sum()), m),
            residual=worst,
            iterations=max_iter,
        )
    return sort_roots(x)


def aberth_roots_batch(coefs, tol=1e-12, max_iter=90):
    """Roots of many same-degree polynomials, coefficients in rows.

    Rows must have a genuinely nonzero leading coefficient (callers deflate
    degree-dropped rows to the scalar path first).  Output shape (B, m),
    each row sorted by (re, im).
    """
    coefs = np.asarray(coefs, dtype=complex)
    B, m1 = coefs.shape
    m = m1 - 1
    if B == 0 or m == 0:
        return np.zeros((B, 0), dtype=complex)
    c = coefs / coefs[:, -1][:, None]
    if m == 1:
        return (-c[:, 0])[:, None]
    radius = 1.0 + np.max(np.abs(c[:, :-1]), axis=1)
    ang = _TWO_PI * (np.arange(m) + 0.5) / m + _ANGLE_OFFSET
    x = radius[:, None] * np.exp(1j * ang)[None, :]
    ok = np.zeros((B, m), dtype=bool)
    for _ in range(max_iter):
        p = np.repeat(c[:, -1][:, None], m, axis=1)
        dp = np.zeros_like(x)
        s = np.abs(p).copy()
        ax = np.abs(x)
        for k in range(m - 1, -1, -1):
            dp = dp * x + p
            p = p * x + c[:, k][:, None]
            s = s * ax + np.abs(c[:, k])[:, None]
        ok = np.abs(p) <= tol * (s + 1.0)
        if ok.all():
            break
        w = p / np.where(dp != 0, dp, 1.0)
        w = np.where(dp != 0, w, 0.1 + 0.1j)
        diff = x[:, :, None] - x[:, None, :]
        ii = np.arange(m)
        diff[:, ii, ii] = 1.0
        inv = 1.0 / diff
        inv[:, ii, ii] = 0.0
        rep = inv.sum(axis=2)
        denom = 1.0 - w * rep
        denom = np.where(np.abs(denom) < 1e-12, 1.0, denom)
        x = x - w / denom
        bad = ~np.isfinite(x)
        if bad.any():
            ang_b = np.broadcast_to(ang, x.shape)
            x[bad] = (radius[:, None] * np.exp(1j * (ang_b + 1.1)))[bad]
    if not ok.all():
        raise RootSolveFailure(
            "batched iteration left %d roots above tolerance" % int((~ok).sum()),
            residual=float(np.max(np.abs(p)[~ok])),
            iterations=max_iter,
        )
    # per-row deterministic sort
    order = np.lexsort((x.imag, x.real), axis=1)
    return np.take_along_axis(x, order, axis=1)


def _nearest_neighbor_dist(x):
    """Distance from each point to its nearest distinct neighbor (blockwise)."""
    m = x.size
    out = np.full(m, np.inf)
    step = max(1, (2**21) // max(m, 1))
    for lo in range(0, m, step):
        hi = min(lo + step, m)
        d = np.abs(x[lo:hi, None] - x[None, :])
        d[d == 0.0] = np.inf
        out[lo:hi] = d.min(axis=1)
    out[~np.isfinite(out)] = 1.0
    return out


def aberth_functional(newton_fn, starts, tol=1e-12, max_iter=400, jitter_phase=0.0):
    """Simultaneous iteration with externally evaluated Newton ratios.

    newton_fn(x) must return (w, ok, raw): the Newton correction p/p' at
    each point, a residual-acceptance mask, and a mask of points whose w is
    a bare drift step to apply without the pairwise correction (repulsion
    from settled roots would turn an inward pull on a far-out particle into
    outward growth).  Used where coefficients of the target polynomial
    cannot be formed in double precision.  Starting positions are the
    caller's problem; convergence from a generic circle is hopeless at high
    degree, so callers seed near the expected root locus.
    """
    x = np.array(starts, dtype=complex)
    m = x.size
    # deterministic jitter at a fraction of the local seed separation:
    # big enough to split coincident seeds toward distinct targets
    ang = _TWO_PI * 0.6180339887 * np.arange(m) + jitter_phase
    x = x + 0.25 * _nearest_neighbor_dist(x) * np.exp(1j * ang)
    reseed = x.copy()
    ok = np.zeros(m, dtype=bool)
    for _ in range(max_iter):
        w, ok, raw = newton_fn(x)
        if ok.all():
            break
        # trust region: never jump more than half the local scale
        cap = 0.5 * (1.0 + np.abs(x))
        aw = np.abs(w)
        w = np.where(aw > cap, w * (cap / np.where(aw == 0, 1.0, aw)), w)
        rep = _pairwise_repulsion(x)
        denom = 1.0 - w * rep
        denom = np.where(np.abs(denom) < 1e-12, 1.0, denom)
        step = np.where(raw, w, w / denom)
        x = x - step
        bad = ~np.isfinite(x)
        if bad.any():
            x[bad] = reseed[bad] * 1.0000001 + 1e-7
    if not ok.all():
        raise RootSolveFailure(
            "functional iteration left %d/%d roots above tolerance"
            % (int((~ok).sum()), m),
            iterations=max_iter,
        )
    return sort_roots(x)


def cluster_roots(roots, cluster_tol=1e-6):
    """Merge numerically coincident roots; returns (means, multiplicities).

    Simultaneous iteration spreads an m-fold root over a tiny star of m
    points; clustering recovers the multiplicity.  Tolerance is relative
    to 1 + |root|.
    """
    roots = sort_roots(roots)
    if roots.size == 0:
        return roots, np.zeros(0, dtype=int)
    means = []
    counts = []
    used = np.zeros(roots.size, dtype=bool)
    for i in range(roots.size):
        if used[i]:
            continue
        group = [roots[i]]
        used[i] = True
        for j in range(i + 1, roots.size):
            if used[j]:
                continue
            if abs(roots[j] - roots[i]) <= cluster_tol * (1.0 + abs(roots[i])):
                group.append(roots[j])
                used[j] = True
        means.append(np.mean(group))
        counts.append(len(group))
    means = np.asarray(means, dtype=complex)
    counts = np.asarray(counts, dtype=int)
    order = np.lexsort((means.imag, means.real))
    return means[order], counts[order]
