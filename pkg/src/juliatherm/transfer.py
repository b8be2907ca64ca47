"""Ulam discretization of the weighted transfer operator.

The operator (L g)(x) = sum over f(y) = x of exp(phi(y) - t ln|f'(y)|) g(y)
is discretized by preimage transport: each cell keeps one representative
point, its fiber is weighted and binned to cells, and the resulting
nonnegative matrix stands in for L.  The leading eigenvalue estimates
e^{pressure}, its eigenvector is the equilibrium-density proxy, and the
second eigenvalue modulus measures the mixing rate.

Cell geometry comes in three modes: arcs of the unit circle (exact for
monic power maps, whose angle dynamics is d-fold doubling), intervals of
[-2, 2] spaced uniformly in the angle conjugacy x = 2 cos(theta) (exact
Markov structure for the degree-two Chebyshev map), and square grid boxes
occupied by the sample (any other map).
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from scipy.sparse import csr_matrix
from scipy.sparse.csgraph import connected_components
from scipy.spatial import cKDTree

from .errors import EmptyCells, Reducible, RootSolveFailure
from .pressure import (BAND_FLOOR, PressureEstimate, _RAMIFIED_MATCH_TOL)

_POWER_TOL = 1e-12
_EIG_TOL = 1e-10
_BAND_PER_CELL = 2.0
_SCC_MASS = 0.9
_CORR_HORIZON = 20
_CORR_NOISE = 1e-12


@dataclass
class CellPartition:
    """One cell per row of the transfer matrix, with a locate() map.

    Exact modes (circle, interval) carry one analytic representative per
    cell; grid mode transports the fiber of every sample point with the
    weight split evenly inside each cell, which matches the dart density
    to the sampling measure and keeps the partition covered."""

    mode: str  # circle | interval | grid
    representatives: np.ndarray
    edges: np.ndarray = None
    grid_origin: complex = 0j
    grid_step: float = 0.0
    grid_keys: dict = field(default_factory=dict)
    rep_points: np.ndarray = None  # transport sources (flat)
    rep_owner: np.ndarray = None   # owning cell per source
    rep_scale: np.ndarray = None   # 1 / sources-in-cell per source
    _snap_tree: object = None
    _snap_radius: float = 0.0

    def __len__(self):
        return int(self.representatives.size)

    def locate(self, points):
        """Cell index per point; -1 for points escaping the cover."""
        points = np.asarray(points, dtype=complex)
        n = len(self)
        if self.mode == "circle":
            h = 2.0 * np.pi / n
            ang = np.mod(np.angle(points), 2.0 * np.pi)
            return np.minimum((ang / h).astype(int), n - 1)
        if self.mode == "interval":
            h = np.pi / n
            out = np.full(points.shape, -1, dtype=int)
            ok = (np.abs(points.imag) < 1e-6) & (np.abs(points.real) < 2.0 + 1e-6)
            theta = np.arccos(np.clip(points.real[ok] / 2.0, -1.0, 1.0))
            out[ok] = np.minimum((theta / h).astype(int), n - 1)
            return out
        s = self.grid_step
        ix = np.floor((points.real - self.grid_origin.real) / s).astype(int)
        iy = np.floor((points.imag - self.grid_origin.imag) / s).astype(int)
        out = np.full(points.shape, -1, dtype=int)
        for k, (a, b) in enumerate(zip(ix.ravel(), iy.ravel())):
            out.ravel()[k] = self.grid_keys.get((a, b), -1)
        missed = out < 0
        if np.any(missed) and self._snap_tree is not None:
            pts = points[missed]
            d, j = self._snap_tree.query(
                np.column_stack([pts.real, pts.imag]))
            snap = np.where(d <= self._snap_radius, j, -1)
            out[missed] = snap
        return out


@dataclass
class UlamModel:
    """Discretized weighted transfer operator plus spectral state."""

    cells: CellPartition
    matrix: np.ndarray
    t: float
    potential_source: str
    metric_mode: str = "euclidean"
    fmap: object = None
    notes: dict = field(default_factory=dict)
    leading: float = None
    eigen_density: np.ndarray = None
    left_vector: np.ndarray = None
    scc_indices: np.ndarray = None


def _resolve_mode(fmap, mode):
    if mode != "auto":
        if mode not in ("circle", "interval", "grid"):
            raise ValueError("unknown cell mode %r" % mode)
        return mode
    if fmap is not None and fmap.is_polynomial:
        num = np.asarray(fmap.num)
        lead = num[-1] / fmap.den[0]
        inner = np.max(np.abs(num[1:-1])) if num.size > 2 else 0.0
        if abs(lead - 1.0) < 1e-12 and inner < 1e-12:
            if abs(num[0]) < 1e-12:
                return "circle"  # monic power map: unit-circle dynamics
            if fmap.degree == 2 and abs(num[0] / fmap.den[0] + 2.0) < 1e-12:
                return "interval"  # Chebyshev: angle-conjugate doubling
    return "grid"


def _make_cells(mode, sample_points, cell_count):
    if mode == "circle":
        h = 2.0 * np.pi / cell_count
        mid = (np.arange(cell_count) + 0.5) * h
        return CellPartition(mode=mode, representatives=np.exp(1j * mid),
                             edges=np.arange(cell_count + 1) * h)
    if mode == "interval":
        h = np.pi / cell_count
        mid = (np.arange(cell_count) + 0.5) * h
        return CellPartition(mode=mode,
                             representatives=2.0 * np.cos(mid) + 0.0j,
                             edges=np.arange(cell_count + 1) * h)
    pts = sample_points
    span_x = max(float(np.ptp(pts.real)), 1e-9)
    span_y = max(float(np.ptp(pts.imag)), 1e-9)
    long_side = max(span_x, span_y, 1e-6)
    # area-based box size, clamped so a line-like set still gets the full
    # cell budget along its long axis
    s = max(math.sqrt(span_x * span_y / cell_count),
            long_side / cell_count) * (1.0 + 1e-9)
    origin = complex(np.min(pts.real), np.min(pts.imag))
    ix = np.floor((pts.real - origin.real) / s).astype(int)
    iy = np.floor((pts.imag - origin.imag) / s).astype(int)
    boxes = {}
    for k, key in enumerate(zip(ix, iy)):
        cx = origin.real + (key[0] + 0.5) * s
        cy = origin.imag + (key[1] + 0.5) * s
        boxes.setdefault(key, []).append((abs(pts[k] - complex(cx, cy)), k))
    # corner slivers (boxes the set barely clips) hold too little of the
    # sample to ever receive transported fiber points; merge them into
    # their neighbors via the snap step below
    floor = 0.3 * len(pts) / max(len(boxes), 1)
    keys = sorted(k for k, v in boxes.items() if len(v) >= max(1.0, floor))
    if not keys:
        keys = sorted(boxes)
    reps, src_pts, src_owner, src_scale = [], [], [], []
    for i, key in enumerate(keys):
        ranked = sorted(boxes[key])  # center-nearest first
        reps.append(pts[ranked[0][1]])
        for _, k in ranked:  # every sample point transports, weight split
            src_pts.append(pts[k])
            src_owner.append(i)
            src_scale.append(1.0 / len(ranked))
    cells = CellPartition(
        mode=mode, representatives=np.array(reps, dtype=complex),
        grid_origin=origin, grid_step=s,
        grid_keys={k: i for i, k in enumerate(keys)},
        rep_points=np.array(src_pts, dtype=complex),
        rep_owner=np.array(src_owner, dtype=int),
        rep_scale=np.array(src_scale))
    centers = np.array([[origin.real + (k[0] + 0.5) * s,
                         origin.imag + (k[1] + 0.5) * s] for k in keys])
    cells._snap_tree = cKDTree(centers)
    cells._snap_radius = 1.5 * s
    return cells


def build_ulam(fmap, potential, t, sample, cell_count, mode="auto",
               metric="euclidean"):
    """Assemble the Ulam matrix by weighted preimage transport.

    Entry (i, j) holds the total weight exp(phi - t ln|f'|) of the
    preimages of representative i that land in cell j.  Preimages sitting
    on a critical point are excluded for t > 0 (their weight would be
    infinite) under the same structural proximity rule the fiber-sum
    pressure engine uses, keeping the two methods comparable.
    """
    cell_count = int(cell_count)
    if cell_count < 16:
        raise ValueError("cell_count must be at least 16")
    t = float(t)
    mode = _resolve_mode(fmap, mode)
    pts = np.asarray(sample.points, dtype=complex).reshape(-1)
    cells = _make_cells(mode, pts, cell_count)
    n = len(cells)
    if mode == "grid" and n < 16:
        raise EmptyCells(
            "sample occupies only %d grid cells of the %d requested"
            % (n, cell_count))
    covered = np.zeros(n, dtype=bool)
    loc = cells.locate(pts)
    covered[loc[loc >= 0]] = True
    empty = int(np.count_nonzero(~covered))
    if empty > 0.10 * n:
        raise EmptyCells("%d of %d cells hold no sample point" % (empty, n))
    if cells.rep_points is not None:
        sources = cells.rep_points
        src_owner = cells.rep_owner
        src_scale = cells.rep_scale
    else:
        sources = cells.representatives
        src_owner = np.arange(n)
        src_scale = np.ones(n)
    if fmap.is_polynomial:
        fibers = fmap.preimages_array(sources)
        d = fibers.shape[1]
        owner = np.repeat(src_owner, d)
        scale = np.repeat(src_scale, d)
        ys = fibers.reshape(-1)
    else:
        owner_list, ys_list, scale_list = [], [], []
        for i, r in enumerate(sources):
            for p, m in fmap.preimages(r):
                if p.infinite:
                    continue
                owner_list.extend([src_owner[i]] * m)
                ys_list.extend([p.value] * m)
                scale_list.extend([src_scale[i]] * m)
        owner = np.array(owner_list, dtype=int)
        ys = np.array(ys_list, dtype=complex)
        scale = np.array(scale_list)
    crit = np.array([complex(c.value) for c, _ in fmap.critical_points()
                     if not c.infinite])
    excluded = 0
    if t > 0.0 and crit.size:
        sep = np.min(np.abs(ys[:, None] - crit[None, :]), axis=1)
        ramified = sep < _RAMIFIED_MATCH_TOL * (1.0 + np.abs(ys))
        excluded = int(np.count_nonzero(ramified))
        owner, ys, scale = owner[~ramified], ys[~ramified], scale[~ramified]
    exponent = np.asarray(
        potential.evaluate(ys, fmap=fmap, t=t, clamp=True), dtype=float)
    if t:
        with np.errstate(divide="ignore"):
            exponent = exponent - t * fmap.log_derivative_array(ys, metric)
    weight = np.exp(exponent) * scale
    dest = cells.locate(ys)
    keep = dest >= 0
    leakage = int(np.count_nonzero(~keep))
    matrix = np.zeros((n, n))
    np.add.at(matrix, (owner[keep], dest[keep]), weight[keep])
    inflow_empty = int(np.count_nonzero(matrix.sum(axis=0) == 0.0))
    if inflow_empty > 0.10 * n:
        raise EmptyCells(
            "%d of %d cells receive no preimage weight" % (inflow_empty, n))
    notes = {"mode": mode, "cell_count": n, "leakage": leakage,
             "excluded_ramified": excluded, "sample_empty": empty,
             "inflow_empty": inflow_empty}
    return UlamModel(cells=cells, matrix=matrix, t=t,
                     potential_source=potential.source_text(),
                     metric_mode=metric, fmap=fmap, notes=notes)


def _power_iteration(A, tol=_POWER_TOL, itmax=100000):
    n = A.shape[0]
    v = np.full(n, 1.0 / n)
    lam = 1.0
    for k in range(1, itmax + 1):
        w = A @ v
        s = float(w.sum())
        if s <= 0.0:
            raise Reducible("iteration mass vanished")
        w /= s
        res = float(np.abs(w - v).sum())
        if res < tol and abs(s - lam) < _EIG_TOL * (1.0 + abs(s)):
            return s, w, res, k
        v, lam = w, s
    raise RootSolveFailure("power iteration stalled", residual=res,
                           iterations=itmax)


def spectral_pressure(model):
    """ln of the leading eigenvalue of the Ulam matrix.

    The matrix must be irreducible in practice: the largest strongly
    connected component has to carry at least 90% of the cells, and the
    iteration runs on that component.  The eigenvector (equilibrium
    density proxy) and its left companion are cached on the model.
    """
    M = model.matrix
    n = M.shape[0]
    ncomp, labels = connected_components(csr_matrix(M > 0),
                                         connection="strong")
    sizes = np.bincount(labels, minlength=ncomp)
    big = int(np.argmax(sizes))
    if sizes[big] < _SCC_MASS * n:
        raise Reducible(
            "largest strongly connected block has %d of %d cells"
            % (int(sizes[big]), n))
    idx = np.nonzero(labels == big)[0]
    A = M[np.ix_(idx, idx)]
    lam, v, res, iters = _power_iteration(A)
    lam_l, u, _, _ = _power_iteration(A.T)
    density = np.zeros(n)
    density[idx] = v
    left = np.zeros(n)
    left[idx] = u / float(u @ v)
    model.leading = lam
    model.eigen_density = density
    model.left_vector = left
    model.scc_indices = idx
    band = max(BAND_FLOOR, 10.0 * res, _BAND_PER_CELL / n)
    notes = dict(model.notes)
    notes.update(iterations=iters, scc_fraction=float(sizes[big]) / n,
                 eigen_residual=res, left_leading=lam_l)
    return PressureEstimate(
        value=math.log(lam), method="transfer_spectral",
        approximants=((n, math.log(lam)),), band=band,
        bound_kind="two_sided", metric_mode=model.metric_mode, t=model.t,
        potential_source=model.potential_source, notes=notes)


def mixing_rate(model, horizon=_CORR_HORIZON):
    """Spectral gap and correlation-fit constant.

    rho is |second eigenvalue| / leading, measured by power iteration on
    the deflated matrix (window geometric mean of growth factors, robust
    to complex pairs).  C_proxy is the smallest constant making
    |corr(n)| <= C_proxy rho^n hold for every measured correlation of the
    Lipschitz pair (re z, im z) above the numerical noise floor; when all
    correlations sit at noise (the reference geometries are symmetric
    enough for exact cancellation) it defaults to 1.
    """
    if model.leading is None:
        spectral_pressure(model)
    idx = model.scc_indices
    A = model.matrix[np.ix_(idx, idx)]
    lam = model.leading
    h = model.eigen_density[idx]
    h = h / h.sum()
    u = model.left_vector[idx]
    u = u / float(u @ h)
    n = len(idx)
    x = np.cos(2.0 * np.pi * np.arange(n) / n) \
        + 0.5 * np.sin(4.0 * np.pi * np.arange(n) / n) + 1e-3
    growth = []
    nilpotent = False
    for _ in range(400):
        x = A @ x - lam * h * float(u @ x)
        g = float(np.linalg.norm(x))
        if g < 1e-280:
            nilpotent = True
            break
        x /= g
        growth.append(g)
    if nilpotent or not growth:
        mod2 = 0.0
    else:
        mod2 = float(np.exp(np.mean(np.log(growth[-50:]))))
    rho = min(max(mod2 / lam, 1e-12), 1.0)
    reps = model.cells.representatives[idx]
    phi, psi = reps.real, reps.imag
    mean_phi = float(u @ (phi * h))
    mean_psi = float(u @ (psi * h))
    w = psi * h
    corr = []
    for _ in range(horizon):
        w = (A @ w) / lam
        corr.append(float(u @ (phi * w)) - mean_phi * mean_psi)
    corr = np.array(corr)
    scale = (1.0 + float(np.max(np.abs(phi)))) * (1.0 + float(np.max(np.abs(psi))))
    noise = _CORR_NOISE * scale
    significant = np.abs(corr) > noise
    if np.any(significant):
        ns = np.nonzero(significant)[0] + 1
        log_c = np.log(np.abs(corr[significant])) - ns * math.log(rho)
        c_proxy = float(np.exp(np.clip(np.max(log_c), -700.0, 700.0)))
    else:
        c_proxy = 1.0
    model.notes.update(correlations=tuple(float(c) for c in corr),
                       correlation_noise=noise, rho=rho, c_proxy=c_proxy)
    return rho, c_proxy
