"""Finite samples of Julia sets for supremum estimation and operator supports.

The workhorse is backward iteration: starting from a repelling fixed point,
each chain picks a uniformly random inverse branch at every step, so after
the burn-in the chain positions equidistribute toward the measure of
maximal entropy.  Branch choices come from a counter-based generator keyed
by (seed, step): the randomness at step s is a pure function of (seed, s),
so samples are bitwise reproducible under any thread schedule.

For polynomial maps an escape-time bisection mode finds boundary points of
the filled Julia set along rays, which is exact for maps whose bounded
orbits fill a nice region (the unit disk for the squaring map).
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from scipy.spatial import cKDTree

from .errors import SingularOrbit, ThermError
from .sphere import SpherePoint

_MEMBERSHIP_STEPS = 64


def _sphere_embedding(z):
    """Stereographic embedding into R^3 where Euclidean distance equals
    chordal distance (unit sphere scaled by 2)."""
    z = np.asarray(z, dtype=complex)
    s = 1.0 + np.abs(z) ** 2
    return np.column_stack([2.0 * z.real / s, 2.0 * z.imag / s,
                            (np.abs(z) ** 2 - 1.0) / s])


@dataclass
class JuliaSample:
    """A finite approximation of a Julia set.

    values holds the finite complex positions; points presents them as
    sphere points (the field the rest of the API consumes).
    """

    values: np.ndarray
    method: str  # inverse_iteration | escape_boundary
    burn_in: int
    seed: int
    map_degree: int = 0

    @property
    def points(self):
        return [SpherePoint(z) for z in self.values]

    def __len__(self):
        return int(self.values.size)

    def mesh_estimate(self):
        """Covering-radius proxy: the largest chordal nearest-neighbor
        distance within the sample."""
        if self.values.size < 2:
            return 2.0
        emb = _sphere_embedding(self.values)
        tree = cKDTree(emb)
        dist, _ = tree.query(emb, k=2)
        return float(np.max(dist[:, 1]))


@dataclass
class SupEstimate:
    """Sample supremum of a potential, honest about its one-sidedness.

    value is a lower bound for the true supremum unless a Lipschitz bound
    was supplied, in which case value includes the inflation term
    lipschitz * mesh and upper_bounded is True.
    """

    value: float
    sample_max: float
    bound_kind: str  # lower | inflated
    mesh: float = 0.0
    inflation: float = 0.0
    argmax: complex = 0j


def _branch_choices(seed, step, count, degree):
    """Uniform branch indices for one backward step, keyed by (seed, step)."""
    bits = np.random.Generator(
        np.random.Philox(key=np.array([seed & 0xFFFFFFFFFFFFFFFF,
                                       step & 0xFFFFFFFFFFFFFFFF],
                                      dtype=np.uint64)))
    return bits.integers(0, degree, size=count)


def _anchor_point(fmap):
    """A repelling fixed point to root backward chains at."""
    reps = fmap.repelling_fixed_points()
    if not reps:
        raise ThermError("map has no repelling fixed point to anchor sampling")
    finite = [p for p in reps if not p.location.infinite]
    if not finite:
        raise ThermError("all repelling fixed points sit at infinity")
    return complex(max(finite, key=lambda p: abs(p.multiplier)).location.value)


def sample_julia(fmap, count, seed, burn_in=50, method="inverse_iteration"):
    """count approximate Julia-set points, reproducible from the seed.

    inverse_iteration (default): backward chains with uniformly random
    branch choice per step, equidistributing toward maximal entropy.
    escape_boundary (polynomial maps only): bisection between a bounded
    anchor and an escaped point along count rays.
    """
    if count < 1:
        raise ValueError("count must be >= 1")
    if method == "inverse_iteration":
        values = _sample_inverse(fmap, count, seed, burn_in)
    elif method == "escape_boundary":
        values = _sample_escape(fmap, count, seed)
        burn_in = 0
    else:
        raise ValueError("unknown sampling method %r" % method)
    return JuliaSample(values=values, method=method, burn_in=burn_in,
                       seed=seed, map_degree=fmap.degree)


def _sample_inverse(fmap, count, seed, burn_in):
    z = np.full(count, _anchor_point(fmap), dtype=complex)
    d = fmap.degree
    if fmap.is_polynomial:
        for step in range(burn_in):
            fibers = fmap.preimages_array(z)
            pick = _branch_choices(seed, step, count, d)
            z = fibers[np.arange(count), pick]
        return z
    # rational maps: per-point fibers (no batched solver); slow but exact
    for step in range(burn_in):
        pick = _branch_choices(seed, step, count, d)
        nxt = np.empty_like(z)
        for i in range(count):
            fiber = []
            for p, m in fmap.preimages(SpherePoint(z[i])):
                fiber.extend([p] * m)
            choice = fiber[pick[i]]
            if choice.infinite:
                # step back through the chart at infinity is not supported;
                # reuse the current position (measure-zero event)
                nxt[i] = z[i]
            else:
                nxt[i] = choice.value
        z = nxt
    return z


def _escape_radius(fmap):
    return fmap._cauchy_radius() + 1.0


def _stays_bounded(fmap, z, radius, steps=_MEMBERSHIP_STEPS):
    z = np.asarray(z, dtype=complex).copy()
    alive = np.ones(z.shape, dtype=bool)
    for _ in range(steps):
        z = np.where(alive, fmap.apply_array(np.where(alive, z, 0.0)), z)
        alive &= np.abs(z) <= radius
    return alive


def _sample_escape(fmap, count, seed):
    if not fmap.is_polynomial:
        raise ThermError(
            "escape-boundary sampling needs a polynomial map (no uniform "
            "escape radius exists for rational maps)")
    radius = _escape_radius(fmap)
    inner = 0j
    if not bool(_stays_bounded(fmap, np.array([inner]), radius)[0]):
        raise ThermError(
            "escape-boundary sampling needs a bounded anchor orbit; the "
            "origin escapes for this map")
    rng = np.random.Generator(np.random.Philox(
        key=np.array([seed & 0xFFFFFFFFFFFFFFFF, 0], dtype=np.uint64)))
    theta = 2.0 * np.pi * (np.arange(count) + rng.random(count)) / count
    lo = np.full(count, inner, dtype=complex)
    hi = radius * np.exp(1j * theta)
    for _ in range(60):
        mid = 0.5 * (lo + hi)
        good = _stays_bounded(fmap, mid, radius)
        lo = np.where(good, mid, lo)
        hi = np.where(good, hi, mid)
    # return the bounded endpoint so every emitted point passes the
    # orbit-boundedness membership check by construction
    return lo


def sup_over_julia(fmap, potential, sample, t=None, clamp=True,
                   lipschitz=None):
    """Maximum of the potential over the sample, flagged as a lower bound
    for the true supremum; a caller-supplied Lipschitz bound (in chordal
    distance) buys a one-sided inflation by the sample mesh."""
    if len(sample) == 0:
        raise ValueError("empty sample")
    vals = potential.evaluate(sample.values, fmap=fmap, t=t, clamp=clamp)
    vals = np.asarray(vals, dtype=float)
    i = int(np.argmax(vals))
    sample_max = float(vals[i])
    if lipschitz is None:
        return SupEstimate(value=sample_max, sample_max=sample_max,
                           bound_kind="lower", argmax=complex(sample.values[i]))
    mesh = sample.mesh_estimate()
    infl = float(lipschitz) * mesh
    return SupEstimate(value=sample_max + infl, sample_max=sample_max,
                       bound_kind="inflated", mesh=mesh, inflation=infl,
                       argmax=complex(sample.values[i]))


def julia_membership(fmap, values, reference=None, tol=1e-9,
                     steps=_MEMBERSHIP_STEPS):
    """Per-point Julia-membership proxy.

    A point passes when its forward orbit stays within the escape radius
    for the given number of steps (polynomial maps), or when it lies
    within chordal tol of a reference sample produced by backward
    iteration (membership by reproducible provenance).  The second clause
    matters because round-off doubles per expanding step, so no floating
    representation of a boundary point survives 64 exact-escape checks.
    """
    values = np.asarray(values, dtype=complex).reshape(-1)
    ok = np.zeros(values.size, dtype=bool)
    if fmap.is_polynomial:
        ok |= _stays_bounded(fmap, values, _escape_radius(fmap), steps)
    elif reference is None:
        raise ThermError(
            "membership proxy for rational maps needs a reference sample")
    if reference is not None and len(reference) > 0:
        tree = cKDTree(_sphere_embedding(reference.values))
        dist, _ = tree.query(_sphere_embedding(values), k=1)
        ok |= dist <= tol
    return ok


def membership_rate(fmap, values, reference=None, tol=1e-9):
    """Fraction of points passing the Julia-membership proxy."""
    return float(np.mean(julia_membership(fmap, values, reference=reference,
                                          tol=tol)))
