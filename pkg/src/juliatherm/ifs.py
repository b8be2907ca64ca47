"""Inverse-branch systems: certified local inverses of map iterates,
word combinatorics, hyperbolicity and distortion constants, and the
word-sum pressure lower bound.

A branch is the local inverse of f^m on a chordal ball, realized by
Newton continuation along a recorded backward orbit.  Every pull-back
step is certified by a basin check (the Newton correction must stay well
inside the fiber-root separation), so a branch either evaluates
univalently or raises with the offending step.  Systems bundle branches
sharing a base ball; the two-branch periodic system at a repelling fixed
point is the workhorse for lower-bounding pressure by word sums.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import (BranchObstruction, CombinatorialExplosion,
                     NoSecondPreimage)
from .pressure import (BAND_FLOOR, PressureEstimate, stable_logsumexp)
from .sphere import SpherePoint, as_point, chordal_distance, \
    chordal_distance_arrays

_IDENTITY_TOL = 1e-10
_NEWTON_TOL = 1e-13
WORD_BUDGET = 1 << 14


@dataclass(frozen=True)
class Word:
    """A finite composition recipe: letters index branches, 0-based."""

    letters: tuple

    def __post_init__(self):
        object.__setattr__(self, "letters", tuple(int(x) for x in self.letters))
        if len(self.letters) < 1:
            raise ValueError("words have length >= 1")
        if any(x < 0 for x in self.letters):
            raise ValueError("letters are nonnegative branch indices")

    @property
    def length(self):
        return len(self.letters)

    def __add__(self, other):
        return Word(self.letters + other.letters)


def _ball_grid(z0, rho, rings=3, angles=8):
    """Deterministic sample of the chordal ball B(z0, rho): center plus
    concentric rings, filtered to the chordal radius."""
    z0 = complex(z0)
    r_eu = 0.75 * rho * (1.0 + abs(z0) ** 2)
    pts = [z0]
    for i in range(1, rings + 1):
        r = r_eu * i / rings
        for k in range(angles):
            pts.append(z0 + r * np.exp(2j * np.pi * (k + 0.5 * (i % 2))
                                       / angles))
    pts = np.array(pts, dtype=complex)
    keep = chordal_distance_arrays(pts, np.full(pts.shape, z0)) \
        <= rho * (1.0 - 1e-9)
    return pts[keep]


def _fiber_roots(fmap, target):
    """All finite fiber roots over one target, multiplicity-flattened."""
    if fmap.is_polynomial:
        return fmap.preimages_array(np.array([target]))[0]
    out = []
    for p, m in fmap.preimages(target):
        if not p.infinite:
            out.extend([p.value] * m)
    return np.array(out, dtype=complex)


def _pullback(fmap, targets, seed, step):
    """One certified backward step: Newton for f(x) = target from the
    recorded seed, then a basin check against the other fiber roots."""
    targets = np.asarray(targets, dtype=complex)
    x = np.full(targets.shape, complex(seed), dtype=complex)
    for _ in range(80):
        fx = fmap.apply_array(x)
        dfx = fmap.derivative_array(x)
        if np.any(np.abs(dfx) < 1e-300):
            raise BranchObstruction(
                "derivative vanished during continuation", step=step)
        corr = (fx - targets) / dfx
        x = x - corr
        if np.max(np.abs(corr)) < _NEWTON_TOL * (1.0 + np.max(np.abs(x))):
            break
    else:
        raise BranchObstruction("Newton failed to converge", step=step)
    # basin certificate: correction from the seed must be < 1/4 of the
    # seed's separation from every other root of the same fiber
    moved = np.abs(x - complex(seed))
    worst = int(np.argmax(moved))
    roots = _fiber_roots(fmap, targets[worst])
    dists = np.sort(np.abs(roots - complex(seed)))
    if dists.size > 1:
        separation = dists[1]  # dists[0] is the seed's own root
        if not np.all(moved < 0.25 * separation + 1e-14):
            raise BranchObstruction(
                "Newton basin check failed: correction %.3e vs separation "
                "%.3e" % (float(np.max(moved)), float(separation)), step=step)
    return x


@dataclass
class InverseBranch:
    """Local inverse of f^steps on B(z0, rho), anchored at the recorded
    backward orbit's endpoint."""

    fmap: object
    z0: SpherePoint
    rho: float
    orbit: np.ndarray  # y_1 .. y_m with f(y_1) = z0, f(y_{k+1}) = y_k
    contained: bool = False

    @property
    def steps(self):
        return int(self.orbit.size)

    @property
    def anchor(self):
        return SpherePoint(self.orbit[-1])

    def apply(self, z):
        z = np.asarray(z, dtype=complex)
        scalar = z.ndim == 0
        cur = np.atleast_1d(z)
        for k, seed in enumerate(self.orbit, start=1):
            cur = _pullback(self.fmap, cur, seed, k)
        return complex(cur[0]) if scalar else cur

    __call__ = apply

    def log_derivative(self, z, metric="euclidean"):
        """ln |(f^m)'(branch(z))| accumulated along the forward orbit."""
        img = np.atleast_1d(self.apply(z))
        orbit = self.fmap.orbit_array(img, self.steps - 1)
        with np.errstate(divide="ignore"):
            ld = self.fmap.log_derivative_array(orbit.reshape(-1), metric)
        return ld.reshape(orbit.shape).sum(axis=0)


def branch_from_backward_orbit(fmap, z0, rho, backward_orbit,
                               koebe_shrink=True):
    """Certified branch along a recorded backward orbit of z0.

    The orbit must be consecutive (each point maps to the previous one,
    the first to z0).  An over-sized radius is shrunk below the distance
    to the nearest critical value; a critical point on the orbit, a
    vanishing derivative, or a failed basin certificate raise with the
    offending step.  The returned branch records whether its image of the
    base ball fits in the half-radius ball (the containment needed for
    system membership -- a standalone branch may land anywhere).
    """
    z0 = as_point(z0)
    if z0.infinite:
        raise ValueError("branch base must be finite")
    pts = [as_point(p) for p in backward_orbit]
    if any(p.infinite for p in pts):
        raise BranchObstruction("backward orbit through infinity", step=0)
    orbit = np.array([p.value for p in pts], dtype=complex)
    if orbit.size < 1:
        raise ValueError("backward orbit must have at least one point")
    rho = float(rho)
    limit = _koebe_radius(fmap, z0)
    if rho > limit:
        if not koebe_shrink:
            raise ValueError("radius %g above the distortion-safe %g"
                             % (rho, limit))
        rho = limit
    prev = complex(z0.value)
    for k, y in enumerate(orbit, start=1):
        if chordal_distance(fmap(SpherePoint(y)), SpherePoint(prev)) > 1e-8:
            raise ValueError("orbit point %d does not map to its successor"
                             % k)
        if abs(fmap.derivative_array(np.array([y]))[0]) < 1e-12:
            raise BranchObstruction("critical point on the backward orbit",
                                    step=k)
        prev = y
    branch = InverseBranch(fmap=fmap, z0=z0, rho=rho, orbit=orbit)
    grid = _ball_grid(z0.value, rho)
    img = branch.apply(grid)
    back = fmap.orbit_array(img, branch.steps)[-1]
    err = chordal_distance_arrays(back, grid)
    if np.max(err) > _IDENTITY_TOL:
        raise BranchObstruction(
            "identity check failed: f^m(branch(z)) off by %.2e"
            % float(np.max(err)), step=branch.steps)
    center_dist = chordal_distance_arrays(
        img, np.full(img.shape, complex(z0.value)))
    branch.contained = bool(np.max(center_dist) <= rho / 2.0)
    return branch


def _koebe_radius(fmap, z0):
    """Certification-safe chordal radius: half the distance from the base
    to the nearest critical value, so pulled-back Newton corrections stay
    well inside the fiber-root separation."""
    dists = [chordal_distance(z0, v) for v in fmap.critical_values()]
    return 0.5 * min(d for d in dists) if dists else 1.0


@dataclass
class BranchSystem:
    """Branches sharing one base ball, with word combinatorics on top."""

    branches: list
    time_sequence: list
    hyperbolicity: object = None  # (C, lambda) once certified
    freeness: str = "unverified"

    def __post_init__(self):
        if not self.branches:
            raise ValueError("a system needs at least one branch")
        z0 = self.branches[0].z0
        rho = self.branches[0].rho
        for b in self.branches[1:]:
            if chordal_distance(b.z0, z0) > 1e-12 or \
                    abs(b.rho - rho) > 1e-12:
                raise ValueError("branches must share base ball")
        if len(self.time_sequence) != len(self.branches):
            raise ValueError("one time per branch")

    @property
    def z0(self):
        return self.branches[0].z0

    @property
    def rho(self):
        return self.branches[0].rho

    def word_time(self, word):
        return sum(self.time_sequence[i] for i in word.letters)

    def apply_word(self, word, z):
        """Composed branch: letters applied right to left."""
        out = z
        for i in reversed(word.letters):
            out = self.branches[i].apply(out)
        return out

    def words_of_total_time(self, total, budget=WORD_BUDGET):
        """All words with time sum equal to total, ordered lexicographically
        (dynamic programming over the time alphabet)."""
        memo = {}

        def count(remaining):
            if remaining == 0:
                return 1
            if remaining < 0:
                return 0
            if remaining not in memo:
                memo[remaining] = sum(count(remaining - m)
                                      for m in self.time_sequence)
            return memo[remaining]

        n = count(total)
        if n > budget:
            raise CombinatorialExplosion(
                "%d words of total time %d" % (n, total),
                needed=n, budget=budget)
        out = []

        def rec(remaining, prefix):
            if remaining == 0:
                if prefix:
                    out.append(Word(tuple(prefix)))
                return
            for i, m in enumerate(self.time_sequence):
                if m <= remaining:
                    prefix.append(i)
                    rec(remaining - m, prefix)
                    prefix.pop()

        rec(total, [])
        return out

    def all_words_up_to(self, length):
        out = []
        frontier = [()]
        for _ in range(length):
            frontier = [w + (i,) for w in frontier
                        for i in range(len(self.branches))]
            out.extend(Word(w) for w in frontier)
        return out


def build_periodic_ifs(fmap, z0, rho, N, N_max=12, budget=WORD_BUDGET):
    """Two-branch system at a repelling fixed point: the N-fold local
    inverse at z0 and a branch through a distinct N-step preimage inside
    the half ball.  Candidate preimages are tried nearest first, skipping
    ones whose backward orbit is obstructed (a critical point on the way);
    N is increased until both branch images fit in B(z0, rho/2).  The
    radius is shrunk below the distortion-safe limit up front."""
    z0 = as_point(z0)
    if z0.infinite or chordal_distance(fmap(z0), z0) > 1e-8:
        raise ValueError("base must be a finite fixed point")
    mult = abs(fmap.derivative_array(np.array([z0.value]))[0])
    if mult <= 1.0 + 1e-9:
        raise ValueError("base fixed point must be repelling")
    rho = min(float(rho), _koebe_radius(fmap, z0))
    for n in range(int(N), N_max + 1):
        loop = branch_from_backward_orbit(fmap, z0, rho, [z0] * n)
        if not loop.contained:
            continue
        for partner in _second_preimage_orbits(fmap, z0, rho, n, budget):
            try:
                other = branch_from_backward_orbit(fmap, z0, rho, partner)
            except BranchObstruction:
                continue
            if not other.contained:
                continue
            sep = chordal_distance(loop.anchor, other.anchor)
            return BranchSystem(branches=[loop, other],
                                time_sequence=[n, n],
                                freeness="distinct-anchors"
                                if sep > 1e-9 else "unverified")
    raise NoSecondPreimage(
        "no contained unobstructed second branch up to depth %d" % N_max)


def _second_preimage_orbits(fmap, z0, rho, n, budget):
    """Backward orbits of length n from z0 whose endpoints land in the
    half ball but off the base, sorted nearest-to-z0 first."""
    if fmap.degree ** n > budget:
        raise CombinatorialExplosion(
            "backward tree needs %d paths" % fmap.degree ** n,
            needed=fmap.degree ** n, budget=budget)
    paths = [[complex(z0.value)]]
    for _ in range(n):
        nxt = []
        for path in paths:
            for p, _m in fmap.preimages(SpherePoint(path[-1])):
                if p.infinite:
                    continue
                nxt.append(path + [p.value])
        paths = nxt
    ranked = []
    for path in paths:
        end = path[-1]
        d = chordal_distance(SpherePoint(end), z0)
        if d < 1e-9 or d > rho / 2.0:
            continue
        ranked.append(((d, end.real, end.imag), path))
    ranked.sort(key=lambda item: item[0])
    return [[SpherePoint(v) for v in path[1:]] for _, path in ranked]


def certify_hyperbolic(system, sample=None):
    """Measured expansion certificate: constants (C, lam), lam > 1, with
    |(f^j)'(f^(m-j)(branch z))| >= C * lam^j at every sampled (z, branch,
    j); None when the fitted rate is not above 1."""
    if sample is None:
        sample = _ball_grid(complex(system.z0.value), system.rho)
    sample = np.atleast_1d(np.asarray(sample, dtype=complex))
    fmap = system.branches[0].fmap
    mins = {}
    for b in system.branches:
        img = np.atleast_1d(b.apply(sample))
        orbit = fmap.orbit_array(img, b.steps - 1)
        with np.errstate(divide="ignore"):
            ld = fmap.log_derivative_array(orbit.reshape(-1), "euclidean")
        ld = ld.reshape(orbit.shape)
        # suffix sums: ln |(f^j)'| at the point m-j steps along the branch
        suffix = np.cumsum(ld[::-1], axis=0)
        for j in range(1, b.steps + 1):
            lo = float(np.min(suffix[j - 1]))
            mins[j] = min(mins.get(j, np.inf), lo)
    js = np.array(sorted(mins), dtype=float)
    los = np.array([mins[int(j)] for j in js])
    if js.size == 1:
        slope = los[0] / js[0]
    else:
        slope = float(np.polyfit(js, los, 1)[0])
    lam = float(np.exp(slope))
    if lam <= 1.0 + 1e-6:
        return None
    C = float(np.exp(np.min(los - js * slope)))
    system.hyperbolicity = (C, lam)
    return C, lam


def distortion_constants(system, psi, grid=None, depth=3, ball_radius=None,
                         t=None):
    """Measured distortion: K is the worst sampled derivative ratio of
    composed branches over the (half-radius) ball, C0 the worst sampled
    oscillation of the branch Birkhoff sums of psi."""
    radius = system.rho / 2.0 if ball_radius is None else float(ball_radius)
    if grid is None:
        grid = _ball_grid(complex(system.z0.value), radius)
    grid = np.atleast_1d(np.asarray(grid, dtype=complex))
    fmap = system.branches[0].fmap
    K = 1.0
    C0 = 0.0
    for word in system.all_words_up_to(depth):
        img = np.atleast_1d(system.apply_word(word, grid))
        m = system.word_time(word)
        orbit = fmap.orbit_array(img, m - 1)
        with np.errstate(divide="ignore"):
            ld = fmap.log_derivative_array(orbit.reshape(-1), "euclidean")
        logder = ld.reshape(orbit.shape).sum(axis=0)
        K = max(K, float(np.exp(np.max(logder) - np.min(logder))))
        vals = np.asarray(psi.evaluate(orbit.reshape(-1), fmap=fmap, t=t,
                                       clamp=True), dtype=float)
        sums = vals.reshape(orbit.shape).sum(axis=0)
        C0 = max(C0, float(np.max(sums) - np.min(sums)))
    return K, C0


def lambda_pressure_bound(system, potential, t, zeta, N_list,
                          metric="euclidean", budget=WORD_BUDGET,
                          distortion=None):
    """Word-sum pressure lower bound: for each N, sum over words of total
    time N of exp(S_N(phi) - t ln|(f^N)'|) at the composed-branch images
    of zeta, corrected by -C0/N for the measured distortion."""
    t = float(t)
    N_list = [int(N) for N in N_list]
    if not N_list:
        raise ValueError("empty N list")
    zeta = as_point(zeta)
    if chordal_distance(zeta, system.z0) > system.rho / 2.0 + 1e-12:
        raise ValueError("evaluation point must lie in the half ball")
    fmap = system.branches[0].fmap
    if distortion is None:
        if t:
            from .potentials import SumPotential, geometric_potential
            weight = SumPotential([potential, geometric_potential(metric)])
        else:
            weight = potential
        _, C0 = distortion_constants(system, weight, t=t)
    else:
        C0 = float(distortion)
    approx = []
    counts = []
    for N in N_list:
        words = system.words_of_total_time(N, budget=budget)
        counts.append(len(words))
        if not words:
            approx.append((N, -np.inf))
            continue
        imgs = np.array([complex(system.apply_word(w, complex(zeta.value)))
                         for w in words])
        full = fmap.orbit_array(imgs, N)
        closure = chordal_distance_arrays(
            full[-1], np.full(full[-1].shape, complex(zeta.value)))
        if np.max(closure) > 1e-8:
            raise BranchObstruction(
                "composed branch round trip off by %.2e"
                % float(np.max(closure)))
        orbit = full[:-1]
        phi = np.asarray(potential.evaluate(orbit.reshape(-1), fmap=fmap,
                                            t=t, clamp=True), dtype=float)
        sn = phi.reshape(orbit.shape).sum(axis=0)
        if t:
            with np.errstate(divide="ignore"):
                ld = fmap.log_derivative_array(orbit.reshape(-1), metric)
            sn = sn - t * ld.reshape(orbit.shape).sum(axis=0)
        approx.append((N, (stable_logsumexp(sn) - C0) / N))
    value = max(v for _, v in approx)
    return PressureEstimate(
        value=value, method="ifs_lambda", approximants=tuple(approx),
        band=BAND_FLOOR, bound_kind="lower", metric_mode=metric, t=t,
        potential_source=potential.source_text(),
        notes={"C0": C0, "word_counts": tuple(counts)})


@dataclass
class KeyEstimate:
    """Smallest constant C with branch sums >= time * mean - C, plus a
    stability flag across composition depth."""

    C: float
    passed: bool
    by_length: tuple = field(default=())

    def __iter__(self):
        return iter((self.C, self.passed))


def verify_key_estimate(system, psi, measure, depth=3, t=None,
                        growth_tol=0.05):
    """Measure the defect C in: branch Birkhoff sum of psi at the base >=
    word time * (integral of psi) - C, over words up to the given length.

    passed requires the worst defect to stop growing between the last two
    lengths (a mismatched measure makes it grow linearly in the time)."""
    fmap = system.branches[0].fmap
    mean = measure.integrate(psi, fmap=fmap, t=t)
    by_length = []
    for L in range(1, depth + 1):
        worst = -np.inf
        for word in (w for w in system.all_words_up_to(L)
                     if w.length == L):
            m = system.word_time(word)
            x = system.apply_word(word, complex(system.z0.value))
            orbit = fmap.orbit_array(np.array([x]), m - 1)[:, 0]
            s = float(np.sum(np.asarray(
                psi.evaluate(orbit, fmap=fmap, t=t, clamp=True),
                dtype=float)))
            worst = max(worst, m * mean - s)
        by_length.append(worst)
    C = max(by_length)
    scale = max(1.0, abs(C))
    passed = bool(np.isfinite(C) and
                  by_length[-1] - by_length[-2] <= growth_tol * scale) \
        if len(by_length) >= 2 else bool(np.isfinite(C))
    return KeyEstimate(C=float(C), passed=passed,
                       by_length=tuple(float(x) for x in by_length))
