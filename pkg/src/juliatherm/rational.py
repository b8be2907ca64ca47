"""Rational maps of degree >= 2 on the Riemann sphere.

Coefficient lists are constant-first (numpy.polynomial convention).  The
class keeps the map in reduced form and supplies evaluation, Euclidean and
spherical derivatives, fibers with multiplicity, the periodic-point census,
and the exceptional-point search.

Periodic points are roots of the numerator of f^n(z) - z.  Composing
iterate coefficients is numerically dead past small n for maps like z^2-2
(mid coefficients reach central-binomial size, and evaluation cancels
catastrophically), so for polynomial maps at n >= 2 the same simultaneous
iteration runs in evaluation mode: Newton ratios (f^n(x)-x)/((f^n)'(x)-1)
computed by orbit iteration, which is backward stable on the Julia set.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from numpy.polynomial import polynomial as P

from .errors import CombinatorialExplosion, RootSolveFailure
from .roots import (
    aberth_roots,
    aberth_roots_batch,
    cluster_roots,
    sort_roots,
    trim_coeffs,
)
from .sphere import SpherePoint, as_point, chordal_distance

CLASSIFICATION_MARGIN = 1e-8
PERIODIC_BUDGET = 2**14
_COEF_OVERFLOW = 1e100


@dataclass
class PeriodicPoint:
    """A point of period n with its multiplier (f^n)'."""

    location: SpherePoint
    period: int
    multiplier: complex
    classification: str
    least_period: int

    @property
    def is_repelling(self):
        return self.classification == "repelling"


def classify_multiplier(mult, margin=CLASSIFICATION_MARGIN):
    m = abs(mult)
    if m > 1.0 + margin:
        return "repelling"
    if m < 1.0 - margin:
        return "attracting"
    return "neutral"


def _wronskian(num, den):
    return P.polysub(P.polymul(P.polyder(num), den), P.polymul(num, P.polyder(den)))


class RationalMap:
    """f = p/q in reduced form, degree = max(deg p, deg q) >= 2."""

    def __init__(self, num, den=(1.0,), validate=True):
        num, _ = trim_coeffs(num)
        den, _ = trim_coeffs(den)
        if np.max(np.abs(den)) == 0.0:
            raise ValueError("denominator is identically zero")
        scale = max(np.max(np.abs(num)), np.max(np.abs(den)))
        if scale == 0.0:
            raise ValueError("numerator is identically zero")
        self.num = np.asarray(num, dtype=complex) / scale
        self.den = np.asarray(den, dtype=complex) / scale
        self.deg_num = len(self.num) - 1
        self.deg_den = len(self.den) - 1
        self.degree = max(self.deg_num, self.deg_den)
        if validate:
            if self.degree < 2:
                raise ValueError("rational map must have degree >= 2")
            self._check_reduced()
        self._wron, _ = trim_coeffs(_wronskian(self.num, self.den))
        # coefficients of z^d p(1/z), z^d q(1/z): charts at infinity
        d = self.degree
        self._num_rev = np.zeros(d + 1, dtype=complex)
        self._num_rev[d - self.deg_num:] = self.num[::-1]
        self._den_rev = np.zeros(d + 1, dtype=complex)
        self._den_rev[d - self.deg_den:] = self.den[::-1]
        # census results are expensive and immutable: memoize default calls
        # so pressure curves and repeated diagnostics share one census per n
        self._periodic_cache = {}

    @staticmethod
    def polynomial(coeffs):
        return RationalMap(coeffs, (1.0,))

    def __repr__(self):
        return "RationalMap(num=%s, den=%s)" % (
            np.array2string(self.num, precision=4),
            np.array2string(self.den, precision=4))

    def _check_reduced(self):
        if self.deg_den == 0 or self.deg_num == 0:
            return
        pr = aberth_roots(self.num)
        qr = aberth_roots(self.den)
        if pr.size and qr.size:
            dmin = np.min(np.abs(pr[:, None] - qr[None, :]))
            if dmin < 1e-9 * (1.0 + np.max(np.abs(np.concatenate([pr, qr])))):
                raise ValueError("numerator and denominator share a root; not reduced")

    @property
    def is_polynomial(self):
        return self.deg_den == 0

    # -- evaluation -----------------------------------------------------------

    def value_at_infinity(self) -> SpherePoint:
        if self.deg_num > self.deg_den:
            return SpherePoint.infinity()
        if self.deg_num < self.deg_den:
            return SpherePoint(0.0)
        return SpherePoint(self.num[-1] / self.den[-1])

    def __call__(self, p):
        pt = as_point(p)
        if pt.infinite:
            return self.value_at_infinity()
        z = pt.value
        nv = P.polyval(z, self.num)
        dv = P.polyval(z, self.den)
        if dv == 0:
            return SpherePoint.infinity()
        return SpherePoint(nv / dv)

    def apply_array(self, z):
        """Evaluate on an array of finite complex points (poles give inf)."""
        z = np.asarray(z, dtype=complex)
        nv = P.polyval(z, self.num)
        if self.is_polynomial:
            return nv / self.den[0]
        dv = P.polyval(z, self.den)
        with np.errstate(divide="ignore", invalid="ignore"):
            out = nv / dv
        if np.any(dv == 0):
            out = np.where(dv == 0, np.inf + 0j, out)
        return out

    def orbit_array(self, z, n):
        """Forward orbit matrix, shape (n+1, len(z)): rows z, f z, ..., f^n z."""
        z = np.atleast_1d(np.asarray(z, dtype=complex))
        out = np.empty((n + 1, z.size), dtype=complex)
        out[0] = z
        for k in range(1, n + 1):
            out[k] = self.apply_array(out[k - 1])
        return out

    # -- derivatives ----------------------------------------------------------

    def derivative_array(self, z):
        """Euclidean chart derivative f'(z) on finite arrays."""
        z = np.asarray(z, dtype=complex)
        if self.is_polynomial:
            return P.polyval(z, P.polyder(self.num)) / self.den[0]
        wv = P.polyval(z, self._wron)
        qv = P.polyval(z, self.den)
        with np.errstate(divide="ignore", invalid="ignore"):
            out = wv / qv**2
        if np.any(qv == 0):
            out = np.where(qv == 0, np.inf + 0j, out)
        return out

    def _sph_deriv_finite(self, z: complex) -> float:
        qv = P.polyval(z, self.den)
        if qv != 0:
            fz = P.polyval(z, self.num) / qv
            df = P.polyval(z, self._wron) / qv**2
            return float(abs(df) * (1.0 + abs(z) ** 2) / (1.0 + abs(fz) ** 2))
        # pole: postcompose with the chordal isometry 1/z and use 1/f = q/p
        w = _wronskian(self.den, self.num)
        pv = P.polyval(z, self.num)
        gz = qv / pv
        dg = P.polyval(z, w) / pv**2
        return float(abs(dg) * (1.0 + abs(z) ** 2) / (1.0 + abs(gz) ** 2))

    def spherical_derivative(self, p) -> float:
        """|f'(z)|(1+|z|^2)/(1+|f(z)|^2), extended continuously to poles and inf."""
        pt = as_point(p)
        if not pt.infinite:
            return self._sph_deriv_finite(pt.value)
        # precompose with the isometry 1/z: evaluate F = num_rev/den_rev at 0
        numc, denc = self._num_rev, self._den_rev
        d0 = P.polyval(0.0, denc)
        if d0 != 0:
            f0 = P.polyval(0.0, numc) / d0
            df = P.polyval(0.0, _wronskian(numc, denc)) / d0**2
            return float(abs(df) / (1.0 + abs(f0) ** 2))
        n0 = P.polyval(0.0, numc)
        dg = P.polyval(0.0, _wronskian(denc, numc)) / n0**2
        return float(abs(dg))

    def spherical_derivative_array(self, z):
        """Vectorized spherical derivative on finite arrays."""
        z = np.asarray(z, dtype=complex)
        zz = 1.0 + np.abs(z) ** 2
        if self.is_polynomial:
            fz = P.polyval(z, self.num) / self.den[0]
            df = P.polyval(z, P.polyder(self.num)) / self.den[0]
            return np.abs(df) * zz / (1.0 + np.abs(fz) ** 2)
        qv = P.polyval(z, self.den)
        nv = P.polyval(z, self.num)
        wv = P.polyval(z, self._wron)
        with np.errstate(divide="ignore", invalid="ignore"):
            reg = np.abs(wv / qv**2) * zz / (1.0 + np.abs(nv / qv) ** 2)
        bad = ~np.isfinite(reg)
        if bad.any():
            flat = reg.reshape(-1)
            zf = z.reshape(-1)
            for i in np.nonzero(bad.reshape(-1))[0]:
                flat[i] = self._sph_deriv_finite(complex(zf[i]))
            reg = flat.reshape(reg.shape)
        return reg

    def log_derivative_array(self, z, metric):
        """ln of the chosen derivative magnitude on finite arrays.

        Zeros of the derivative give -inf; callers decide on clamping.
        """
        if metric == "euclidean":
            mag = np.abs(self.derivative_array(z))
        elif metric == "spherical":
            mag = self.spherical_derivative_array(z)
        else:
            raise ValueError("metric must be 'euclidean' or 'spherical'")
        with np.errstate(divide="ignore"):
            return np.log(mag)

    # -- iterates -------------------------------------------------------------

    def iterate_coeffs(self, n):
        """Coefficients (num, den) of f^n, or None if they overflow doubles."""
        nu, de = self.num.copy(), self.den.copy()
        for _ in range(n - 1):
            d = self.degree
            upow = [np.ones(1, dtype=complex)]
            vpow = [np.ones(1, dtype=complex)]
            for _j in range(d):
                upow.append(P.polymul(upow[-1], nu))
                vpow.append(P.polymul(vpow[-1], de))
            acc_n = np.zeros(1, dtype=complex)
            acc_d = np.zeros(1, dtype=complex)
            for j in range(self.deg_num + 1):
                acc_n = P.polyadd(acc_n, self.num[j] * P.polymul(upow[j], vpow[d - j]))
            for j in range(self.deg_den + 1):
                acc_d = P.polyadd(acc_d, self.den[j] * P.polymul(upow[j], vpow[d - j]))
            scale = max(np.max(np.abs(acc_n)), np.max(np.abs(acc_d)))
            if not np.isfinite(scale) or scale > _COEF_OVERFLOW:
                return None
            nu, de = acc_n / scale, acc_d / scale
        return nu, de

    def iterate_map(self, n):
        """f^n as a RationalMap (raises if coefficients overflow)."""
        out = self.iterate_coeffs(n)
        if out is None:
            raise RootSolveFailure("iterate coefficients overflow double precision")
        nu, de = out
        return RationalMap(nu, de, validate=False)

    # -- fibers ---------------------------------------------------------------

    def preimages(self, w, tol=1e-12, cluster_tol=2e-6, check_tol=1e-8):
        """All solutions of f(x) = w as [(SpherePoint, multiplicity)].

        Multiplicities sum to the degree; infinity appears when the fiber
        polynomial's degree drops.
        """
        wp = as_point(w)
        if wp.infinite:
            fiber_poly = np.array(self.den, dtype=complex)
        else:
            fiber_poly = P.polysub(self.num, wp.value * self.den)
        trimmed, _ = trim_coeffs(fiber_poly, rel_tol=1e-13)
        if np.max(np.abs(trimmed)) == 0.0:
            raise RootSolveFailure("fiber polynomial vanished identically")
        deg = len(trimmed) - 1
        out = []
        if deg > 0:
            roots = aberth_roots(trimmed, tol=tol)
            means, counts = cluster_roots(roots, cluster_tol=cluster_tol)
            for z, c in zip(means, counts):
                pt = SpherePoint(z)
                res = chordal_distance(self(pt), wp)
                if res > check_tol:
                    raise RootSolveFailure(
                        "fiber root failed residual check: chordal residual %.3e" % res)
                out.append((pt, int(c)))
        inf_mult = self.degree - deg
        if inf_mult > 0:
            if chordal_distance(self.value_at_infinity(), wp) > check_tol:
                raise RootSolveFailure("degree drop without infinity in the fiber")
            out.append((SpherePoint.infinity(), inf_mult))
        assert sum(c for _, c in out) == self.degree
        return out

    def preimages_array(self, targets, tol=1e-12):
        """Batched fibers for polynomial maps: (B, d) roots, multiple roots
        repeated.  Rational maps go through preimages() point by point."""
        if not self.is_polynomial:
            raise ValueError("batched fibers require a polynomial map")
        targets = np.asarray(targets, dtype=complex).reshape(-1)
        rows = np.tile(self.num, (targets.size, 1))
        rows[:, 0] -= targets * self.den[0]
        return aberth_roots_batch(rows, tol=tol)

    # -- periodic points ------------------------------------------------------

    def _cauchy_radius(self):
        lead = self.num[-1] if self.deg_num >= self.deg_den else self.den[-1]
        allc = np.concatenate([self.num, self.den])
        return 1.0 + float(np.max(np.abs(allc)) / abs(lead))

    def _periodic_roots_coeff(self, n, tol):
        it = self.iterate_coeffs(n)
        if it is None:
            return None
        nu, de = it
        eq = P.polysub(nu, P.polymul(np.array([0.0, 1.0], dtype=complex), de))
        trimmed, _ = trim_coeffs(eq, rel_tol=1e-13)
        deg = len(trimmed) - 1
        if deg <= 0:
            return np.zeros(0, dtype=complex)
        spread = np.max(np.abs(trimmed)) / abs(trimmed[-1])
        if spread > 1e8:
            return None
        return aberth_roots(trimmed, tol=tol)

    def _seed_fixed_point(self) -> complex:
        """A finite fixed point on the Julia set to root the seed tree at:
        largest multiplier first, skipping exceptional points (their
        backward orbit never spreads)."""
        roots = self._periodic_roots_coeff(1, 1e-12)
        if roots is None or roots.size == 0:
            raise RootSolveFailure("no finite fixed point available for seeding")
        mults = [abs(self._orbit_multiplier(SpherePoint(z), 1)) for z in roots]
        order = sorted(range(roots.size), key=lambda i: -mults[i])
        for i in order:
            if len(self.preimages(roots[i])) > 1:
                return complex(roots[i])
        raise RootSolveFailure("every fixed point is exceptional; cannot seed")

    def _periodic_seed_tree(self, n):
        """Full backward tree of depth n over a Julia-set fixed point: d^n
        seeds that equidistribute like the period-n points themselves."""
        pts = np.array([self._seed_fixed_point()], dtype=complex)
        for _ in range(n):
            pts = self.preimages_array(pts).reshape(-1)
        return pts

    def _orbit_newton_data(self, x, n, resc, second=False):
        """Evaluate F = f^n(x) - x with F' (and F'' on request) by orbit
        iteration: values stay O(1) on the Julia set where composing
        iterate coefficients would be catastrophically cancelled.

        Returns (v, D, b, escaped, prod): v = F, D = F' = prod - 1,
        b = (f^n)'' or None, escape mask, prod = (f^n)'.
        """
        dnum = P.polyder(self.num)
        c0 = self.den[0]
        z = np.array(x, dtype=complex)
        a = np.ones_like(z)
        b = np.zeros_like(z) if second else None
        escaped = np.zeros(z.shape, dtype=bool)
        d2num = P.polyder(dnum) if second else None
        for _ in range(n):
            escaped |= np.abs(z) > resc
            zs = np.where(escaped, 0.0, z)
            fp = P.polyval(zs, dnum) / c0
            if second:
                fpp = P.polyval(zs, d2num) / c0
                b = np.where(escaped, b, fpp * a * a + fp * b)
            a = np.where(escaped, a, fp * a)
            z = np.where(escaped, z, P.polyval(zs, self.num) / c0)
        v = z - np.asarray(x, dtype=complex)
        return v, a - 1.0, b, escaped, a

    @staticmethod
    def _residual_ok(v, prod, escaped, x, tol):
        scale = (1.0 + np.abs(x)) * (1.0 + np.minimum(np.abs(prod), 1e12))
        return (~escaped) & (np.abs(v) <= tol * scale)

    def _newton_steps(self, x, n, tol, resc, roots, mults, rads, sweeps):
        """Damped Newton on F = f^n - id, deflated against already-found
        roots.  No pairwise coupling between particles: the simultaneous-
        iteration correction destabilizes large quasi-1D root clouds.
        Deflation must include *every* found root: the deflated field's
        only zeros are then the missing roots, so strays anywhere on the
        sphere funnel toward them (attracting fixed points otherwise
        swallow whole arcs of seeds, and a truncated sum lets strays
        re-land on far-away occupied roots forever).  A particle sitting
        on an occupied root does not count as converged; close to that
        root the deflated step turns into Newton on the cofactor, which
        walks the particle toward the missing roots on its own.
        Near a root the step solves the local quadratic model
        F(x+h) = F + F'h + F''h^2/2 = 0 (stable larger-denominator form):
        that reduces to Newton at simple roots, to the doubled step at
        double roots, and hops from the midpoint of a near-degenerate pair
        onto either member, where plain Newton merely halves the distance
        forever and the pure doubled step blows up on the F' zero between
        the pair.

        Returns (x, ok).
        """
        x = np.array(x, dtype=complex)
        ok = np.zeros(x.shape, dtype=bool)
        krad = np.zeros(x.size, dtype=float)
        for sw in range(sweeps):
            v, D, b, esc, prod = self._orbit_newton_data(x, n, resc,
                                                         second=True)
            if roots.size:
                S = np.zeros(x.size, dtype=complex)
                occ = np.zeros(x.size, dtype=bool)
                krad[:] = 0.0
                step = max(1, (2**21) // x.size)
                for lo in range(0, roots.size, step):
                    diff = x[:, None] - roots[None, lo:lo + step]
                    ad = np.abs(diff)
                    hit = ad <= rads[None, lo:lo + step]
                    occ |= hit.any(axis=1)
                    krad = np.maximum(
                        krad,
                        np.where(hit, rads[None, lo:lo + step], 0.0).max(axis=1))
                    np.copyto(diff, 1e-300, where=ad < 1e-300)
                    S += (mults[None, lo:lo + step] / diff).sum(axis=1)
                denom = D - v * S
            else:
                occ = np.zeros(x.size, dtype=bool)
                denom = D
            ok = self._residual_ok(v, prod, esc, x, tol) & ~occ
            if ok.all():
                break
            w = v / np.where(denom == 0, 1.0, denom)
            w = np.where(denom == 0, v, w)
            near = np.abs(v) <= 1e-3 * (1.0 + np.abs(x))
            s = np.sqrt(D * D - 2.0 * v * b)
            dq = np.where(np.abs(D + s) >= np.abs(D - s), D + s, D - s)
            wq = 2.0 * v / np.where(dq == 0, 1.0, dq)
            quad = ((~esc) & near & (dq != 0) &
                    (np.abs(2.0 * v * b) > 0.01 * np.abs(D) ** 2))
            w = np.where(quad, wq, w)
            # escaped particles spiral back toward the root locus
            w = np.where(esc, x * (0.1 * np.exp(0.3j)), w)
            # a particle sitting machine-exactly on a true root has v ~ 0,
            # which neutralizes the deflation pole; kick it out past the
            # radius where the deflation denominator is noise-dominated
            # (F is evaluated by iteration, so its absolute error times
            # the pole 1/dist swamps the genuine O(dist) residual close
            # in) and let the cofactor field take over
            stuck = occ & (np.abs(w) < krad)
            if np.any(stuck):
                ang = 2.0 * np.pi * (0.6180339887 * np.arange(x.size) +
                                     0.1 * sw)
                kd = np.maximum(3.0 * krad, 1e-7 * (1.0 + np.abs(x)))
                w = np.where(stuck, -kd * np.exp(1j * ang), w)
            cap = 0.5 * (1.0 + np.abs(x))
            aw = np.abs(w)
            w = np.where(aw > cap, w * (cap / np.where(aw == 0, 1.0, aw)), w)
            x = np.where(ok, x, x - w)
        return x, ok

    @staticmethod
    def _min_dist_to(points, targets):
        """Chunked min_j |points_i - targets_j|."""
        out = np.full(points.size, np.inf)
        if targets.size == 0:
            return out
        step = max(1, (2**21) // targets.size)
        for lo in range(0, points.size, step):
            hi = min(lo + step, points.size)
            out[lo:hi] = np.abs(
                points[lo:hi, None] - targets[None, :]).min(axis=1)
        return out

    @staticmethod
    def _dedupe_lexsorted(zs, tols):
        """Within-batch dedupe of a lexsorted complex array with per-point
        merge radii: returns a boolean keep mask.  Scans back only while
        the real parts stay within the largest radius, so the window stays
        tiny."""
        keep_mask = np.zeros(zs.size, dtype=bool)
        kept = []
        tmax = float(tols.max()) if zs.size else 0.0
        for i in range(zs.size):
            z = zs[i]
            isdup = False
            for k in reversed(kept):
                if z.real - zs[k].real > tmax:
                    break
                if abs(z - zs[k]) <= max(tols[i], tols[k]):
                    isdup = True
                    break
            if not isdup:
                kept.append(i)
                keep_mask[i] = True
        return keep_mask

    @staticmethod
    def _match_existing(zs, tols, roots, rads):
        """True where a candidate falls within its own or the target's
        merge radius of an existing root (chunked)."""
        out = np.zeros(zs.size, dtype=bool)
        if roots.size == 0:
            return out
        step = max(1, (2**21) // roots.size)
        for lo in range(0, zs.size, step):
            hi = min(lo + step, zs.size)
            d = np.abs(zs[lo:hi, None] - roots[None, :])
            thr = np.maximum(tols[lo:hi, None], rads[None, :])
            out[lo:hi] = (d <= thr).any(axis=1)
        return out

    def _periodic_pairs_functional(self, n, tol, attempt=0, ftol_rel=3e-11):
        """(location, multiplicity) pairs for all finite period-n points of
        a polynomial map.

        Seeded Newton sweeps with growing deflation: each round continues
        the still-stray particles with Newton deflated against everything
        found so far, so strays captured by an occupied root bounce off
        it toward the genuinely missing ones (near-degenerate partners,
        attracting centers).  The census equation total = degree^n is the
        guard.
        """
        resc = 4.0 * self._cauchy_radius() + 4.0
        seeds = self._periodic_seed_tree(n)
        if attempt:
            seeds = seeds + 10.0**(-9 + attempt) * (1.0 + np.abs(seeds)) * \
                np.exp(2j * np.pi * 0.6180339887 * np.arange(seeds.size) +
                       1.7j * attempt)
        needed = self.degree**n
        found = []          # (location, multiplicity)
        found_rads = []     # per-root merge radius
        roots = np.zeros(0, dtype=complex)
        mults = np.zeros(0, dtype=float)
        rads = np.zeros(0, dtype=float)
        pos = np.array(seeds, dtype=complex)
        parent = pos.copy()
        for rnd in range(12):
            xs, ok = self._newton_steps(pos, n, tol, resc, roots, mults,
                                        rads, sweeps=80 if rnd == 0 else 120)
            idx = np.nonzero(ok)[0]
            zs = xs[idx]
            v, D, b, _, prod = self._orbit_newton_data(zs, n, resc, second=True)
            psc = 1.0 + np.abs(prod)
            par = np.abs(D) <= 1e-4 * psc
            if par.any():
                # a residual-sized disk around a multiple root passes the
                # tolerance; the multiplicity-2 Newton step contracts the
                # parked landings onto the root itself
                y = zs[par]
                for _ in range(8):
                    v2, D2, _, _, _ = self._orbit_newton_data(
                        y, n, resc, second=True)
                    wd = 2.0 * v2 / np.where(D2 == 0, 1.0, D2)
                    wd = np.where(D2 == 0, 0.0, wd)
                    y = y - wd
                zs = zs.copy()
                zs[par] = y
                v, D, b, _, prod = self._orbit_newton_data(
                    zs, n, resc, second=True)
                psc = 1.0 + np.abs(prod)
                par = np.abs(D) <= 1e-4 * psc
            scale = (1.0 + np.abs(zs)) * (1.0 + np.minimum(np.abs(prod), 1e12))
            base_tol = ftol_rel * (1.0 + np.abs(zs))
            with np.errstate(divide="ignore", invalid="ignore"):
                r_par = 4.0 * np.sqrt(tol * scale /
                                      np.maximum(np.abs(b), 1e-300))
            tols = np.where(par, np.maximum(base_tol, r_par), base_tol)
            lex = np.lexsort((zs.imag, zs.real))
            zs, idx, tols, D, b, psc = (zs[lex], idx[lex], tols[lex],
                                        D[lex], b[lex], psc[lex])
            matched = self._match_existing(zs, tols, roots, rads)
            keep = ~matched
            if keep.any():
                keep[keep] = self._dedupe_lexsorted(zs[keep], tols[keep])
            for i in np.nonzero(keep)[0]:
                z = complex(zs[i])
                if abs(D[i]) > 1e-6 * psc[i]:
                    m = 1
                elif abs(b[i]) > 1e-6 * psc[i]:
                    m = 2
                else:
                    raise RootSolveFailure(
                        "periodic point at %s degenerate beyond a double root"
                        % z)
                found.append((z, m))
                found_rads.append(float(tols[i]))
            total = sum(m for _, m in found)
            # particles that landed a new root retire, and with them their
            # original seed.  Unproductive seeds restart (deflation
            # reshapes their local basins so the nearest missing root now
            # wins), while every other particle keeps its position:
            # journeys toward far-away missing roots take many sweeps to
            # complete, and particles parked on known roots get kicked
            # into the immediate neighborhood, where shielded missing
            # roots (hidden at long range behind the deflation pole of a
            # near-degenerate partner) are easy prey.
            cont = np.ones(xs.size, dtype=bool)
            cont[idx[keep]] = False
            if total >= needed or not cont.any():
                break
            roots = np.array([z for z, _ in found], dtype=complex)
            mults = np.array([m for _, m in found], dtype=float)
            rads = np.array(found_rads, dtype=float)
            stray = np.unique(parent[cont])
            prod_par = np.unique(parent[idx[keep]])
            if prod_par.size:
                stray = stray[~np.isin(stray, prod_par)]
            pos = np.concatenate([stray, xs[cont]])
            parent = np.concatenate([stray, parent[cont]])
            # a kicked copy of each restarted seed adds variety for
            # near-degenerate partners, population-capped
            if stray.size and pos.size + stray.size <= 4 * needed:
                kick = max(10.0**(-6 - rnd), 1e-12)
                ring = stray + kick * (1.0 + np.abs(stray)) * \
                    np.exp(2j * np.pi * 0.6180339887 *
                           np.arange(1, stray.size + 1) + 0.9j * rnd)
                pos = np.concatenate([pos, ring])
                parent = np.concatenate([parent, stray])
            if rnd == 0:
                tails = []
                for c, _ in self.critical_points():
                    if c.infinite:
                        continue
                    orb = self.orbit_array(np.array([c.value]), 40 + 2 * n)[:, 0]
                    tail = orb[-2 * n:]
                    tails.extend(tail[np.abs(tail) < resc])
                if tails:
                    tails = np.array(tails, dtype=complex)
                    pos = np.concatenate([pos, tails])
                    parent = np.concatenate([parent, tails])
        total = sum(m for _, m in found)
        if total != needed:
            raise RootSolveFailure(
                "periodic census found %d of %d finite points at depth %d"
                % (total, needed, n))
        return sorted(found, key=lambda t: (t[0].real, t[0].imag))

    def periodic_points(self, n, budget=PERIODIC_BUDGET, tol=1e-12,
                        cluster_tol=None, margin=CLASSIFICATION_MARGIN):
        """All points of period n (all fixed points of f^n), with multiplier,
        classification, and least-period flag.

        The census with multiplicity, counting infinity when f^n fixes it,
        always totals degree^n + 1.  Interlacing root families
        (Chebyshev-like maps) come as close as ~1/degree^(3n), so the
        evaluation route separates points at a much finer scale than the
        coefficient route's cluster tolerance.
        """
        d = self.degree
        if d**n > budget:
            raise CombinatorialExplosion(
                "periodic census needs %d points, budget %d" % (d**n + 1, budget),
                needed=d**n + 1, budget=budget)
        defaults = (budget == PERIODIC_BUDGET and tol == 1e-12
                    and cluster_tol is None and margin == CLASSIFICATION_MARGIN)
        if defaults and n in self._periodic_cache:
            return list(self._periodic_cache[n])
        if self.is_polynomial and n >= 2:
            last_err = None
            for attempt in range(3):
                try:
                    pairs = self._periodic_pairs_functional(n, tol, attempt)
                    break
                except RootSolveFailure as err:
                    last_err = err
            else:
                raise last_err
        else:
            ctol = 2e-6 if cluster_tol is None else cluster_tol
            roots = self._periodic_roots_coeff(n, tol)
            if roots is None:
                raise RootSolveFailure(
                    "periodic census at depth %d needs evaluation mode, which "
                    "requires a polynomial map" % n)
            means, counts = cluster_roots(roots, cluster_tol=ctol)
            pairs = [(complex(z), int(c)) for z, c in zip(means, counts)]
        pts = []
        for z, c in pairs:
            mult = self._orbit_multiplier(SpherePoint(z), n)
            lp = self._least_period(SpherePoint(z), n)
            # a multiple root of f^n(z) - z has multiplier exactly 1
            cls = "neutral" if c > 1 else classify_multiplier(mult, margin)
            pp = PeriodicPoint(
                location=SpherePoint(z), period=n, multiplier=mult,
                classification=cls, least_period=lp)
            pts.extend([pp] * int(c))
        inf_mult = d**n + 1 - len(pts)
        if inf_mult > 0:
            if not self._infinity_is_periodic(n):
                raise RootSolveFailure(
                    "census shortfall (%d finite) but infinity is not n-periodic"
                    % len(pts))
            mult = self._orbit_multiplier(SpherePoint.infinity(), n)
            lp = self._least_period(SpherePoint.infinity(), n)
            pp = PeriodicPoint(SpherePoint.infinity(), n, mult,
                               classify_multiplier(mult, margin), lp)
            pts.extend([pp] * inf_mult)
        if len(pts) != d**n + 1:
            raise RootSolveFailure(
                "periodic census %d does not match degree^n + 1 = %d"
                % (len(pts), d**n + 1))
        if defaults:
            self._periodic_cache[n] = pts
        return list(pts)

    def _infinity_is_periodic(self, n):
        p = SpherePoint.infinity()
        for _ in range(n):
            p = self(p)
        return p.infinite

    def _step_derivative(self, a: SpherePoint, b: SpherePoint):
        """Chart derivative of one step a -> b = f(a): chart z at finite
        points, w = 1/z at infinity.  Chain products give cycle multipliers."""
        if not a.infinite and not b.infinite:
            z = a.value
            return P.polyval(z, self._wron) / P.polyval(z, self.den) ** 2
        if not a.infinite and b.infinite:
            z = a.value
            w = _wronskian(self.den, self.num)
            return P.polyval(z, w) / P.polyval(z, self.num) ** 2
        if a.infinite and not b.infinite:
            w = _wronskian(self._num_rev, self._den_rev)
            return P.polyval(0.0, w) / P.polyval(0.0, self._den_rev) ** 2
        w = _wronskian(self._den_rev, self._num_rev)
        return P.polyval(0.0, w) / P.polyval(0.0, self._num_rev) ** 2

    def _orbit_multiplier(self, p: SpherePoint, n):
        cur = p
        mult = 1.0 + 0.0j
        for _ in range(n):
            nxt = self(cur)
            mult *= self._step_derivative(cur, nxt)
            cur = nxt
        return complex(mult)

    def _least_period(self, p: SpherePoint, n, tol=1e-6):
        for m in range(1, n):
            if n % m:
                continue
            cur = p
            for _ in range(m):
                cur = self(cur)
            if chordal_distance(cur, p) <= tol:
                return m
        return n

    def periodic_cycles(self, n, budget=PERIODIC_BUDGET, **kw):
        """Cycles of least period exactly n: list of lists of PeriodicPoint,
        each cycle in forward-orbit order."""
        pts = self.periodic_points(n, budget=budget, **kw)
        finite = [p for p in pts if p.least_period == n and not p.location.infinite]
        # drop multiplicity duplicates
        uniq = []
        for p in finite:
            if not uniq or p is not uniq[-1]:
                uniq.append(p)
        cycles = []
        if uniq:
            locs = np.array([p.location.value for p in uniq], dtype=complex)
            imgs = self.apply_array(locs)
            nxt = np.argmin(np.abs(imgs[:, None] - locs[None, :]), axis=1)
            used = np.zeros(len(uniq), dtype=bool)
            for i in range(len(uniq)):
                if used[i]:
                    continue
                cyc = []
                j = i
                for _ in range(n):
                    cyc.append(uniq[j])
                    used[j] = True
                    j = int(nxt[j])
                cycles.append(cyc)
        inf_pts = [p for p in pts if p.least_period == n and p.location.infinite]
        if inf_pts:
            p = inf_pts[0]
            cyc = []
            cur = p.location
            for _ in range(n):
                cyc.append(PeriodicPoint(cur, n, p.multiplier, p.classification, n))
                cur = self(cur)
            cycles.append(cyc)
        return cycles

    # -- critical and exceptional points --------------------------------------

    def critical_points(self):
        """Critical points with multiplicity, totalling 2 deg - 2 on the sphere."""
        out = []
        trimmed, _ = trim_coeffs(self._wron, rel_tol=1e-13)
        deg_w = len(trimmed) - 1 if np.max(np.abs(trimmed)) > 0 else 0
        if deg_w > 0:
            roots = aberth_roots(trimmed)
            means, counts = cluster_roots(roots)
            out.extend((SpherePoint(z), int(c)) for z, c in zip(means, counts))
        total = sum(c for _, c in out)
        inf_mult = 2 * self.degree - 2 - total
        if inf_mult > 0:
            out.append((SpherePoint.infinity(), inf_mult))
        return out

    def critical_values(self, dedupe_tol=1e-8):
        vals = []
        for c, _ in self.critical_points():
            v = self(c)
            if not any(chordal_distance(v, u) <= dedupe_tol for u in vals):
                vals.append(v)
        return vals

    def exceptional_points(self, tol=1e-6):
        """The finite (possibly empty) set of points with finite backward
        orbit.  Searched among cycles of period <= 2, each of whose points
        must be totally ramified onto its cyclic predecessor."""
        candidates = []
        for n in (1, 2):
            for p in self.periodic_points(n):
                if not any(chordal_distance(p.location, q) <= tol for q in candidates):
                    candidates.append(p.location)
        out = []
        for c in candidates:
            cycle = [c]
            cur = self(c)
            guard = 0
            while chordal_distance(cur, c) > tol and guard < 2:
                cycle.append(cur)
                cur = self(cur)
                guard += 1
            if chordal_distance(cur, c) > tol:
                continue
            good = True
            for i, pt in enumerate(cycle):
                fiber = self.preimages(pt)
                pred = cycle[(i - 1) % len(cycle)]
                if len(fiber) != 1 or chordal_distance(fiber[0][0], pred) > tol:
                    good = False
                    break
            if good:
                for pt in cycle:
                    if not any(chordal_distance(pt, q) <= tol for q in out):
                        out.append(pt)
        return out

    def repelling_fixed_points(self):
        return [p for p in self.periodic_points(1) if p.is_repelling]
