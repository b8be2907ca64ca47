"""Empirical invariant measures: periodic-orbit measures, maximal-entropy
samples, and the infimum of Lyapunov exponents over repelling cycles.

Only measures with exactly known entropy enter the variational machinery:
periodic-orbit measures (entropy 0) and measures of maximal entropy
(entropy log degree, a theoretical value attached to the sampled atoms,
not estimated from them).  Lyapunov exponents are sample averages of the
log derivative and carry their metric convention.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .sphere import SpherePoint


@dataclass
class EmpiricalMeasure:
    """Finitely supported probability measure on the sphere.

    kind: periodic_orbit | mme_sample.  entropy for a periodic orbit is
    exactly 0; for an mme sample it is log(degree), the known entropy of
    the limit measure rather than an estimate.  lyapunov is the
    atom-weighted average of log |f'| in the stated metric.
    """

    locations: np.ndarray
    weights: np.ndarray
    kind: str
    entropy: float
    lyapunov: float
    metric: str = "euclidean"

    def __post_init__(self):
        self.locations = np.asarray(self.locations, dtype=complex)
        self.weights = np.asarray(self.weights, dtype=float)
        if self.locations.shape != self.weights.shape:
            raise ValueError("atom locations and weights differ in shape")
        if abs(self.weights.sum() - 1.0) > 1e-12:
            raise ValueError("weights must sum to 1 within 1e-12")
        if np.any(self.weights < 0):
            raise ValueError("weights must be nonnegative")

    @property
    def atoms(self):
        return [(SpherePoint(z), float(w))
                for z, w in zip(self.locations, self.weights)]

    def integrate(self, potential, fmap=None, t=None, clamp=True):
        """Atom-weighted integral of a potential."""
        vals = potential.evaluate(self.locations, fmap=fmap, t=t, clamp=clamp)
        return float(np.dot(np.asarray(vals, dtype=float), self.weights))

    def pushforward(self, fmap):
        """Image measure under the map (invariance checks)."""
        return EmpiricalMeasure(
            locations=fmap.apply_array(self.locations),
            weights=self.weights.copy(), kind=self.kind,
            entropy=self.entropy, lyapunov=self.lyapunov, metric=self.metric)


def periodic_measure(fmap, orbit):
    """Equidistribution on the cycle through a periodic point.

    Entropy is exactly 0; the Lyapunov exponent is log|multiplier| divided
    by the period, identical in either metric because the cycle multiplier
    is a chart-free quantity.
    """
    if orbit.location.infinite:
        raise ValueError("cycles through infinity are not supported here")
    m = orbit.least_period
    pts = fmap.orbit_array(complex(orbit.location), m - 1)[:, 0]
    if not np.all(np.isfinite(pts)):
        raise ValueError("cycles through infinity are not supported here")
    lyap = np.log(abs(orbit.multiplier)) / orbit.period
    return EmpiricalMeasure(
        locations=pts, weights=np.full(m, 1.0 / m), kind="periodic_orbit",
        entropy=0.0, lyapunov=float(lyap), metric="euclidean")


def mme_measure(fmap, sample, metric="euclidean"):
    """Equal weights on a Julia sample, carrying the theoretical maximal
    entropy log(degree) and the sampled Lyapunov exponent."""
    n = len(sample)
    logd = fmap.log_derivative_array(sample.values, metric=metric)
    return EmpiricalMeasure(
        locations=sample.values.copy(), weights=np.full(n, 1.0 / n),
        kind="mme_sample", entropy=float(np.log(fmap.degree)),
        lyapunov=float(np.mean(logd)), metric=metric)


@dataclass
class ChiInfBound:
    """Upper bound for the infimum Lyapunov exponent, from repelling
    cycles of period at most max_period.  The true infimum over all
    invariant measures can only be smaller, hence bound_kind."""

    value: float
    max_period: int
    argmin_period: int
    argmin_location: complex
    bound_kind: str = "upper"

    def __float__(self):
        return self.value


def chi_inf_estimate(fmap, max_period):
    """Smallest cycle Lyapunov exponent log|multiplier| / period over
    repelling cycles of period <= max_period; an upper bound for the
    infimum of Lyapunov exponents of invariant measures."""
    if max_period < 1:
        raise ValueError("max_period must be >= 1")
    best = None
    for n in range(1, max_period + 1):
        for p in fmap.periodic_points(n):
            if p.least_period != n or not p.is_repelling:
                continue
            lam = np.log(abs(p.multiplier)) / n
            if best is None or lam < best.value:
                loc = complex(p.location) if not p.location.infinite else \
                    complex(np.inf)
                best = ChiInfBound(value=float(lam), max_period=max_period,
                                   argmin_period=n, argmin_location=loc)
    if best is None:
        raise ValueError(
            "no repelling cycle of period <= %d found" % max_period)
    return best


def ruelle_gap(measure):
    """max(2 * lyapunov, 0) - entropy; nonnegative for measures respecting
    the entropy-Lyapunov inequality on the sphere."""
    return max(2.0 * measure.lyapunov, 0.0) - measure.entropy
