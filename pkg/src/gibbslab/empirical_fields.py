"""Periodized configurations, empirical-field density, and tail statistics."""

from __future__ import annotations

import math
from dataclasses import dataclass
from itertools import product

import numpy as np

from .geometry import Ball, Box, PointConfiguration, Region


@dataclass(frozen=True)
class PeriodizedField:
    """A configuration restricted to the box of half-side n and extended by
    period 2n in every axis; counts are evaluated against the extension."""

    base_points: np.ndarray
    n: float
    dim: int

    def count_in(self, region: Region) -> int:
        if self.base_points.shape[0] == 0:
            return 0
        period = 2.0 * self.n
        if isinstance(region, Box):
            lo = np.asarray(region.lower, dtype=float)
            hi = np.asarray(region.upper, dtype=float)
        else:
            c = np.asarray(region.center, dtype=float)
            lo, hi = c - region.radius, c + region.radius
        total = 0
        ranges = [
            range(math.ceil((lo[a] - self.n) / period),
                  math.floor((hi[a] + self.n) / period) + 1)
            for a in range(self.dim)
        ]
        for shift in product(*ranges):
            moved = self.base_points + period * np.asarray(shift, dtype=float)
            total += int(np.count_nonzero(region.mask(moved)))
        return total


def periodize(config: PointConfiguration, n: float) -> PeriodizedField:
    """Keep the points of the box of half-side n, extend with period 2n."""
    if n > config.window.half_side:
        raise ValueError("n must not exceed the window half-side")
    pts = config.points
    if pts.shape[0]:
        keep = np.all(np.abs(pts) <= n, axis=1)
        pts = pts[keep]
    return PeriodizedField(pts.copy(), float(n), config.dim)


def empirical_field_density(field: PeriodizedField) -> float:
    """Average unit-cube count of the stationary empirical field.

    The translation integral of N_C over the periodization collapses to
    count * |C| / |box| exactly (mass transport), so this is just the point
    density of the base box.
    """
    return field.base_points.shape[0] / (2.0 * field.n) ** field.dim


@dataclass(frozen=True)
class TailEstimate:
    """Tail functional E[(N/|box|) 1{N >= t |box|}] with zero-hit fallback."""

    estimate: float
    std_error: float
    n_hits: int
    n_samples: int
    threshold: float
    volume: float
    hit_rate_upper_95: float
    log_per_volume: float | None


def density_tail(sampler, n: float, t: float, n_samples: int,
                 rng: np.random.Generator) -> TailEstimate:
    """Monte Carlo tail of the density in the box of half-side n.

    When no sample crosses the threshold the functional cannot be bounded
    from the data alone; the report then carries the one-sided 95% upper
    confidence bound on the hit probability instead.
    """
    if t <= 0:
        raise ValueError("t must be positive")
    configs = sampler.draw(n_samples, rng)
    dim = configs[0].dim if configs else 2
    vol = (2.0 * n) ** dim
    box = Box(tuple([-n] * dim), tuple([n] * dim))
    dens = np.array([c.count_in(box) / vol for c in configs])
    hits = dens >= t
    values = dens * hits
    n_hits = int(np.count_nonzero(hits))
    estimate = float(values.mean())
    se = float(values.std(ddof=1) / math.sqrt(len(values))) if len(values) > 1 else 0.0
    upper = 1.0 - 0.05 ** (1.0 / n_samples)
    log_pv = math.log(estimate) / vol if estimate > 0 else None
    return TailEstimate(estimate, se, n_hits, n_samples, t, vol, upper, log_pv)


def temperedness_statistic(config: PointConfiguration, n_max: int) -> float:
    """max over n <= n_max of the per-volume sum of squared cell counts.

    Cells are i + [-1, 1]^d over integer lattice points i in the box of
    half-side n; finite configurations always give finite values.
    """
    if n_max < 1:
        raise ValueError("n_max must be at least 1")
    pts = config.points
    best = 0.0
    for n in range(1, n_max + 1):
        axis = range(-n, n + 1)
        total = 0.0
        for i in product(*([axis] * config.dim)):
            center = np.asarray(i, dtype=float)
            if pts.shape[0]:
                inside = np.all(np.abs(pts - center) <= 1.0, axis=1)
                c = int(np.count_nonzero(inside))
            else:
                c = 0
            total += c * c
        best = max(best, total / (2.0 * n) ** config.dim)
    return best
