import math

import numpy as np
import pytest
from scipy import stats

from gibbslab.dynamics import PoissonSampler, make_rng, sample_poisson
from gibbslab.empirical_fields import (
    TailEstimate,
    density_tail,
    empirical_field_density,
    periodize,
    temperedness_statistic,
)
from gibbslab.geometry import Box, PointConfiguration, Window


class TestPeriodize:
    def test_empty(self):
        w = Window(2.0, 2)
        field = periodize(PointConfiguration(np.zeros((0, 2)), w), 1.0)
        assert field.count_in(Box((-5.0, -5.0), (5.0, 5.0))) == 0

    def test_single_point_shifted_copy(self):
        w = Window(2.0, 1)
        field = periodize(PointConfiguration([[0.0]], w), 1.0)
        assert field.count_in(Box((1.5,), (2.5,))) == 1  # copy at 2
        assert field.count_in(Box((-2.5,), (-1.5,))) == 1  # copy at -2
        assert field.count_in(Box((0.4,), (0.6,))) == 0

    def test_tiling_identity(self, rng):
        w = Window(2.0, 2)
        cfg = sample_poisson(w, 1.0, rng)
        n = 1.0
        field = periodize(cfg, n)
        base = field.count_in(Box((-n, -n), (n, n)))
        tripled = field.count_in(Box((-3 * n, -3 * n), (3 * n, 3 * n)))
        # interior copies are exact; points on the box edge may be counted
        # by adjacent tiles as well, so compare against the brute-force scan
        period = 2 * n
        brute = 0
        for kx in (-1, 0, 1):
            for ky in (-1, 0, 1):
                moved = field.base_points + period * np.array([kx, ky])
                brute += int(np.sum(np.all(np.abs(moved) <= 3 * n, axis=1)))
        assert tripled == brute
        assert brute >= 9 * base - 3 * len(field.base_points)

    def test_needs_n_inside_window(self, rng):
        w = Window(1.0, 2)
        cfg = sample_poisson(w, 1.0, rng)
        with pytest.raises(ValueError):
            periodize(cfg, 2.0)

    def test_idempotent_counts(self, rng):
        w = Window(2.0, 2)
        cfg = sample_poisson(w, 1.0, rng)
        f1 = periodize(cfg, 1.5)
        inner = PointConfiguration(f1.base_points, Window(1.5, 2))
        f2 = periodize(inner, 1.5)
        for seed in range(10):
            q = make_rng(seed).uniform(-4, 3, (2, 2))
            lo, hi = np.minimum(q[0], q[1]), np.maximum(q[0], q[1]) + 0.1
            region = Box(tuple(lo), tuple(hi))
            assert f1.count_in(region) == f2.count_in(region)


class TestDensity:
    def test_empty(self):
        w = Window(2.0, 2)
        field = periodize(PointConfiguration(np.zeros((0, 2)), w), 2.0)
        assert empirical_field_density(field) == 0.0

    def test_sixteen_points(self):
        w = Window(2.0, 2)
        rng = make_rng(3)
        pts = rng.uniform(-2, 2, (16, 2))
        field = periodize(PointConfiguration(pts, w), 2.0)
        assert empirical_field_density(field) == 1.0

    def test_matches_translation_quadrature(self, rng):
        w = Window(2.0, 2)
        cfg = sample_poisson(w, 1.0, rng)
        n = 1.5
        field = periodize(cfg, n)
        closed = empirical_field_density(field)
        # direct quadrature of x -> N_{C+x}(periodization) over the box
        m = 48
        delta = 2.0 * n / m
        total = 0
        for i in range(m):
            for j in range(m):
                x = np.array([-n + (i + 0.5) * delta, -n + (j + 0.5) * delta])
                total += field.count_in(Box(tuple(x), tuple(x + 1.0)))
        quad = total * delta * delta / (2.0 * n) ** 2
        assert quad == pytest.approx(closed, abs=1e-6 + 0.05 * closed)

    def test_translation_invariance(self, rng):
        # periodizing over the full window: any torus shift preserves counts
        w = Window(2.0, 2)
        cfg = sample_poisson(w, 1.0, rng)
        n = w.half_side
        d1 = empirical_field_density(periodize(cfg, n))
        for _ in range(5):
            y = rng.uniform(-2, 2, 2)
            d2 = empirical_field_density(periodize(cfg.translate(y), n))
            assert d1 == d2


class TestDensityTail:
    def test_low_threshold_captures_mean(self):
        w = Window(2.0, 2)
        sampler = PoissonSampler(w, 1.0)
        est = density_tail(sampler, 2.0, 0.05, 2000, make_rng(4))
        mean_density = 1.0
        assert est.estimate == pytest.approx(mean_density, abs=0.05)
        assert est.n_hits == est.n_samples

    def test_chernoff_scale(self):
        # P(N >= 2 * 16) for Poisson(16): Chernoff exp(-16(2 log 2 - 1))
        w = Window(2.0, 2)
        sampler = PoissonSampler(w, 1.0)
        est = density_tail(sampler, 2.0, 2.0, 20_000, make_rng(5))
        chernoff = 2.0 * math.exp(-16.0 * (2.0 * math.log(2.0) - 1.0))
        assert est.estimate <= chernoff + 3 * est.std_error

    def test_zero_hits_upper_bound(self):
        w = Window(2.0, 2)
        sampler = PoissonSampler(w, 1.0)
        est = density_tail(sampler, 2.0, 10.0, 2000, make_rng(6))
        assert est.estimate == 0.0
        assert est.n_hits == 0
        assert est.log_per_volume is None
        assert est.hit_rate_upper_95 == pytest.approx(
            1.0 - 0.05 ** (1.0 / 2000))

    def test_monotone_in_threshold(self):
        w = Window(2.0, 2)
        sampler = PoissonSampler(w, 1.0)
        configs = sampler.draw(500, make_rng(7))

        class Fixed:
            def draw(self, n, rng):
                return configs[:n]

        prev = math.inf
        for t in (0.5, 1.0, 1.5, 2.0):
            est = density_tail(Fixed(), 2.0, t, 500, make_rng(8))
            assert est.estimate <= prev + 1e-12
            prev = est.estimate


class TestTemperedness:
    def test_empty(self):
        w = Window(4.0, 2)
        cfg = PointConfiguration(np.zeros((0, 2)), w)
        assert temperedness_statistic(cfg, 3) == 0.0

    def test_one_point_per_unit_cell_1d(self):
        w = Window(4.0, 1)
        pts = np.arange(-3.5, 4.0, 1.0).reshape(-1, 1)
        cfg = PointConfiguration(pts, w)
        stat = temperedness_statistic(cfg, 3)
        # brute force over the cells of each scale
        best = 0.0
        for n in (1, 2, 3):
            total = 0
            for i in range(-n, n + 1):
                c = int(np.sum(np.abs(pts[:, 0] - i) <= 1.0))
                total += c * c
            best = max(best, total / (2.0 * n))
        assert stat == best
        assert stat <= 9.0

    def test_poisson_concentration(self):
        w = Window(5.0, 2)
        stats_ = []
        for seed in range(40):
            cfg = sample_poisson(w, 1.0, make_rng(seed, 9))
            stats_.append(temperedness_statistic(cfg, 4))
        arr = np.array(stats_)
        assert arr.std(ddof=1) / arr.mean() < 0.5
