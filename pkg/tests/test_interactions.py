import math

import numpy as np
import pytest

from gibbslab.dynamics import make_rng, sample_poisson
from gibbslab.geometry import PointConfiguration, Window
from gibbslab.interactions import (
    AreaInteraction,
    NoInteraction,
    SoftCorePotential,
    StraussPotential,
    SuperstablePair,
    birth_rate_upper_bound,
    delta_area,
    from_spec,
)

from conftest import random_config

LENS_AT_UNIT_DISTANCE = 2.0 * math.pi / 3.0 - math.sqrt(3.0) / 2.0  # two-disk overlap


def fresh(config):
    return PointConfiguration(config.points.copy(), config.window)


class TestTotalEnergy:
    def test_empty_config(self):
        w = Window(2.0, 2)
        empty = PointConfiguration(np.zeros((0, 2)), w)
        assert StraussPotential(0.5, 1.0).total_energy(empty) == 0.0
        assert AreaInteraction(1.0, 1.0, 64).total_energy(empty) == 0.0

    def test_strauss_single_pair(self):
        w = Window(4.0, 2)
        cfg = PointConfiguration([[0.0, 0.0], [0.8, 0.0]], w)
        assert StraussPotential(0.5, 1.0).total_energy(cfg) == pytest.approx(0.5)

    def test_area_single_disk(self):
        w = Window(4.0, 2)
        cfg = PointConfiguration([[0.0, 0.0]], w)
        e = AreaInteraction(1.0, 1.0, 256).total_energy(cfg)
        assert e == pytest.approx(math.pi, abs=1e-3)

    def test_hard_core_violation_is_inf(self):
        w = Window(4.0, 2)
        cfg = PointConfiguration([[0.0, 0.0], [0.1, 0.0]], w)
        ss = SuperstablePair(0.2, lambda r: 0.0, 1.0)
        assert ss.total_energy(cfg) == math.inf


class TestConditionalEnergy:
    def test_strauss_count_times_strength(self):
        w = Window(4.0, 2)
        cfg = PointConfiguration([[0.5, 0.0], [0.0, 0.5], [-0.5, 0.0],
                                  [2.0, 2.0]], w)
        h = StraussPotential(0.5, 1.0).conditional_energy([0.0, 0.0], cfg)
        assert h == pytest.approx(1.5)

    def test_area_empty_is_disk(self):
        w = Window(4.0, 2)
        empty = PointConfiguration(np.zeros((0, 2)), w)
        h = AreaInteraction(1.0, 1.0, 256).conditional_energy([0.3, -0.2], empty)
        assert h == pytest.approx(math.pi, abs=1e-3)

    def test_area_two_disk_lens(self):
        w = Window(4.0, 2)
        cfg = PointConfiguration([[0.0, 0.0]], w)
        h = AreaInteraction(1.0, 1.0, 256).conditional_energy([1.0, 0.0], cfg)
        assert h == pytest.approx(math.pi - LENS_AT_UNIT_DISTANCE, abs=1e-3)

    @pytest.mark.parametrize("inter", [
        StraussPotential(0.7, 0.9),
        SoftCorePotential(lambda r: 2.0 * (1.0 - r) ** 2, 1.0),
        SuperstablePair(0.12, lambda r: -0.3 * (1.0 - r), 1.0),
    ])
    def test_locality_identity_pairs(self, inter):
        w = Window(2.0, 2)
        checked = 0
        for seed in range(1000):
            rng = make_rng(seed)
            cfg = sample_poisson(w, 0.8, rng)
            x = rng.uniform(-2, 2, 2)
            h = inter.conditional_energy(x, fresh(cfg))
            total0 = inter.total_energy(fresh(cfg))
            total1 = inter.total_energy(cfg.with_point(x))
            if math.isinf(total0):
                continue  # identity applies to finite-energy configurations
            if math.isinf(h):
                assert math.isinf(total1)
                continue
            assert total1 - total0 == pytest.approx(h, abs=1e-9, rel=1e-9)
            checked += 1
            if checked >= 500:
                break
        assert checked >= 400

    def test_locality_identity_area(self):
        w = Window(1.5, 2)
        inter = AreaInteraction(1.3, 0.8, 96)
        for seed in range(100):
            rng = make_rng(seed, 7)
            cfg = sample_poisson(w, 1.0, rng)
            x = rng.uniform(-1.5, 1.5, 2)
            h = inter.conditional_energy(x, fresh(cfg))
            diff = (inter.total_energy(cfg.with_point(x))
                    - inter.total_energy(fresh(cfg)))
            # exact for the lattice-discretized area functional
            assert diff == pytest.approx(h, abs=1e-9)

    @pytest.mark.parametrize("inter,tol", [
        (StraussPotential(0.6, 1.0), 1e-9),
        (AreaInteraction(1.1, 0.7, 64), 1e-9),
    ])
    def test_cocycle(self, inter, tol):
        w = Window(1.5, 2)
        for seed in range(40):
            rng = make_rng(seed, 13)
            cfg = sample_poisson(w, 0.8, rng)
            x = rng.uniform(-1.5, 1.5, 2)
            y = rng.uniform(-1.5, 1.5, 2)
            hx = inter.conditional_energy(x, fresh(cfg))
            hyx = inter.conditional_energy(y, cfg.with_point(x))
            hy = inter.conditional_energy(y, fresh(cfg))
            hxy = inter.conditional_energy(x, cfg.with_point(y))
            assert hx + hyx == pytest.approx(hy + hxy, abs=tol)

    def test_strauss_monotone_in_neighbors(self, rng):
        w = Window(2.0, 2)
        inter = StraussPotential(0.5, 1.0)
        cfg = PointConfiguration(np.zeros((0, 2)), w)
        h_prev = inter.conditional_energy([0.0, 0.0], cfg)
        for k in range(4):
            cfg = cfg.with_point([0.3 * math.cos(k), 0.3 * math.sin(k)])
            h = inter.conditional_energy([0.0, 0.0], cfg)
            assert h >= h_prev
            h_prev = h


class TestBirthRate:
    def test_zero_energy(self):
        w = Window(2.0, 2)
        empty = PointConfiguration(np.zeros((0, 2)), w)
        assert StraussPotential(0.5, 1.0).birth_rate([0.0, 0.0], empty) == 1.0

    def test_strauss_value(self):
        w = Window(4.0, 2)
        cfg = PointConfiguration([[0.5, 0.0], [0.0, 0.5], [-0.5, 0.0]], w)
        b = StraussPotential(0.5, 1.0).birth_rate([0.0, 0.0], cfg)
        assert b == pytest.approx(math.exp(-1.5), rel=1e-12)

    def test_hard_core_zero_exactly(self):
        w = Window(2.0, 2)
        cfg = PointConfiguration([[0.0, 0.0]], w)
        ss = SuperstablePair(0.5, lambda r: 0.0, 1.0)
        assert ss.birth_rate([0.1, 0.0], cfg) == 0.0


class TestDeltaArea:
    def test_empty(self):
        w = Window(4.0, 2)
        empty = PointConfiguration(np.zeros((0, 2)), w)
        a = delta_area(empty, [0.0, 0.0], 1.0, 256)
        assert a == pytest.approx(math.pi, abs=1e-3)

    def test_disjoint_disks(self):
        w = Window(4.0, 2)
        cfg = PointConfiguration([[3.0, 3.0]], w)
        a = delta_area(cfg, [0.0, 0.0], 1.0, 256)
        assert a == pytest.approx(math.pi, abs=1e-3)

    def test_lens_overlap_closed_form(self):
        w = Window(4.0, 2)
        cfg = PointConfiguration([[0.0, 0.0]], w)
        a = delta_area(cfg, [1.0, 0.0], 1.0, 256)
        assert a == pytest.approx(math.pi - LENS_AT_UNIT_DISTANCE, abs=1e-3)

    def test_bounded_by_disk(self, rng):
        w = Window(2.0, 2)
        for _ in range(30):
            cfg = sample_poisson(w, 1.0, rng)
            x = rng.uniform(-2, 2, 2)
            a = delta_area(cfg, x, 1.0, 64)
            assert 0.0 <= a <= math.pi + 1e-9

    def test_dim_rejected(self):
        w = Window(2.0, 1)
        cfg = PointConfiguration(np.zeros((0, 1)), w)
        with pytest.raises(ValueError):
            delta_area(cfg, [0.0], 1.0)


class TestRateBounds:
    def test_strauss(self):
        assert birth_rate_upper_bound(StraussPotential(0.5, 1.0)) == 1.0

    def test_soft_core(self):
        sc = SoftCorePotential(lambda r: 1.0 - r, 1.0)
        assert birth_rate_upper_bound(sc) == 1.0

    def test_area_attractive(self):
        assert birth_rate_upper_bound(AreaInteraction(0.5, 1.0)) == 1.0

    def test_area_repulsive(self):
        b = birth_rate_upper_bound(AreaInteraction(-0.5, 1.0))
        assert b == pytest.approx(math.exp(0.5 * math.pi), rel=1e-12)

    def test_superstable_no_core_infinite(self):
        ss = SuperstablePair(0.0, lambda r: -0.1, 1.0)
        assert birth_rate_upper_bound(ss) == math.inf

    def test_superstable_packing(self):
        ss = SuperstablePair(0.5, lambda r: -0.1 * (1 - r), 1.0)
        k2 = math.floor((2.0 / 0.5 + 1.0) ** 2)
        assert ss.packing_bound(2) == k2
        assert birth_rate_upper_bound(ss, dim=2) == pytest.approx(
            math.exp(ss.tail_sup * k2))

    def test_bound_dominates_observed_rates(self):
        w = Window(2.0, 2)
        inter = AreaInteraction(-0.4, 0.8, 64)
        bound = birth_rate_upper_bound(inter)
        rng = make_rng(3)
        for _ in range(40):
            cfg = sample_poisson(w, 1.0, rng)
            x = rng.uniform(-2, 2, 2)
            assert inter.birth_rate(x, cfg) <= bound + 1e-12


class TestFromSpec:
    def test_round_trip_kinds(self):
        assert isinstance(from_spec({"kind": "none"}), NoInteraction)
        st = from_spec({"kind": "strauss", "strength": 0.5, "range": 1.0})
        assert isinstance(st, StraussPotential)
        ar = from_spec({"kind": "area", "gamma": 1.0, "radius": 1.0})
        assert ar.quad_resolution == 256
        ss = from_spec({"kind": "superstable", "hard_core": 0.2,
                        "range": 1.0, "well_depth": 0.3})
        assert isinstance(ss, SuperstablePair)
        assert ss.table[0] == pytest.approx(-0.3 * (1 - 0.2))
        assert ss.table[-1] == pytest.approx(0.0, abs=1e-12)

    def test_unknown_kind(self):
        with pytest.raises(ValueError):
            from_spec({"kind": "lennard_jones"})


class TestTableConsistency:
    def test_soft_core_matches_closure_on_knots(self):
        phi = lambda r: 2.0 * (1.0 - r) ** 2
        sc = SoftCorePotential(phi, 1.0, table_size=64)
        radii = np.linspace(0, 1, 65)
        np.testing.assert_allclose(sc.table, [phi(r) for r in radii])

    def test_negative_soft_core_rejected(self):
        with pytest.raises(ValueError):
            SoftCorePotential(lambda r: -1.0, 1.0)
