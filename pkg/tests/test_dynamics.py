import math

import numpy as np
import pytest
from scipy import stats

from gibbslab.dynamics import (
    GibbsSampler,
    PoissonSampler,
    Trajectory,
    ctmc_count_series,
    detailed_balance_residual,
    load_trajectory_jsonl,
    make_rng,
    mh_acceptance_factors,
    run_ctmc,
    run_mh,
    sample_gibbs,
    sample_poisson,
    save_trajectory_jsonl,
)
from gibbslab.geometry import Box, PointConfiguration, Window
from gibbslab.interactions import (
    AreaInteraction,
    NoInteraction,
    StraussPotential,
    SuperstablePair,
)


def poisson_chisq_p(counts, mean):
    """Goodness-of-fit p-value against Poisson(mean), tails merged to >= 5."""
    counts = np.asarray(counts)
    n = len(counts)
    kmax = int(counts.max()) + 1
    probs = stats.poisson.pmf(np.arange(kmax + 1), mean)
    probs[-1] = 1.0 - probs[:-1].sum()
    observed = np.bincount(counts, minlength=kmax + 1).astype(float)
    # merge adjacent bins until every expected count is at least 5
    obs_bins, exp_bins = [], []
    o_acc = e_acc = 0.0
    for o, e in zip(observed, probs * n):
        o_acc += o
        e_acc += e
        if e_acc >= 5.0:
            obs_bins.append(o_acc)
            exp_bins.append(e_acc)
            o_acc = e_acc = 0.0
    if exp_bins:
        obs_bins[-1] += o_acc
        exp_bins[-1] += e_acc
    obs_bins = np.array(obs_bins)
    exp_bins = np.array(exp_bins) * (obs_bins.sum() / sum(exp_bins))
    return float(stats.chisquare(obs_bins, exp_bins).pvalue)


def pair_count(config, r):
    if len(config) < 2:
        return 0
    total = 0
    for i in range(len(config)):
        d = config.window.torus_distance(config.points, config.points[i])
        total += int(np.sum(d[i + 1:] <= r))
    return total


class TestSamplePoisson:
    def test_low_intensity_empty(self):
        w = Window(2.0, 2)
        rng = make_rng(1)
        empties = sum(len(sample_poisson(w, 1e-4, rng)) == 0 for _ in range(200))
        assert empties >= 195

    def test_mean_count(self):
        w = Window(2.0, 2)
        rng = make_rng(2)
        counts = np.array([len(sample_poisson(w, 1.0, rng)) for _ in range(10_000)])
        se = math.sqrt(16.0 / len(counts))
        assert abs(counts.mean() - 16.0) <= 3 * se

    def test_dispersion(self):
        w = Window(2.0, 2)
        rng = make_rng(3)
        counts = np.array([len(sample_poisson(w, 1.0, rng)) for _ in range(10_000)])
        assert 0.94 <= counts.var(ddof=1) / counts.mean() <= 1.06

    def test_intensity_validation(self, rng):
        with pytest.raises(ValueError):
            sample_poisson(Window(1.0, 2), 0.0, rng)


class TestCtmcFreeBirthDeath:
    def test_stationary_subwindow_poisson(self):
        w = Window(2.0, 2)
        start = sample_poisson(w, 1.0, make_rng(5))
        times = 4.0 + 4.0 * np.arange(2000)
        counts = ctmc_count_series(start, NoInteraction(), times, make_rng(6),
                                   region=Box((0.0, 0.0), (1.0, 1.0)))
        p = poisson_chisq_p(counts, 1.0)
        assert p > 0.01

    def test_transient_mean_from_empty(self):
        w = Window(2.0, 2)
        empty = PointConfiguration(np.zeros((0, 2)), w)
        t_grid = np.array([0.5, 1.0, 2.0])
        rng = make_rng(7)
        reps = 1500
        counts = np.empty((reps, len(t_grid)))
        for k in range(reps):
            counts[k] = ctmc_count_series(empty, NoInteraction(), t_grid, rng)
        for j, t in enumerate(t_grid):
            expected = 16.0 * (1.0 - math.exp(-t))
            se = counts[:, j].std(ddof=1) / math.sqrt(reps)
            assert abs(counts[:, j].mean() - expected) <= 3 * se

    def test_strong_strauss_suppresses_pairs(self):
        w = Window(2.0, 2)
        start = sample_poisson(w, 1.0, make_rng(8))
        inter = StraussPotential(50.0, 1.0)
        traj = run_ctmc(start, inter, 40.0, make_rng(9))
        pois_reference = 0.5 * 16.0 * math.pi  # E pairs within r=1 at intensity 1
        observed = np.mean([pair_count(traj.state_at(t), 1.0)
                            for t in np.arange(20.0, 40.0, 2.0)])
        assert observed < 0.05 * pois_reference

    def test_infinite_bound_rejected(self):
        w = Window(2.0, 2)
        start = sample_poisson(w, 1.0, make_rng(10))
        ss = SuperstablePair(0.0, lambda r: -0.1, 1.0)
        with pytest.raises(ValueError, match="run_mh"):
            run_ctmc(start, ss, 1.0, make_rng(11))


class TestTrajectory:
    def test_replay_valid(self):
        w = Window(2.0, 2)
        start = sample_poisson(w, 1.0, make_rng(12))
        traj = run_ctmc(start, StraussPotential(0.5, 1.0), 5.0, make_rng(13))
        assert traj.validate()
        assert len(traj) > 0
        assert np.all(np.diff(traj.times) > 0)

    def test_determinism(self):
        w = Window(2.0, 2)
        start = sample_poisson(w, 1.0, make_rng(14))
        a = run_ctmc(start, NoInteraction(), 3.0, make_rng(15))
        b = run_ctmc(PointConfiguration(start.points.copy(), w),
                     NoInteraction(), 3.0, make_rng(15))
        np.testing.assert_array_equal(a.times, b.times)
        np.testing.assert_array_equal(a.kinds, b.kinds)
        np.testing.assert_array_equal(a.locations, b.locations)

    def test_jsonl_round_trip(self, tmp_path):
        w = Window(2.0, 2)
        start = sample_poisson(w, 1.0, make_rng(16))
        traj = run_ctmc(start, NoInteraction(), 2.0, make_rng(17))
        path = tmp_path / "events.jsonl"
        save_trajectory_jsonl(traj, path)
        back = load_trajectory_jsonl(path, start, traj.t_end)
        np.testing.assert_array_equal(back.times, traj.times)
        np.testing.assert_array_equal(back.kinds, traj.kinds)
        np.testing.assert_array_equal(back.locations, traj.locations)

    def test_count_series_matches_kernel_sampling(self):
        w = Window(2.0, 2)
        start = sample_poisson(w, 1.0, make_rng(18))
        times = np.linspace(0.0, 3.0, 13)
        traj = run_ctmc(start, StraussPotential(0.7, 0.9), 3.0, make_rng(19))
        direct = ctmc_count_series(start, StraussPotential(0.7, 0.9), times,
                                   make_rng(19))
        np.testing.assert_array_equal(traj.count_series(times), direct)


class TestMetropolis:
    def test_poisson_target(self):
        w = Window(2.0, 2)
        sampler = GibbsSampler(w, NoInteraction(), burn_in=5_000, gap=300)
        counts = np.array([len(c) for c in sampler.draw(3000, make_rng(20))])
        assert poisson_chisq_p(counts, 16.0) > 0.01

    def test_acceptance_factor_identity(self):
        w = Window(2.0, 2)
        rng = make_rng(21)
        inter = StraussPotential(0.5, 1.0)
        for _ in range(50):
            cfg = sample_poisson(w, 1.0, rng)
            x = rng.uniform(-2, 2, 2)
            birth, death = mh_acceptance_factors(inter, cfg, x)
            b = inter.birth_rate(x, cfg)
            assert birth == w.volume() * b / (len(cfg) + 1)
            if birth > 0:
                assert birth * death == pytest.approx(1.0, rel=1e-12)

    def test_hard_core_birth_rejected(self):
        w = Window(2.0, 2)
        cfg = PointConfiguration([[0.0, 0.0]], w)
        ss = SuperstablePair(0.5, lambda r: 0.0, 1.0)
        birth, death = mh_acceptance_factors(ss, cfg, [0.2, 0.0])
        assert birth == 0.0
        assert death == math.inf

    def test_mh_and_ctmc_marginals_agree(self):
        w = Window(2.0, 2)
        inter = StraussPotential(0.5, 1.0)
        mh_counts = np.array([
            len(c) for c in GibbsSampler(w, inter, burn_in=20_000,
                                         gap=300).draw(2000, make_rng(22))
        ])
        start = sample_poisson(w, 1.0, make_rng(23))
        times = 10.0 + 2.0 * np.arange(2000)
        ct_counts = ctmc_count_series(start, inter, times, make_rng(24))
        kmax = int(max(mh_counts.max(), ct_counts.max()))
        bins = np.arange(kmax + 2)
        h1 = np.histogram(mh_counts, bins=bins)[0]
        h2 = np.histogram(ct_counts, bins=bins)[0]
        keep = (h1 + h2) >= 10
        table = np.vstack([h1[keep], h2[keep]])
        p = stats.chi2_contingency(table).pvalue
        assert p > 0.01


class TestGibbsSampling:
    def test_periodic_mode(self):
        w = Window(2.0, 2)
        cfg = sample_gibbs(w, StraussPotential(0.5, 1.0), "periodic",
                           10_000, make_rng(25))
        assert cfg.window == w
        assert w.contains(cfg.points)

    def test_free_poisson_law(self):
        w = Window(2.0, 2, "free")
        sampler = GibbsSampler(w, NoInteraction(), burn_in=5_000, gap=300)
        counts = np.array([len(c) for c in sampler.draw(1500, make_rng(26))])
        assert poisson_chisq_p(counts, 16.0) > 0.01

    def test_boundary_overlap_rejected(self):
        w = Window(2.0, 2, "free")
        inside = np.array([[0.5, 0.5]])
        with pytest.raises(ValueError, match="outside the window"):
            run_mh(PointConfiguration(np.zeros((0, 2)), w),
                   StraussPotential(0.5, 1.0), 10, make_rng(27),
                   boundary=inside)

    def test_boundary_beyond_range_rejected(self):
        w = Window(2.0, 2, "free")
        far = np.array([[5.0, 5.0]])
        with pytest.raises(ValueError, match="interaction range"):
            run_mh(PointConfiguration(np.zeros((0, 2)), w),
                   StraussPotential(0.5, 1.0), 10, make_rng(28),
                   boundary=far)

    def test_boundary_on_periodic_rejected(self):
        w = Window(2.0, 2)
        with pytest.raises(ValueError, match="free window"):
            run_mh(PointConfiguration(np.zeros((0, 2)), w),
                   StraussPotential(0.5, 1.0), 10, make_rng(29),
                   boundary=np.array([[2.5, 2.5]]))

    def test_boundary_points_influence_interior(self):
        w = Window(1.0, 2, "free")
        inter = StraussPotential(3.0, 1.0)
        shell = []
        for t in np.linspace(0, 2 * math.pi, 40, endpoint=False):
            radius = 1.4
            shell.append([radius * math.cos(t), radius * math.sin(t)])
        shell = np.array(shell)
        shell = shell[np.max(np.abs(shell), axis=1) > 1.0]
        dense_counts = []
        empty_counts = []
        for rep in range(60):
            s1 = GibbsSampler(w, inter, burn_in=4000, gap=0, boundary=shell)
            dense_counts.append(len(s1.draw(1, make_rng(30, rep))[0]))
            s2 = GibbsSampler(w, inter, burn_in=4000, gap=0)
            empty_counts.append(len(s2.draw(1, make_rng(31, rep))[0]))
        assert np.mean(dense_counts) < np.mean(empty_counts)


class TestStationarity:
    def test_ctmc_preserves_gibbs_law(self):
        w = Window(2.0, 2)
        inter = StraussPotential(0.5, 1.0)
        rng = make_rng(32)
        n_reps = 1000
        at0 = np.empty(n_reps, dtype=int)
        at5 = np.empty(n_reps, dtype=int)
        for k in range(n_reps):
            cfg = sample_gibbs(w, inter, "periodic", 20_000, rng)
            at0[k] = len(cfg)
            counts = ctmc_count_series(cfg, inter, np.array([5.0]), rng)
            at5[k] = counts[0]
        p = stats.ks_2samp(at0, at5).pvalue
        assert p > 0.01


class TestDetailedBalance:
    def test_zero_interaction_exact(self, rng):
        w = Window(2.0, 2)
        cfg = sample_poisson(w, 1.0, rng)
        x = rng.uniform(-2, 2, 2)
        assert detailed_balance_residual(NoInteraction(), cfg, x) == 0.0

    def test_strauss_residual_tiny(self):
        w = Window(1.5, 2)
        inter = StraussPotential(0.5, 1.0)
        for seed in range(500):
            rng = make_rng(seed, 3)
            cfg = sample_poisson(w, 1.0, rng)
            x = rng.uniform(-1.5, 1.5, 2)
            resid = detailed_balance_residual(inter, cfg, x)
            scale = math.exp(-inter.total_energy(cfg))
            assert abs(resid) <= 1e-9 * scale

    def test_area_residual_quadrature_limited(self):
        w = Window(1.5, 2)
        inter = AreaInteraction(1.0, 0.8, 96)
        for seed in range(100):
            rng = make_rng(seed, 4)
            cfg = sample_poisson(w, 0.8, rng)
            x = rng.uniform(-1.5, 1.5, 2)
            resid = detailed_balance_residual(inter, cfg, x)
            scale = math.exp(-inter.total_energy(cfg))
            assert abs(resid) <= 1e-3 * scale

    def test_excluded_insertion_zero_by_convention(self):
        w = Window(2.0, 2)
        cfg = PointConfiguration([[0.0, 0.0]], w)
        ss = SuperstablePair(0.5, lambda r: 0.0, 1.0)
        assert detailed_balance_residual(ss, cfg, [0.1, 0.0]) == 0.0
