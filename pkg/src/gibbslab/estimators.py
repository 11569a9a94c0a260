"""Monte Carlo estimators: means, centered log-MGFs, entropy, Dirichlet
forms, MLSI-ratio probes, and GNZ residuals.

All nonlinear functionals carry bootstrap standard errors (200 resamples by
default); estimator reductions are deterministic given the sample order,
which is fixed by the seed and the replica split.
"""

from __future__ import annotations

import csv
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from pathlib import Path

import numpy as np
from scipy.special import logsumexp

from .geometry import Box, PointConfiguration
from .interactions import Interaction, birth_rates_batch

SCHEMA_VERSION = 1
ESTIMATE_COLUMNS = ("schema_version", "quantity", "lambda", "value",
                    "std_error", "n_samples", "seed")

_DEFAULT_BOOT = 200


def draw_samples(sampler, n: int, rng: np.random.Generator,
                 replicas: int = 1, threads: int = 1) -> list[PointConfiguration]:
    """Replica-split draws, merged in replica order (deterministic)."""
    if replicas <= 1:
        return sampler.draw(n, rng)
    child = rng.spawn(replicas)
    counts = [n // replicas + (1 if i < n % replicas else 0)
              for i in range(replicas)]
    if threads > 1:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            parts = list(pool.map(lambda args: sampler.draw(*args),
                                  zip(counts, child)))
    else:
        parts = [sampler.draw(c, g) for c, g in zip(counts, child)]
    return [cfg for part in parts for cfg in part]


def bootstrap_se(values, stat, rng: np.random.Generator,
                 n_boot: int = _DEFAULT_BOOT) -> float:
    """Bootstrap standard error of ``stat`` over resampled value arrays."""
    values = np.asarray(values, dtype=float)
    n = len(values)
    idx = rng.integers(0, n, size=(n_boot, n))
    stats = np.array([stat(values[row]) for row in idx], dtype=float)
    return float(np.std(stats, ddof=1))


def estimate_mean(sampler, F, n_samples: int, rng: np.random.Generator,
                  replicas: int = 1, threads: int = 1) -> tuple[float, float]:
    if n_samples < 2:
        raise ValueError("need at least two samples")
    configs = draw_samples(sampler, n_samples, rng, replicas, threads)
    values = np.array([F(c) for c in configs], dtype=float)
    return float(values.mean()), float(values.std(ddof=1) / math.sqrt(n_samples))


@dataclass
class MgfEstimate:
    """Centered log-MGF over a lambda grid with bootstrap errors."""

    lambda_grid: np.ndarray
    centered_log_mgf: np.ndarray
    std_errors: np.ndarray
    n_samples: int
    overflow: np.ndarray

    def __post_init__(self):
        grid = np.asarray(self.lambda_grid, dtype=float)
        if len(grid) > 1 and np.any(np.diff(grid) <= 0):
            raise ValueError("lambda grid must be strictly increasing")


def centered_log_mgf(values: np.ndarray, lam: float) -> float:
    """log mean exp(lam * (v - mean v)), computed in log space."""
    values = np.asarray(values, dtype=float)
    centered = lam * (values - values.mean())
    return float(logsumexp(centered) - math.log(len(values)))


def estimate_log_mgf(sampler, F, lambda_grid, n_samples: int,
                     rng: np.random.Generator, n_boot: int = _DEFAULT_BOOT,
                     replicas: int = 1, threads: int = 1,
                     values: np.ndarray | None = None) -> MgfEstimate:
    """Centered log-MGF of F under the sampler, per lambda.

    Values may be shared via ``values`` (already evaluated F samples); the
    overflow flag marks lambdas where a naive exp would overflow (the
    log-space estimate itself stays finite).
    """
    grid = np.asarray(lambda_grid, dtype=float)
    if values is None:
        configs = draw_samples(sampler, n_samples, rng, replicas, threads)
        values = np.array([F(c) for c in configs], dtype=float)
    values = np.asarray(values, dtype=float)
    n = len(values)
    spread = float(np.max(np.abs(values - values.mean()))) if n else 0.0
    overflow = np.array([abs(l) * spread > 700.0 for l in grid])
    estimates = np.array([centered_log_mgf(values, l) for l in grid])
    idx = rng.integers(0, n, size=(n_boot, n))
    boots = values[idx]
    boot_centered = boots - boots.mean(axis=1, keepdims=True)
    ses = np.empty(len(grid))
    for i, lam in enumerate(grid):
        stats = logsumexp(lam * boot_centered, axis=1) - math.log(n)
        ses[i] = np.std(stats, ddof=1)
    return MgfEstimate(grid, estimates, ses, n, overflow)


def herbst_bound(c_nu: float, alpha_sq: float, beta: float,
                 lam: float) -> float:
    """Centered MGF majorant c alpha^2 lam (e^{beta lam} - 1)/beta."""
    if lam < 0:
        raise ValueError("lambda must be nonnegative")
    if beta < 1e-8:
        return c_nu * alpha_sq * lam * lam
    return c_nu * alpha_sq * lam * math.expm1(beta * lam) / beta


def _phi(values: np.ndarray) -> np.ndarray:
    return values * np.log(values)


def _entropy(values: np.ndarray) -> float:
    mean = values.mean()
    return float(_phi(values).mean() - mean * math.log(mean))


def _check_positive(values: np.ndarray, what: str) -> None:
    bad = int(np.count_nonzero(values <= 0))
    if bad:
        raise ValueError(f"{what} must be positive on every sample "
                         f"({bad} of {len(values)} nonpositive)")


def estimate_entropy(sampler, F, n_samples: int,
                     rng: np.random.Generator, replicas: int = 1,
                     threads: int = 1) -> float:
    """mean Phi(F) - Phi(mean F) with Phi(x) = x log x; requires F > 0."""
    configs = draw_samples(sampler, n_samples, rng, replicas, threads)
    values = np.array([F(c) for c in configs], dtype=float)
    _check_positive(values, "F")
    return _entropy(values)


class LocalFunction:
    """Positive local functional with a declared gradient-support box.

    ``support`` bounds where the add-one gradient can be nonzero; the
    Dirichlet quadrature never looks outside it.  Subclasses may vectorize
    ``value_added``/``log_value_added`` over insertion points.
    """

    support: Box

    def value(self, config: PointConfiguration) -> float:
        raise NotImplementedError

    def log_value(self, config: PointConfiguration) -> float:
        return math.log(self.value(config))

    def value_added(self, config: PointConfiguration, X) -> np.ndarray:
        return np.array([self.value(config.with_point(x)) for x in X])

    def log_value_added(self, config: PointConfiguration, X) -> np.ndarray:
        return np.log(self.value_added(config, X))


class CountExpFunction(LocalFunction):
    """F = exp(lam * N_A) for a box region A."""

    def __init__(self, lam: float, region: Box):
        self.lam = float(lam)
        self.support = region
        self.label = f"exp({lam:g}*N_A)"

    def value(self, config):
        return math.exp(self.lam * config.count_in(self.support))

    def log_value(self, config):
        return self.lam * config.count_in(self.support)

    def value_added(self, config, X):
        return self.value(config) * np.exp(self.lam * self._indicator(X))

    def log_value_added(self, config, X):
        return self.log_value(config) + self.lam * self._indicator(X)

    def _indicator(self, X):
        return self.support.mask(np.atleast_2d(np.asarray(X, dtype=float))).astype(float)


def _support_grid(region: Box, spacing: float) -> tuple[np.ndarray, float]:
    lo = np.asarray(region.lower, dtype=float)
    hi = np.asarray(region.upper, dtype=float)
    axes = []
    weight = 1.0
    for a in range(len(lo)):
        m = max(1, round((hi[a] - lo[a]) / spacing))
        delta = (hi[a] - lo[a]) / m
        axes.append(lo[a] + (np.arange(m) + 0.5) * delta)
        weight *= delta
    mesh = np.stack(np.meshgrid(*axes, indexing="ij"), axis=-1).reshape(-1, len(lo))
    return mesh, weight


def dirichlet_samples(sampler, interaction: Interaction | None,
                      fn: LocalFunction, quad_spacing: float,
                      n_samples: int, rng: np.random.Generator,
                      configs=None) -> np.ndarray:
    """Per-sample x-quadratures of rate(x) (D_x F)(D_x log F).

    ``interaction`` None means unit birth rate; otherwise the rate is the
    interaction's Papangelou intensity at each quadrature node.
    """
    if configs is None:
        configs = draw_samples(sampler, n_samples, rng)
    X, weight = _support_grid(fn.support, quad_spacing)
    out = np.empty(len(configs))
    for i, cfg in enumerate(configs):
        f0 = fn.value(cfg)
        logf0 = fn.log_value(cfg)
        fx = fn.value_added(cfg, X)
        logfx = fn.log_value_added(cfg, X)
        if f0 <= 0 or np.any(fx <= 0):
            raise ValueError("F must be positive (Dirichlet form integrand)")
        integrand = (fx - f0) * (logfx - logf0)
        if interaction is not None:
            integrand = integrand * birth_rates_batch(interaction, cfg, X)
        out[i] = weight * float(np.sum(integrand))
    return out


def estimate_dirichlet(sampler, interaction: Interaction | None,
                       fn: LocalFunction, quad_spacing: float,
                       n_samples: int, rng: np.random.Generator) -> float:
    """Monte Carlo Dirichlet form E[int rate (D_x F)(D_x log F) dx]."""
    return float(dirichlet_samples(sampler, interaction, fn, quad_spacing,
                                   n_samples, rng).mean())


@dataclass
class EntropyReport:
    """Entropy/Dirichlet pair for one probe functional."""

    label: str
    entropy: float
    dirichlet: float
    ratio: float | None
    entropy_se: float
    dirichlet_se: float
    ratio_se: float
    n_samples: int
    defined: bool = True


def mlsi_ratio_probe(sampler, interaction: Interaction | None, family,
                     n_samples: int, rng: np.random.Generator,
                     quad_spacing: float = 0.125,
                     n_boot: int = _DEFAULT_BOOT) -> list[EntropyReport]:
    """Entropy-to-Dirichlet ratios over a family of positive local F.

    The max ratio is an empirical lower bound for the best admissible
    inequality constant; a finite family can certify lower bounds only,
    never the inequality itself.  Constant functionals are reported as
    undefined (0/0) and excluded from the max.
    """
    configs = draw_samples(sampler, n_samples, rng)
    reports = []
    for fn in family:
        values = np.array([fn.value(c) for c in configs], dtype=float)
        _check_positive(values, "F")
        dir_vals = dirichlet_samples(sampler, interaction, fn, quad_spacing,
                                     n_samples, rng, configs=configs)
        if float(values.std()) == 0.0:
            reports.append(EntropyReport(getattr(fn, "label", "F"), 0.0, 0.0,
                                         None, 0.0, 0.0, 0.0,
                                         len(configs), defined=False))
            continue
        ent = _entropy(values)
        dirich = float(dir_vals.mean())
        ratio = math.inf if dirich == 0.0 else ent / dirich
        idx = rng.integers(0, len(values), size=(n_boot, len(values)))
        ent_b = np.array([_entropy(values[row]) for row in idx])
        dir_b = dir_vals[idx].mean(axis=1)
        with np.errstate(divide="ignore", invalid="ignore"):
            ratio_b = ent_b / dir_b
        ratio_b = ratio_b[np.isfinite(ratio_b)]
        reports.append(EntropyReport(
            getattr(fn, "label", "F"), ent, dirich, ratio,
            float(np.std(ent_b, ddof=1)), float(np.std(dir_b, ddof=1)),
            float(np.std(ratio_b, ddof=1)) if len(ratio_b) > 1 else math.inf,
            len(configs)))
    return reports


def max_mlsi_ratio(reports: list[EntropyReport]) -> EntropyReport:
    defined = [r for r in reports if r.defined and r.ratio is not None]
    if not defined:
        raise ValueError("no defined ratios in the probe family")
    return max(defined, key=lambda r: r.ratio)


def gnz_residual(sampler, interaction: Interaction | None, u, region: Box,
                 n_samples: int, rng: np.random.Generator,
                 n_mc_x: int = 4) -> tuple[float, float]:
    """E[sum_{x in eta} u(x, eta - x)] - E[int b(x, eta) u(x, eta) dx].

    The x-integral over the (compact) support region is estimated with
    fresh uniform points per sample, which keeps the paired difference
    unbiased; the residual vanishes in law under the matching Gibbs sampler.
    """
    from .interactions import NoInteraction

    inter = interaction if interaction is not None else NoInteraction()
    configs = draw_samples(sampler, n_samples, rng)
    lo = np.asarray(region.lower, dtype=float)
    hi = np.asarray(region.upper, dtype=float)
    vol = region.volume()
    diffs = np.empty(len(configs))
    for i, cfg in enumerate(configs):
        total = 0.0
        if len(cfg):
            inside = np.nonzero(region.mask(cfg.points))[0]
            for j in inside:
                total += float(u(cfg.points[j], cfg.without_point(int(j))))
        X = rng.uniform(lo, hi, size=(n_mc_x, len(lo)))
        rates = birth_rates_batch(inter, cfg, X)
        integral = vol * float(np.mean(
            [rates[k] * u(X[k], cfg) for k in range(n_mc_x)]))
        diffs[i] = total - integral
    return float(diffs.mean()), float(diffs.std(ddof=1) / math.sqrt(len(diffs)))


def write_estimates_csv(path, rows, append: bool = False) -> None:
    """Append estimator rows to the shared CSV schema."""
    path = Path(path)
    new = not (append and path.exists())
    with path.open("a" if append else "w", newline="") as fh:
        writer = csv.writer(fh)
        if new:
            writer.writerow(ESTIMATE_COLUMNS)
        for row in rows:
            writer.writerow([
                SCHEMA_VERSION,
                row["quantity"],
                "" if row.get("lambda") is None else repr(float(row["lambda"])),
                repr(float(row["value"])),
                repr(float(row.get("std_error", 0.0))),
                int(row.get("n_samples", 0)),
                int(row.get("seed", 0)),
            ])
