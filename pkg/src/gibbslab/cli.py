"""Batch experiment front door.

One experiment per invocation:

    gibbslab sample      --config cfg.json --out outdir [--seed N]
    gibbslab mgf-check   --config cfg.json --out outdir
    gibbslab dv-bound    --config cfg.json --out outdir
    gibbslab decay       --config cfg.json --out outdir
    gibbslab phase-scan  --config cfg.json --out outdir [--replicas K] [--threads K]
    gibbslab gnz-check   --config cfg.json --out outdir

Every run writes ``config.resolved.json`` (defaults materialized, overrides
applied) next to its outputs; reruns with the same resolved config are byte
identical.  Output schemas (all carry schema_version = 1):

* mgf_check.csv:   schema_version,quantity,lambda,value,std_error,n_samples,seed
* decay.csv:       schema_version,t,density,density_se,rate,rate_se,rate_analytic,envelope,n_replicas,seed
* phase_scan.csv:  schema_version,gamma,boundary,replica,interior_density,n_samples,seed
* gnz_check.csv:   schema_version,case,residual,std_error,n_samples,seed
* dv_report.json:  separation/analytic/empirical report object
* manifest.json:   snapshot file list for ``sample``
"""

from __future__ import annotations

import argparse
import csv
import json
import math
import sys
from concurrent.futures import ThreadPoolExecutor
from pathlib import Path

import numpy as np

from . import core
from .dynamics import (
    GibbsSampler,
    PoissonSampler,
    make_rng,
    sample_gibbs,
    sample_poisson,
)
from .entropy_gap import (
    analytic_report,
    dv_bound_empirical,
    ou_decay_empirical,
    separating_observable,
)
from .estimators import (
    SCHEMA_VERSION,
    estimate_log_mgf,
    gnz_residual,
    herbst_bound,
    write_estimates_csv,
)
from .geometry import Box, PointConfiguration, Window, save_snapshot
from .interactions import AreaInteraction, StraussPotential, from_spec
from .observables import (
    SpaceAverageSpec,
    alpha_sq,
    beta_constant,
    kernel_from_spec,
    space_average_batch,
)


class ConfigError(ValueError):
    pass


def _require(cfg: dict, key: str, path: str = ""):
    if key not in cfg:
        raise ConfigError(f"missing config key {path}{key}")
    return cfg[key]


def _window(cfg: dict) -> Window:
    spec = _require(cfg, "window")
    try:
        return Window(float(_require(spec, "half_side", "window.")),
                      int(spec.get("dim", 2)),
                      spec.get("boundary", "periodic"))
    except ValueError as exc:
        raise ConfigError(f"window: {exc}") from exc


def _lambda_grid(cfg: dict) -> np.ndarray:
    spec = cfg.get("lambda_grid", {"start": 0.0, "stop": 2.0, "step": 0.1})
    if isinstance(spec, list):
        grid = np.asarray(spec, dtype=float)
    else:
        grid = np.arange(spec["start"], spec["stop"] + 0.5 * spec["step"],
                         spec["step"])
    if len(grid) > 1 and np.any(np.diff(grid) <= 0):
        raise ConfigError("lambda_grid must be strictly increasing")
    return grid


def _echo(cfg: dict, out: Path) -> None:
    out.mkdir(parents=True, exist_ok=True)
    (out / "config.resolved.json").write_text(
        json.dumps(cfg, indent=2, sort_keys=True) + "\n")


def _write_csv(path: Path, columns, rows) -> None:
    with path.open("w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(columns)
        for row in rows:
            writer.writerow(row)


def _fmt(v) -> str:
    return repr(float(v))


def cmd_sample(cfg: dict, out: Path) -> None:
    window = _window(cfg)
    inter_spec = cfg.setdefault("interaction", {"kind": "none"})
    n_snapshots = int(cfg.setdefault("n_snapshots", 10))
    seed = int(cfg.setdefault("seed", 0))
    intensity = float(cfg.setdefault("intensity", 1.0))
    burn_in = int(cfg.setdefault("burn_in", 100_000))
    _echo(cfg, out)
    files = []
    if inter_spec.get("kind", "none") == "none":
        rng = make_rng(seed)
        for i in range(n_snapshots):
            config = sample_poisson(window, intensity, rng)
            name = f"snapshot_{i:04d}.txt"
            save_snapshot(config, out / name)
            files.append(name)
    else:
        interaction = from_spec(inter_spec)
        for i in range(n_snapshots):
            rng = make_rng(seed, stream=i)
            config = sample_gibbs(window, interaction, "periodic", burn_in, rng)
            name = f"snapshot_{i:04d}.txt"
            save_snapshot(config, out / name)
            files.append(name)
    (out / "manifest.json").write_text(json.dumps(
        {"schema_version": SCHEMA_VERSION, "seed": seed, "files": files},
        indent=2, sort_keys=True) + "\n")


def cmd_mgf_check(cfg: dict, out: Path) -> None:
    window = _window(cfg)
    kernel = kernel_from_spec(_require(cfg, "kernel"), window.dim)
    n = float(cfg.setdefault("n", 2.0))
    grid = _lambda_grid(cfg)
    cfg.setdefault("lambda_grid", [float(v) for v in grid])
    n_samples = int(cfg.setdefault("n_samples", 10_000))
    seed = int(cfg.setdefault("seed", 0))
    c_nu = float(cfg.setdefault("c_nu", 1.0))
    intensity = float(cfg.setdefault("intensity", 1.0))
    _echo(cfg, out)
    spec = SpaceAverageSpec(kernel, n)
    beta = beta_constant(kernel)
    a_sq = alpha_sq(kernel, n)
    sampler = PoissonSampler(window, intensity)
    rng = make_rng(seed)
    configs = sampler.draw(n_samples, rng)
    values = space_average_batch(spec, configs)
    est = estimate_log_mgf(None, None, grid, n_samples, rng, values=values)
    rows = [
        {"quantity": "beta", "lambda": None, "value": beta,
         "n_samples": n_samples, "seed": seed},
        {"quantity": "alpha_sq", "lambda": None, "value": a_sq,
         "n_samples": n_samples, "seed": seed},
    ]
    for i, lam in enumerate(grid):
        emp = est.centered_log_mgf[i]
        se = est.std_errors[i]
        bound = herbst_bound(c_nu, a_sq, beta, float(lam))
        rows += [
            {"quantity": "log_mgf_empirical", "lambda": lam, "value": emp,
             "std_error": se, "n_samples": n_samples, "seed": seed},
            {"quantity": "herbst_bound", "lambda": lam, "value": bound,
             "n_samples": n_samples, "seed": seed},
            {"quantity": "margin", "lambda": lam, "value": bound - emp,
             "std_error": se, "n_samples": n_samples, "seed": seed},
            {"quantity": "log_mgf_overflow_flag", "lambda": lam,
             "value": float(est.overflow[i]), "n_samples": n_samples,
             "seed": seed},
        ]
    write_estimates_csv(out / "mgf_check.csv", rows)


def _dv_sampler(spec: dict, window: Window) -> PoissonSampler | GibbsSampler:
    if "intensity" in spec:
        return PoissonSampler(window, float(spec["intensity"]))
    interaction = from_spec(_require(spec, "interaction", "sampler."))
    return GibbsSampler(window, interaction,
                        burn_in=int(spec.get("burn_in", 100_000)),
                        gap=int(spec.get("gap", 1_000)))


def cmd_dv_bound(cfg: dict, out: Path) -> None:
    window = _window(cfg)
    mode = cfg.setdefault("mode", "both")
    if mode not in ("both", "analytic", "empirical"):
        raise ConfigError("mode must be both|analytic|empirical")
    if mode in ("both", "analytic") and "c_nu" not in cfg:
        raise ConfigError("analytic mode needs c_nu")
    family_spec = cfg.get("kernel_family") or [_require(cfg, "kernel")]
    cfg.setdefault("kernel_family", family_spec)
    n = float(cfg.setdefault("n", 2.0))
    grid = _lambda_grid(cfg)
    cfg.setdefault("lambda_grid", [float(v) for v in grid])
    n_samples = int(cfg.setdefault("n_samples", 10_000))
    n_sep = int(cfg.setdefault("n_separation_samples", max(n_samples // 4, 500)))
    seed = int(cfg.setdefault("seed", 0))
    _echo(cfg, out)
    family = [kernel_from_spec(s, window.dim) for s in family_spec]
    mu = _dv_sampler(_require(cfg, "mu"), window)
    nu = _dv_sampler(_require(cfg, "nu"), window)
    sep = separating_observable(mu, nu, family, n_sep, make_rng(seed, 1))
    report = {
        "schema_version": SCHEMA_VERSION,
        "seed": seed,
        "separation": {
            "found": sep.found,
            "kernel": sep.kernel.label if sep.kernel else None,
            "sign": sep.kernel.sign if sep.kernel else 0,
            "rho": sep.rho,
            "std_error": sep.std_error,
        },
        "analytic": None,
        "empirical": None,
    }
    if sep.found:
        kernel = sep.kernel
        if mode in ("both", "empirical"):
            emp = dv_bound_empirical(mu, nu, kernel, n, grid, n_samples,
                                     make_rng(seed, 2), seed=seed)
            report["empirical"] = emp.__dict__ | {
                "lambda_grid": list(map(float, emp.lambda_grid))}
        if mode in ("both", "analytic"):
            beta = beta_constant(kernel)
            ana = analytic_report(sep.rho, sep.std_error, beta,
                                  float(cfg["c_nu"]), kernel.label, n,
                                  kernel.support_radius, seed=seed,
                                  n_samples=n_sep)
            report["analytic"] = ana.__dict__
    (out / "dv_report.json").write_text(
        json.dumps(report, indent=2, sort_keys=True, default=float) + "\n")


def cmd_decay(cfg: dict, out: Path) -> None:
    window = _window(cfg)
    a0 = float(cfg.setdefault("a0", 2.0))
    t_grid = cfg.setdefault("t_grid", [0.5, 1.0, 2.0])
    if any(b <= a for a, b in zip(t_grid, t_grid[1:])):
        raise ConfigError("t_grid must be strictly increasing")
    n_replicas = int(cfg.setdefault("n_replicas", 200))
    seed = int(cfg.setdefault("seed", 0))
    _echo(cfg, out)
    table = ou_decay_empirical(a0, window, t_grid, n_replicas,
                               make_rng(seed), seed=seed)
    rows = [
        [SCHEMA_VERSION, _fmt(table.t[i]), _fmt(table.density[i]),
         _fmt(table.density_se[i]), _fmt(table.rate[i]), _fmt(table.rate_se[i]),
         _fmt(table.rate_analytic[i]), _fmt(table.envelope[i]),
         n_replicas, seed]
        for i in range(len(table.t))
    ]
    _write_csv(out / "decay.csv",
               ("schema_version", "t", "density", "density_se", "rate",
                "rate_se", "rate_analytic", "envelope", "n_replicas", "seed"),
               rows)


def _dense_shell(window: Window, depth: float, spacing: float) -> np.ndarray:
    """Grid points in the frame window < |p|_inf <= window + depth."""
    lo = -(window.half_side + depth)
    count = math.ceil(2.0 * (window.half_side + depth) / spacing)
    axis = lo + (np.arange(count) + 0.5) * (2.0 * (window.half_side + depth) / count)
    mesh = np.stack(np.meshgrid(*([axis] * window.dim), indexing="ij"),
                    axis=-1).reshape(-1, window.dim)
    norm = np.max(np.abs(mesh), axis=1)
    return mesh[(norm > window.half_side)
                & (norm <= window.half_side + depth)]


def cmd_phase_scan(cfg: dict, out: Path, replicas: int | None = None,
                   threads: int = 1) -> None:
    window = _window(cfg)
    if window.boundary != "free":
        raise ConfigError("phase_scan needs a free window (boundary points)")
    radius = float(cfg.setdefault("radius", 1.0))
    gamma_grid = cfg.setdefault("gamma_grid", [0.1, 1.0, 2.0, 3.0])
    quad_resolution = int(cfg.setdefault("quad_resolution", 32))
    boundaries = cfg.setdefault("boundaries", [
        {"name": "empty", "kind": "empty"},
        {"name": "dense", "kind": "dense_shell", "spacing": 0.35},
    ])
    for b in boundaries:
        if b.get("kind") not in ("empty", "dense_shell"):
            raise ConfigError(f"unknown boundary kind {b.get('kind')!r}")
    replicas = int(replicas or cfg.get("replicas", 4))
    cfg["replicas"] = replicas
    burn_in = int(cfg.setdefault("burn_in", 40_000))
    gap = int(cfg.setdefault("gap", 500))
    n_keep = int(cfg.setdefault("n_samples", 16))
    interior = float(cfg.setdefault("interior_half_side",
                                    window.half_side / 2))
    seed = int(cfg.setdefault("seed", 0))
    _echo(cfg, out)
    interior_box = Box(tuple([-interior] * window.dim),
                       tuple([interior] * window.dim))
    interior_vol = interior_box.volume()

    jobs = []
    for gi, gamma in enumerate(gamma_grid):
        interaction = AreaInteraction(float(gamma), radius, quad_resolution)
        for bi, bspec in enumerate(boundaries):
            if bspec["kind"] == "dense_shell":
                bpts = _dense_shell(window, interaction.range,
                                    float(bspec.get("spacing", 0.35)))
                init = "poisson"
            else:
                bpts = None
                init = "empty"
            for rep in range(replicas):
                stream = (gi * len(boundaries) + bi) * replicas + rep
                jobs.append((gamma, bspec["name"], rep, interaction,
                             bpts, init, stream))

    def run(job):
        gamma, bname, rep, interaction, bpts, init, stream = job
        rng = make_rng(seed, stream)
        sampler = GibbsSampler(window, interaction, burn_in=burn_in, gap=gap,
                               boundary=bpts, init=init)
        samples = sampler.draw(n_keep, rng)
        dens = float(np.mean([c.count_in(interior_box) / interior_vol
                              for c in samples]))
        return (gamma, bname, rep, dens)

    if threads > 1:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            results = list(pool.map(run, jobs))
    else:
        results = [run(j) for j in jobs]
    rows = [[SCHEMA_VERSION, _fmt(g), b, r, _fmt(d), n_keep, seed]
            for (g, b, r, d) in results]
    _write_csv(out / "phase_scan.csv",
               ("schema_version", "gamma", "boundary", "replica",
                "interior_density", "n_samples", "seed"),
               rows)


def cmd_gnz_check(cfg: dict, out: Path) -> None:
    window = _window(cfg)
    region_spec = cfg.setdefault("region", {"lower": [0.0, 0.0],
                                            "upper": [1.0, 1.0]})
    region = Box(tuple(region_spec["lower"]), tuple(region_spec["upper"]))
    n_samples = int(cfg.setdefault("n_samples", 5_000))
    seed = int(cfg.setdefault("seed", 0))
    burn_in = int(cfg.setdefault("burn_in", 50_000))
    gap = int(cfg.setdefault("gap", 200))
    strauss_spec = cfg.setdefault("strauss", {"kind": "strauss",
                                              "strength": 0.5, "range": 1.0})
    _echo(cfg, out)
    rows = []

    poisson = PoissonSampler(window, 1.0)
    res, se = gnz_residual(poisson, None, lambda x, c: 1.0, region,
                           n_samples, make_rng(seed, 1))
    rows.append(("mecke_indicator", res, se))

    res, se = gnz_residual(poisson, None, lambda x, c: 0.0, region,
                           n_samples, make_rng(seed, 2))
    rows.append(("u_zero", res, se))

    inter = from_spec(strauss_spec)
    if not isinstance(inter, StraussPotential):
        raise ConfigError("gnz_check expects a strauss interaction block")
    sampler = GibbsSampler(window, inter, burn_in=burn_in, gap=gap)

    def u_pap(x, c):
        return inter.birth_rate(x, c)

    res, se = gnz_residual(sampler, inter, u_pap, region, n_samples,
                           make_rng(seed, 3))
    rows.append(("strauss_papangelou", res, se))

    _write_csv(out / "gnz_check.csv",
               ("schema_version", "case", "residual", "std_error",
                "n_samples", "seed"),
               [[SCHEMA_VERSION, name, _fmt(r), _fmt(s), n_samples, seed]
                for name, r, s in rows])


_COMMANDS = {
    "sample": cmd_sample,
    "mgf-check": cmd_mgf_check,
    "dv-bound": cmd_dv_bound,
    "decay": cmd_decay,
    "phase-scan": cmd_phase_scan,
    "gnz-check": cmd_gnz_check,
}


def main(argv=None) -> int:
    parser = argparse.ArgumentParser(prog="gibbslab",
                                     description=__doc__.splitlines()[0])
    parser.add_argument("command", choices=sorted(_COMMANDS))
    parser.add_argument("--config", required=True)
    parser.add_argument("--out", required=True)
    parser.add_argument("--seed", type=int, default=None)
    parser.add_argument("--replicas", type=int, default=None)
    parser.add_argument("--threads", type=int, default=1)
    args = parser.parse_args(argv)

    try:
        text = Path(args.config).read_text()
    except OSError as exc:
        print(f"cannot read config: {exc}", file=sys.stderr)
        return 2
    try:
        cfg = json.loads(text)
    except json.JSONDecodeError as exc:
        print(f"invalid JSON in {args.config}: line {exc.lineno} "
              f"column {exc.colno}: {exc.msg}", file=sys.stderr)
        return 2
    if not isinstance(cfg, dict):
        print("config must be a JSON object", file=sys.stderr)
        return 2
    declared = cfg.get("experiment")
    canonical = args.command.replace("-", "_")
    if declared is not None and declared != canonical:
        print(f"config experiment {declared!r} does not match command "
              f"{canonical!r}", file=sys.stderr)
        return 2
    cfg["experiment"] = canonical
    if args.seed is not None:
        cfg["seed"] = args.seed
    cfg["backend"] = core.backend_name()

    out = Path(args.out)
    try:
        if args.command == "phase-scan":
            cmd_phase_scan(cfg, out, replicas=args.replicas,
                           threads=args.threads)
        else:
            _COMMANDS[args.command](cfg, out)
    except (ConfigError, ValueError, KeyError) as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 2
    except Exception as exc:  # runtime failure
        print(f"run failed: {exc}", file=sys.stderr)
        return 1
    return 0


if __name__ == "__main__":
    sys.exit(main())
