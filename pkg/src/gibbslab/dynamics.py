"""Samplers and stochastic dynamics over point configurations.

Provides the Poisson reference sampler, the thinned continuous-time
birth-death chain, a discrete-time birth-death Metropolis chain targeting
exp(-H) against the intensity-one Poisson reference, and conditioned
finite-volume Gibbs sampling with frozen boundary points.

Chains run in whichever kernel backend is active; identical (seed, stream)
pairs reproduce trajectories byte for byte.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from . import core
from .geometry import FREE, PERIODIC, Box, PointConfiguration, Window
from .interactions import Interaction, birth_rate_upper_bound

BIRTH = "birth"
DEATH = "death"
_KINDS = (BIRTH, DEATH)


def make_rng(seed: int, stream: int = 0) -> np.random.Generator:
    """Deterministic generator for (seed, stream); streams are independent."""
    return np.random.Generator(np.random.PCG64(np.random.SeedSequence((int(seed), int(stream)))))


def sample_poisson(window: Window, intensity: float,
                   rng: np.random.Generator) -> PointConfiguration:
    """Poisson process of the given intensity restricted to the window."""
    if intensity <= 0:
        raise ValueError("intensity must be positive")
    mean = intensity * window.volume()
    while True:
        n = int(rng.poisson(mean))
        pts = rng.uniform(-window.half_side, window.half_side, (n, window.dim))
        if n < 2 or np.unique(pts, axis=0).shape[0] == n:
            return PointConfiguration(pts, window)
        # exact collision: resample (probability zero in theory)


@dataclass(frozen=True)
class TrajectoryEvent:
    time: float
    kind: str
    location: tuple

    def __post_init__(self):
        if self.kind not in _KINDS:
            raise ValueError(f"unknown event kind {self.kind!r}")


class Trajectory:
    """Event log of a birth-death chain, replayable from its initial state."""

    def __init__(self, initial: PointConfiguration, times, kinds, locations,
                 t_end: float):
        self.initial = initial
        self.times = np.asarray(times, dtype=float)
        self.kinds = np.asarray(kinds, dtype=np.int8)
        self.locations = np.asarray(locations, dtype=float).reshape(
            len(self.times), initial.dim)
        self.t_end = float(t_end)
        if len(self.times) and np.any(np.diff(self.times) <= 0):
            raise ValueError("event times must be strictly increasing")

    def __len__(self) -> int:
        return len(self.times)

    @property
    def events(self) -> list[TrajectoryEvent]:
        return [
            TrajectoryEvent(float(t), BIRTH if k == 0 else DEATH, tuple(x))
            for t, k, x in zip(self.times, self.kinds, self.locations)
        ]

    def state_at(self, t: float) -> PointConfiguration:
        """Configuration after all events with time <= t."""
        pts = [tuple(p) for p in self.initial.points]
        for et, kind, loc in zip(self.times, self.kinds, self.locations):
            if et > t:
                break
            loc = tuple(loc)
            if kind == 0:
                pts.append(loc)
            else:
                pts.remove(loc)  # raises if the death has no matching point
        arr = np.array(pts, dtype=float).reshape(len(pts), self.initial.dim)
        return PointConfiguration(arr, self.initial.window)

    def count_series(self, sample_times, region=None) -> np.ndarray:
        """Counts (in a region or the whole window) at increasing times."""
        sample_times = np.asarray(sample_times, dtype=float)
        live = [tuple(p) for p in self.initial.points]

        def count():
            if region is None:
                return len(live)
            if not live:
                return 0
            return int(np.count_nonzero(region.mask(np.array(live))))

        out = np.zeros(len(sample_times), dtype=np.int64)
        pos = 0
        for et, kind, loc in zip(self.times, self.kinds, self.locations):
            while pos < len(sample_times) and sample_times[pos] < et:
                out[pos] = count()
                pos += 1
            if kind == 0:
                live.append(tuple(loc))
            else:
                live.remove(tuple(loc))
        while pos < len(sample_times):
            out[pos] = count()
            pos += 1
        return out

    def validate(self) -> bool:
        """Replay all events; False if any death misses a live point."""
        try:
            self.state_at(self.t_end)
        except ValueError:
            return False
        return True


def save_trajectory_jsonl(traj: Trajectory, path) -> None:
    with Path(path).open("w") as fh:
        for ev in traj.events:
            fh.write(json.dumps({"t": ev.time, "kind": ev.kind,
                                 "x": list(ev.location)}) + "\n")


def load_trajectory_jsonl(path, initial: PointConfiguration,
                          t_end: float) -> Trajectory:
    times, kinds, locs = [], [], []
    for line in Path(path).read_text().splitlines():
        rec = json.loads(line)
        times.append(rec["t"])
        kinds.append(0 if rec["kind"] == BIRTH else 1)
        locs.append(rec["x"])
    return Trajectory(initial, times, kinds,
                      np.array(locs, dtype=float).reshape(len(times), initial.dim),
                      t_end)


def _boundary_points(boundary, dim: int) -> np.ndarray:
    if boundary is None:
        return np.zeros((0, dim))
    if isinstance(boundary, PointConfiguration):
        return boundary.points
    return np.asarray(boundary, dtype=float).reshape(-1, dim)


def _sampler_state(initial: PointConfiguration, interaction: Interaction,
                   boundary=None) -> core.ChainState:
    """Chain state with frozen boundary points ahead of the live points."""
    w = initial.window
    cell = interaction.range if interaction.range > 0 else None
    if w.boundary == PERIODIC:
        if boundary is not None:
            raise ValueError("boundary configuration requires a free window")
        return core.make_state(
            initial.points, d=w.dim, periodic=True,
            grid_lo=-w.half_side, grid_side=w.side,
            cell_size=cell or w.side / 8,
            box_lo=-w.half_side, box_hi=w.half_side)
    pad = max(interaction.range, 1e-9)
    bpts = _boundary_points(boundary, w.dim)
    if bpts.size:
        inf_norm = np.max(np.abs(bpts), axis=1)
        if np.any(inf_norm <= w.half_side):
            raise ValueError("boundary points must lie outside the window")
        if np.any(inf_norm > w.half_side + pad):
            raise ValueError("boundary points beyond the interaction range")
    pts = np.vstack([bpts, initial.points]) if bpts.size else initial.points
    return core.make_state(
        pts, d=w.dim, periodic=False,
        grid_lo=-(w.half_side + pad), grid_side=2.0 * (w.half_side + pad),
        cell_size=cell or w.side / 8,
        box_lo=-w.half_side, box_hi=w.half_side,
        n_frozen=bpts.shape[0])


def _drive_mh(state, desc, n_steps, rng):
    backend = core.active_backend()
    done = births = deaths = 0
    while done < n_steps:
        steps, b, d = backend.mh_run(state, desc, n_steps - done, rng)
        done += steps
        births += b
        deaths += d
        if done < n_steps:
            state.grow(state.n + 2)
    return births, deaths


def run_mh(initial: PointConfiguration, interaction: Interaction,
           n_steps: int, rng: np.random.Generator,
           boundary=None) -> PointConfiguration:
    """Discrete-time birth-death Metropolis chain; returns the final state.

    Birth proposals are uniform in the window and accepted with
    min(1, volume * b(x, eta) / (N + 1)); deaths pick a uniform point and
    accept with min(1, N / (volume * b(y, eta - y))).  The invariant density
    is exp(-H) against the intensity-one Poisson reference.
    """
    state = _sampler_state(initial, interaction, boundary)
    desc = interaction._lower(state)
    _drive_mh(state, desc, int(n_steps), rng)
    return PointConfiguration(state.live_points(), initial.window)


def mh_acceptance_factors(interaction: Interaction,
                          config: PointConfiguration, x) -> tuple[float, float]:
    """(birth, death) acceptance factors for inserting x / removing it again."""
    b = interaction.birth_rate(x, config)
    vol = config.window.volume()
    n = len(config)
    birth = vol * b / (n + 1)
    death = math.inf if birth == 0.0 else 1.0 / birth
    return birth, death


def run_ctmc(initial: PointConfiguration, interaction: Interaction,
             t_max: float, rng: np.random.Generator) -> Trajectory:
    """Exact thinned simulation of the birth-death chain up to t_max.

    Candidate births arrive at rate b* volume and thin with probability
    b(x, eta)/b*; every point dies at unit rate.  Interactions with an
    infinite rate bound are rejected (use run_mh for those).
    """
    state, desc, arrays = _ctmc_setup(initial, interaction, t_max)
    ev_t, ev_kind, ev_xy = arrays
    backend = core.active_backend()
    t, n_ev = 0.0, 0
    empty = np.zeros(0)
    while True:
        t, n_ev, _, done = backend.ctmc_run(
            state, desc, t, float(t_max), rng,
            ev_t, ev_kind, ev_xy, n_ev,
            empty, np.zeros(0, dtype=np.int64), 0,
            np.full(initial.dim, -initial.window.half_side),
            np.full(initial.dim, initial.window.half_side),
            True)
        if done:
            break
        if state.n + 1 > state.capacity:
            state.grow(state.n + 2)
        if n_ev + 1 > len(ev_t):
            ev_t, ev_kind, ev_xy = _grow_events(ev_t, ev_kind, ev_xy)
    return Trajectory(initial, ev_t[:n_ev].copy(), ev_kind[:n_ev].copy(),
                      ev_xy[:n_ev].copy(), t_max)


def ctmc_count_series(initial: PointConfiguration, interaction: Interaction,
                      sample_times, rng: np.random.Generator,
                      region: Box | None = None) -> np.ndarray:
    """Counts at the given times along one chain, without storing events."""
    sample_times = np.ascontiguousarray(sample_times, dtype=float)
    if len(sample_times) and np.any(np.diff(sample_times) < 0):
        raise ValueError("sample times must be sorted")
    t_max = float(sample_times[-1]) if len(sample_times) else 0.0
    state, desc, _ = _ctmc_setup(initial, interaction, t_max, with_events=False)
    counts = np.zeros(len(sample_times), dtype=np.int64)
    if region is None:
        lo = np.full(initial.dim, -initial.window.half_side)
        hi = np.full(initial.dim, initial.window.half_side)
    else:
        lo = np.asarray(region.lower, dtype=float)
        hi = np.asarray(region.upper, dtype=float)
    backend = core.active_backend()
    t, pos = 0.0, 0
    none_t = np.zeros(0)
    none_k = np.zeros(0, dtype=np.int8)
    none_xy = np.zeros((0, initial.dim))
    while True:
        t, _, pos, done = backend.ctmc_run(
            state, desc, t, t_max, rng,
            none_t, none_k, none_xy, 0,
            sample_times, counts, pos, lo, hi, False)
        if done:
            return counts
        state.grow(state.n + 2)


def _ctmc_setup(initial, interaction, t_max, with_events=True):
    bstar = birth_rate_upper_bound(interaction, initial.dim)
    if not math.isfinite(bstar):
        raise ValueError("infinite birth-rate bound: thinning is impossible, "
                         "use run_mh instead")
    state = _sampler_state(initial, interaction)
    desc = interaction._lower(state)
    if bstar * state.volume * max(t_max, 1.0) > 2e7:
        raise ValueError("birth-rate bound too large for thinning at this "
                         "volume; use run_mh instead")
    arrays = None
    if with_events:
        rate0 = bstar * state.volume + state.n_live
        cap = int(rate0 * t_max * 1.5) + 64
        arrays = (np.zeros(cap), np.zeros(cap, dtype=np.int8),
                  np.zeros((cap, initial.dim)))
    return state, desc, arrays


def _grow_events(ev_t, ev_kind, ev_xy):
    cap = 2 * len(ev_t)
    t2 = np.zeros(cap)
    k2 = np.zeros(cap, dtype=np.int8)
    x2 = np.zeros((cap, ev_xy.shape[1]))
    t2[: len(ev_t)] = ev_t
    k2[: len(ev_t)] = ev_kind
    x2[: len(ev_t)] = ev_xy
    return t2, k2, x2


def sample_gibbs(window: Window, interaction: Interaction, boundary,
                 burn_in_steps: int, rng: np.random.Generator,
                 init: str = "poisson") -> PointConfiguration:
    """Finite-volume Gibbs state via the Metropolis chain.

    ``boundary`` is either the string "periodic" (torus window) or a set of
    frozen points outside a free window but within interaction range of it;
    insertion costs are evaluated against interior plus boundary points.
    ``init`` picks the starting state: "poisson" (intensity one) or "empty".
    """
    if init == "poisson":
        start = sample_poisson(window, 1.0, rng)
    elif init == "empty":
        start = PointConfiguration(np.zeros((0, window.dim)), window)
    else:
        raise ValueError(f"unknown init {init!r}")
    if isinstance(boundary, str):
        if boundary != PERIODIC:
            raise ValueError("string boundary must be 'periodic'")
        if window.boundary != PERIODIC:
            raise ValueError("periodic sampling requires a periodic window")
        boundary = None
    elif window.boundary != FREE:
        raise ValueError("boundary points require a free window")
    return run_mh(start, interaction, burn_in_steps, rng, boundary=boundary)


def detailed_balance_residual(interaction: Interaction,
                              config: PointConfiguration, x) -> float:
    """b(x, eta) e^{-H(eta)} - e^{-H(eta + x)}; zero by convention when the
    insertion is excluded (both sides vanish)."""
    h_now = interaction.total_energy(config)
    b = interaction.birth_rate(x, config)
    h_plus = interaction.total_energy(config.with_point(x))
    if h_plus == math.inf and b == 0.0:
        return 0.0
    lhs = b * (0.0 if h_now == math.inf else math.exp(-h_now))
    rhs = 0.0 if h_plus == math.inf else math.exp(-h_plus)
    return lhs - rhs


class PoissonSampler:
    """Draws independent Poisson configurations; the reference measure."""

    def __init__(self, window: Window, intensity: float = 1.0):
        self.window = window
        self.intensity = float(intensity)

    def draw(self, n: int, rng: np.random.Generator) -> list[PointConfiguration]:
        return [sample_poisson(self.window, self.intensity, rng)
                for _ in range(n)]


class GibbsSampler:
    """Equilibrium samples from one Metropolis chain (burn-in, then gap)."""

    def __init__(self, window: Window, interaction: Interaction,
                 burn_in: int = 100_000, gap: int = 1_000,
                 boundary=None, init: str = "poisson"):
        self.window = window
        self.interaction = interaction
        self.burn_in = int(burn_in)
        self.gap = int(gap)
        self.boundary = boundary
        self.init = init

    def draw(self, n: int, rng: np.random.Generator) -> list[PointConfiguration]:
        if self.init == "poisson":
            start = sample_poisson(self.window, 1.0, rng)
        else:
            start = PointConfiguration(np.zeros((0, self.window.dim)),
                                       self.window)
        state = _sampler_state(start, self.interaction, self.boundary)
        desc = self.interaction._lower(state)
        _drive_mh(state, desc, self.burn_in, rng)
        out = []
        for _ in range(n):
            _drive_mh(state, desc, self.gap, rng)
            out.append(PointConfiguration(state.live_points(), self.window))
        return out
