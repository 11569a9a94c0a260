"""Energy functionals: total energy H, insertion cost h(x, .), birth rates.

Three families are implemented:

* pair potentials (Strauss and tabulated soft-core),
* hard-core pair potentials with a bounded finite-range tail,
* the planar area interaction gamma * |union of R-disks|.

Hard-core exclusion and coordinate collisions yield h = +inf exactly, so the
birth rate exp(-h) is exactly zero there.  The area functional is discretized
on a lattice anchored to the window frame, which makes the covered-cell count
additive: insertion costs equal total-energy differences to the last bit.

Run-config JSON blocks (field names are frozen):

    {"kind": "none"}
    {"kind": "strauss", "strength": 0.5, "range": 1.0}
    {"kind": "soft_core", "range": 1.0, "table": [...]}
    {"kind": "area", "gamma": 1.0, "radius": 1.0, "quad_resolution": 256}
    {"kind": "superstable", "hard_core": 0.2, "range": 1.0, "well_depth": 0.5}

The superstable config tail is the attractive well phi(r) = -depth*(1 - r/range)
on [hard_core, range]; arbitrary tails are available through the API.
"""

from __future__ import annotations

import math

import numpy as np

from . import core
from .geometry import PointConfiguration

_TABLE_SIZE = 4096


class Interaction:
    """Base class; subclasses fill ``range`` and ``birth_rate_upper_bound``."""

    range: float
    birth_rate_upper_bound: float

    def _lower(self, state: core.ChainState) -> core.InteractionDescriptor:
        raise NotImplementedError

    def _state(self, config: PointConfiguration) -> core.ChainState:
        cell = self.range if self.range > 0 else None
        return config.state(cell_size=cell)

    def total_energy(self, config: PointConfiguration) -> float:
        """Energy of the whole configuration; +inf on hard-core violation."""
        state = self._state(config)
        desc = self._lower(state)
        backend = core.active_backend()
        if desc.kind == core.KIND_AREA:
            cells = backend.area_total_cells(state, desc)
            return desc.gamma * cells * desc.lat_delta ** 2
        return backend.pair_total_energy(state, desc)

    def conditional_energy(self, x, config: PointConfiguration) -> float:
        """Insertion cost h(x, config) evaluated through the neighbor index."""
        x = np.asarray(x, dtype=float)
        if not config.window.contains(x):
            raise ValueError("x must lie inside the window")
        state = self._state(config)
        return core.active_backend().cond_energy(state, self._lower(state), x)

    def birth_rate(self, x, config: PointConfiguration) -> float:
        h = self.conditional_energy(x, config)
        return 0.0 if h == math.inf else math.exp(-h)


class NoInteraction(Interaction):
    """H identically zero; the birth rate is 1 (free birth-death)."""

    range = 0.0
    birth_rate_upper_bound = 1.0

    def _lower(self, state):
        return core.InteractionDescriptor(kind=core.KIND_NONE, bstar=1.0)


class StraussPotential(Interaction):
    """phi(r) = strength for r <= range, else 0, with strength >= 0."""

    def __init__(self, strength: float, range: float):
        if strength < 0:
            raise ValueError("strength must be nonnegative")
        if range <= 0:
            raise ValueError("range must be positive")
        self.strength = float(strength)
        self.range = float(range)
        self.birth_rate_upper_bound = 1.0

    def _lower(self, state):
        return core.InteractionDescriptor(
            kind=core.KIND_STRAUSS, rng_range=self.range,
            beta0=self.strength, pair_r=self.range, bstar=1.0)


def _tabulate(phi, lo: float, hi: float, size: int) -> np.ndarray:
    radii = np.linspace(lo, hi, size + 1)
    values = np.asarray([float(phi(r)) for r in radii], dtype=float)
    if not np.all(np.isfinite(values)):
        raise ValueError("pair potential must be finite on its support")
    return values


class SoftCorePotential(Interaction):
    """Nonnegative tabulated pair potential with compact support.

    ``phi`` is either a callable on [0, range] or a precomputed table of
    values at equally spaced radii; the table is the canonical form shared
    with the compiled kernels (linear interpolation between knots).
    """

    def __init__(self, phi, range: float, table_size: int = _TABLE_SIZE):
        if range <= 0:
            raise ValueError("range must be positive")
        self.range = float(range)
        if callable(phi):
            self.table = _tabulate(phi, 0.0, self.range, table_size)
        else:
            self.table = np.asarray(phi, dtype=float)
        if np.any(self.table < 0):
            raise ValueError("soft-core potential must be nonnegative")
        self.birth_rate_upper_bound = 1.0

    def _lower(self, state):
        return core.InteractionDescriptor(
            kind=core.KIND_PAIR_TABLE, rng_range=self.range,
            sigma=0.0, table=self.table, bstar=1.0)


class SuperstablePair(Interaction):
    """Hard core sigma plus a bounded tail on [sigma, range].

    The tail may be negative; the global birth-rate bound combines the tail
    sup with the packing bound on how many hard-core points fit within the
    interaction range.
    """

    def __init__(self, hard_core: float, tail, range: float,
                 table_size: int = _TABLE_SIZE):
        if hard_core < 0:
            raise ValueError("hard_core must be nonnegative")
        if range <= hard_core:
            raise ValueError("range must exceed the hard core")
        self.hard_core = float(hard_core)
        self.range = float(range)
        if callable(tail):
            self.table = _tabulate(tail, self.hard_core, self.range, table_size)
        else:
            self.table = np.asarray(tail, dtype=float)
        self.tail_sup = float(np.max(np.abs(self.table)))
        if self.hard_core == 0.0:
            self.birth_rate_upper_bound = math.inf
        else:
            self.birth_rate_upper_bound = self.rate_bound(3)

    def packing_bound(self, dim: int) -> int:
        """Max neighbors within the range compatible with the hard core."""
        if self.hard_core == 0.0:
            raise ValueError("no packing bound without a hard core")
        return math.floor((2.0 * self.range / self.hard_core + 1.0) ** dim)

    def rate_bound(self, dim: int) -> float:
        if self.hard_core == 0.0:
            return math.inf
        log_bound = self.tail_sup * self.packing_bound(dim)
        return math.inf if log_bound > 700.0 else math.exp(log_bound)

    def _lower(self, state):
        return core.InteractionDescriptor(
            kind=core.KIND_PAIR_TABLE, rng_range=self.range,
            sigma=self.hard_core, table=self.table,
            bstar=self.rate_bound(state.d))


class AreaInteraction(Interaction):
    """H = gamma * |union of R-disks|, planar only; range of influence 2R."""

    def __init__(self, gamma: float, radius: float, quad_resolution: int = 256):
        if gamma == 0:
            raise ValueError("gamma must be nonzero")
        if radius <= 0:
            raise ValueError("radius must be positive")
        if quad_resolution < 1:
            raise ValueError("quad_resolution must be positive")
        self.gamma = float(gamma)
        self.radius = float(radius)
        self.quad_resolution = int(quad_resolution)
        self.range = 2.0 * self.radius
        disk = math.pi * radius * radius
        self.birth_rate_upper_bound = 1.0 if gamma > 0 else math.exp(-gamma * disk)

    def _lower(self, state):
        if state.d != 2:
            raise ValueError("area interaction requires dim == 2")
        target = self.radius / self.quad_resolution
        lat_m = max(1, round(state.grid_side / target))
        return core.InteractionDescriptor(
            kind=core.KIND_AREA, rng_range=self.range,
            gamma=self.gamma, area_r=self.radius,
            lat_delta=state.grid_side / lat_m, lat_m=lat_m,
            bstar=self.birth_rate_upper_bound)


def delta_area(config: PointConfiguration, x, R: float,
               quad_resolution: int = 256) -> float:
    """Area of B_R(x) left uncovered by the R-disks of ``config``.

    Deterministic midpoint count on a lattice with ~quad_resolution cells per
    radius anchored to the window frame; the count is exact for the
    discretized area functional and within O(1/quad_resolution) of the true
    disk-union geometry.
    """
    if config.dim != 2:
        raise ValueError("delta_area requires dim == 2")
    x = np.asarray(x, dtype=float)
    inter = AreaInteraction(1.0, R, quad_resolution)
    state = inter._state(config)
    desc = inter._lower(state)
    cells = core.active_backend().delta_area_cells(state, desc, x)
    return cells * desc.lat_delta ** 2


def total_energy(interaction: Interaction, config: PointConfiguration) -> float:
    return interaction.total_energy(config)


def conditional_energy(interaction: Interaction, x,
                       config: PointConfiguration) -> float:
    return interaction.conditional_energy(x, config)


def birth_rate(interaction: Interaction, x, config: PointConfiguration) -> float:
    return interaction.birth_rate(x, config)


def birth_rates_batch(interaction: Interaction, config: PointConfiguration,
                      X) -> np.ndarray:
    """exp(-h(x, config)) for each row of X, reusing one neighbor index."""
    X = np.atleast_2d(np.asarray(X, dtype=float))
    state = interaction._state(config)
    desc = interaction._lower(state)
    backend = core.active_backend()
    out = np.empty(X.shape[0])
    for i in range(X.shape[0]):
        h = backend.cond_energy(state, desc, X[i])
        out[i] = 0.0 if h == math.inf else math.exp(-h)
    return out


def birth_rate_upper_bound(interaction: Interaction,
                           dim: int | None = None) -> float:
    if isinstance(interaction, SuperstablePair) and dim is not None:
        return interaction.rate_bound(dim)
    return interaction.birth_rate_upper_bound


def from_spec(spec: dict) -> Interaction:
    """Build an interaction from its run-config JSON block."""
    kind = spec.get("kind")
    if kind == "none":
        return NoInteraction()
    if kind == "strauss":
        return StraussPotential(spec["strength"], spec["range"])
    if kind == "soft_core":
        return SoftCorePotential(np.asarray(spec["table"], dtype=float),
                                 spec["range"])
    if kind == "area":
        return AreaInteraction(spec["gamma"], spec["radius"],
                               spec.get("quad_resolution", 256))
    if kind == "superstable":
        depth = float(spec.get("well_depth", 0.0))
        rng = float(spec["range"])
        return SuperstablePair(
            spec["hard_core"],
            lambda r: -depth * (1.0 - r / rng),
            rng,
        )
    raise ValueError(f"unknown interaction kind {kind!r}")
