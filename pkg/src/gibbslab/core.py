"""Shared chain state, lowered interaction descriptors, and backend selection.

Two interchangeable kernel backends implement the hot operations (neighbor
scans, conditional energies, Metropolis and continuous-time chains):

* ``gibbslab._fastcore`` - compiled Cython extension,
* ``gibbslab._pycore``   - pure-Python mirror, always available.

Both consume the same ``ChainState``/``InteractionDescriptor`` layout and the
same stream of uniform draws, so a chain driven from the same seed produces
byte-identical trajectories on either backend.  The draw protocol is frozen:

Metropolis step (half birth, half death):
  u0 = U();  birth if u0 < 0.5
  birth:  x_j = lo + (hi - lo) * U()  for each axis, then u_acc = U();
          accept iff u_acc * (N + 1) < volume * exp(-h(x))
  death:  if N == 0 consume nothing further; else u_i = U() picks the point,
          u_acc = U(); accept iff u_acc * volume * exp(-h(y, state minus y)) < N

Continuous-time step (thinning with global bound b*):
  Q = b* volume + N;  u_t = U() gives dt = -log(u_t)/Q
  u_e = U(); birth candidate iff u_e * Q < b* volume
  birth candidate: coordinate draws, then u_acc = U();
                   accepted iff u_acc * b* < exp(-h(x))
  death: u_i = U() picks the point (N >= 1 whenever death is reachable)

Sample times s with s < t_next observe the pre-event state; the trailing
samples up to t_max observe the final state.
"""

from __future__ import annotations

import math
import os
from dataclasses import dataclass, field

import numpy as np

KIND_NONE = 0
KIND_STRAUSS = 1
KIND_PAIR_TABLE = 2
KIND_AREA = 3

_EVENT_BIRTH = 0
_EVENT_DEATH = 1


@dataclass
class InteractionDescriptor:
    """Primitive-field form of an interaction, shared by both backends."""

    kind: int = KIND_NONE
    # interaction range: pair range, or 2R for the area family
    rng_range: float = 0.0
    # strauss
    beta0: float = 0.0
    pair_r: float = 0.0
    # tabulated pair potential on [sigma, range], linear interpolation
    sigma: float = 0.0
    table: np.ndarray = field(default_factory=lambda: np.zeros(0))
    # area family
    gamma: float = 0.0
    area_r: float = 0.0
    lat_delta: float = 0.0
    lat_m: int = 0
    # global birth-rate bound used for thinning (inf allowed)
    bstar: float = math.inf


class ChainState:
    """Point storage plus a cell-list index over a cubic domain.

    Points live in ``points[:n]``; indices below ``n_frozen`` are immutable
    boundary points that the dynamics never touch.  The grid is a
    doubly-linked list per cell (``head``/``nxt``/``prv``), kept in exactly
    the same order by both backends.
    """

    __slots__ = (
        "d", "periodic", "grid_lo", "grid_side", "m", "cell",
        "box_lo", "box_hi", "volume", "n_frozen", "n",
        "points", "head", "nxt", "prv", "cell_of",
    )

    def __init__(self, d, periodic, grid_lo, grid_side, cell_size,
                 box_lo, box_hi, capacity):
        self.d = int(d)
        self.periodic = bool(periodic)
        self.grid_lo = float(grid_lo)
        self.grid_side = float(grid_side)
        m_cap = 128 if d <= 2 else 32
        m = max(1, min(int(math.floor(grid_side / cell_size)), m_cap))
        self.m = m
        self.cell = grid_side / m
        self.box_lo = float(box_lo)
        self.box_hi = float(box_hi)
        self.volume = (box_hi - box_lo) ** d
        self.n_frozen = 0
        self.n = 0
        capacity = max(int(capacity), 8)
        self.points = np.zeros((capacity, d))
        self.head = np.full(m ** d, -1, dtype=np.int64)
        self.nxt = np.full(capacity, -1, dtype=np.int64)
        self.prv = np.full(capacity, -1, dtype=np.int64)
        self.cell_of = np.full(capacity, -1, dtype=np.int64)

    @property
    def capacity(self) -> int:
        return self.points.shape[0]

    @property
    def n_live(self) -> int:
        return self.n - self.n_frozen

    def live_points(self) -> np.ndarray:
        return self.points[self.n_frozen:self.n].copy()

    def grow(self, min_capacity: int) -> None:
        new_cap = max(2 * self.capacity, min_capacity)
        pts = np.zeros((new_cap, self.d))
        pts[: self.n] = self.points[: self.n]
        self.points = pts
        for name in ("nxt", "prv", "cell_of"):
            old = getattr(self, name)
            arr = np.full(new_cap, -1, dtype=np.int64)
            arr[: self.n] = old[: self.n]
            setattr(self, name, arr)


def make_state(points, *, d, periodic, grid_lo, grid_side, cell_size,
               box_lo, box_hi, n_frozen=0, capacity=None, backend=None):
    points = np.ascontiguousarray(points, dtype=float).reshape(-1, d)
    n = points.shape[0]
    if capacity is None:
        capacity = max(2 * n + 16, 64)
    st = ChainState(d, periodic, grid_lo, grid_side, cell_size,
                    box_lo, box_hi, capacity)
    st.n = n
    st.n_frozen = int(n_frozen)
    st.points[:n] = points
    (backend or active_backend()).rebuild(st)
    return st


def check_grid(state: ChainState) -> bool:
    """Verify the cell lists partition ``range(n)`` exactly."""
    seen = set()
    m, d = state.m, state.d
    for c in range(m ** d):
        i = int(state.head[c])
        while i >= 0:
            if i in seen or int(state.cell_of[i]) != c:
                return False
            seen.add(i)
            i = int(state.nxt[i])
    return seen == set(range(state.n))


# -- backend selection -------------------------------------------------------

_FORCED = os.environ.get("GIBBSLAB_BACKEND")  # "compiled" | "python" | None
_compiled = None
_compiled_error: Exception | None = None
try:
    from . import _fastcore as _compiled  # type: ignore
except Exception as exc:  # pragma: no cover - depends on build environment
    _compiled_error = exc

from . import _pycore as _python


def available_backends() -> list[str]:
    names = ["python"]
    if _compiled is not None:
        names.insert(0, "compiled")
    return names


def get_backend(name: str | None = None):
    name = name or _FORCED or ("compiled" if _compiled is not None else "python")
    if name == "compiled":
        if _compiled is None:
            raise ImportError(
                "compiled backend requested but gibbslab._fastcore is not "
                f"importable: {_compiled_error!r}"
            )
        return _compiled
    if name == "python":
        return _python
    raise ValueError(f"unknown backend {name!r}")


_active = get_backend()


def active_backend():
    return _active


def backend_name() -> str:
    return "compiled" if _active is _compiled else "python"


def set_backend(name: str) -> None:
    """Switch the process-wide backend (used by tests and the benchmark)."""
    global _active
    _active = get_backend(name)
