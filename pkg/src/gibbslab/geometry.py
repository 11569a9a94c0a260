"""Cubic windows, point configurations, translations, and region counting."""

from __future__ import annotations

from dataclasses import dataclass
from pathlib import Path

import numpy as np

from . import core

PERIODIC = "periodic"
FREE = "free"


@dataclass(frozen=True)
class Window:
    """The cube [-half_side, half_side]^dim with a boundary convention."""

    half_side: float
    dim: int = 2
    boundary: str = PERIODIC

    def __post_init__(self):
        if self.half_side <= 0:
            raise ValueError("half_side must be positive")
        if self.dim not in (1, 2, 3):
            raise ValueError("dim must be 1, 2 or 3")
        if self.boundary not in (PERIODIC, FREE):
            raise ValueError(f"unknown boundary {self.boundary!r}")

    @property
    def side(self) -> float:
        return 2.0 * self.half_side

    def volume(self) -> float:
        return self.side ** self.dim

    def contains(self, points) -> bool:
        pts = np.atleast_2d(np.asarray(points, dtype=float))
        return bool(np.all(np.abs(pts) <= self.half_side))

    def wrap(self, points) -> np.ndarray:
        """Map coordinates into [-half_side, half_side) by periodicity."""
        pts = np.asarray(points, dtype=float)
        return (pts + self.half_side) % self.side - self.half_side

    def torus_distance(self, a, b) -> np.ndarray:
        diff = np.abs(np.asarray(a, dtype=float) - np.asarray(b, dtype=float))
        if self.boundary == PERIODIC:
            diff = np.minimum(diff, self.side - diff)
        return np.sqrt(np.sum(diff * diff, axis=-1))


@dataclass(frozen=True)
class Box:
    lower: tuple
    upper: tuple

    def __post_init__(self):
        lo = np.asarray(self.lower, dtype=float)
        hi = np.asarray(self.upper, dtype=float)
        if lo.shape != hi.shape or np.any(lo >= hi):
            raise ValueError("box needs lower < upper per axis")

    @property
    def dim(self) -> int:
        return len(self.lower)

    def volume(self) -> float:
        lo = np.asarray(self.lower, dtype=float)
        hi = np.asarray(self.upper, dtype=float)
        return float(np.prod(hi - lo))

    def mask(self, points) -> np.ndarray:
        pts = np.atleast_2d(np.asarray(points, dtype=float))
        lo = np.asarray(self.lower, dtype=float)
        hi = np.asarray(self.upper, dtype=float)
        return np.all((pts >= lo) & (pts <= hi), axis=1)

    def contained_in(self, window: Window) -> bool:
        return window.contains([self.lower, self.upper])


@dataclass(frozen=True)
class Ball:
    center: tuple
    radius: float

    def __post_init__(self):
        if self.radius <= 0:
            raise ValueError("radius must be positive")

    @property
    def dim(self) -> int:
        return len(self.center)

    def volume(self) -> float:
        r, d = self.radius, self.dim
        return {1: 2.0 * r, 2: np.pi * r * r, 3: 4.0 / 3.0 * np.pi * r ** 3}[d]

    def mask(self, points) -> np.ndarray:
        pts = np.atleast_2d(np.asarray(points, dtype=float))
        c = np.asarray(self.center, dtype=float)
        return np.sum((pts - c) ** 2, axis=1) <= self.radius ** 2

    def contained_in(self, window: Window) -> bool:
        c = np.asarray(self.center, dtype=float)
        return bool(np.all(np.abs(c) + self.radius <= window.half_side))


Region = Box | Ball


class PointConfiguration:
    """A finite simple point set in a window, with a lazy cell-list index."""

    __slots__ = ("window", "points", "cell_size", "_state")

    def __init__(self, points, window: Window, cell_size: float | None = None):
        pts = np.asarray(points, dtype=float).reshape(-1, window.dim)
        if pts.size and not window.contains(pts):
            raise ValueError("points must lie inside the window")
        if pts.shape[0] > 1:
            uniq = np.unique(pts, axis=0)
            if uniq.shape[0] != pts.shape[0]:
                raise ValueError("configuration must be simple "
                                 "(duplicate coordinates)")
        self.window = window
        self.points = pts
        self.cell_size = cell_size
        self._state = None

    def __len__(self) -> int:
        return self.points.shape[0]

    @property
    def dim(self) -> int:
        return self.window.dim

    def state(self, cell_size: float | None = None) -> core.ChainState:
        """Backend chain state over these points (built once, then cached)."""
        if self._state is None:
            cs = cell_size or self.cell_size or max(self.window.side / 16, 1e-9)
            self._state = core.make_state(
                self.points,
                d=self.window.dim,
                periodic=self.window.boundary == PERIODIC,
                grid_lo=-self.window.half_side,
                grid_side=self.window.side,
                cell_size=cs,
                box_lo=-self.window.half_side,
                box_hi=self.window.half_side,
            )
        return self._state

    def count_in(self, region: Region) -> int:
        if len(self) == 0:
            return 0
        return int(np.count_nonzero(region.mask(self.points)))

    def neighbors_within(self, x, r: float) -> np.ndarray:
        """Indices of points within distance r of x (window metric)."""
        if len(self) == 0:
            return np.zeros(0, dtype=np.int64)
        idx = core.active_backend().neighbors_within(
            self.state(), np.asarray(x, dtype=float), float(r))
        return np.asarray(idx, dtype=np.int64)

    def translate(self, x) -> "PointConfiguration":
        """Shift every point by -x and wrap; periodic windows only."""
        if self.window.boundary != PERIODIC:
            raise ValueError("translate requires a periodic window")
        shifted = self.window.wrap(self.points - np.asarray(x, dtype=float))
        return PointConfiguration(shifted, self.window, self.cell_size)

    def with_point(self, x) -> "PointConfiguration":
        x = np.asarray(x, dtype=float).reshape(1, self.dim)
        return PointConfiguration(
            np.vstack([self.points, x]) if len(self) else x,
            self.window, self.cell_size)

    def without_point(self, i: int) -> "PointConfiguration":
        keep = np.delete(self.points, i, axis=0)
        return PointConfiguration(keep, self.window, self.cell_size)


def save_snapshot(config: PointConfiguration, path) -> None:
    """Plain-text snapshot: header line, then one point per line."""
    w = config.window
    lines = [f"{w.dim} {len(config)} {w.half_side!r} {w.boundary}"]
    for p in config.points:
        lines.append(" ".join(f"{v:.17g}" for v in p))
    Path(path).write_text("\n".join(lines) + "\n")


def load_snapshot(path) -> PointConfiguration:
    text = Path(path).read_text().strip().splitlines()
    dim_s, n_s, half_s, boundary = text[0].split()
    dim, n = int(dim_s), int(n_s)
    window = Window(float(half_s), dim, boundary)
    pts = np.array(
        [[float(v) for v in line.split()] for line in text[1 : n + 1]],
        dtype=float,
    ).reshape(n, dim)
    return PointConfiguration(pts, window)
