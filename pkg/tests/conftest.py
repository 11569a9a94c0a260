import numpy as np
import pytest

from gibbslab import core
from gibbslab.dynamics import make_rng
from gibbslab.geometry import PointConfiguration, Window


@pytest.fixture
def rng():
    return make_rng(20240809)


@pytest.fixture(params=core.available_backends())
def backend(request):
    """Run a test once per available kernel backend."""
    previous = core.backend_name()
    core.set_backend(request.param)
    yield request.param
    core.set_backend(previous)


def random_config(window: Window, n: int, rng: np.random.Generator,
                  min_dist: float = 0.0) -> PointConfiguration:
    """Uniform points, optionally thinned to a minimum separation."""
    pts = rng.uniform(-window.half_side, window.half_side, (4 * n + 8, window.dim))
    if min_dist > 0:
        kept = []
        for p in pts:
            if all(window.torus_distance(p, q) >= min_dist for q in kept):
                kept.append(p)
            if len(kept) == n:
                break
        pts = np.array(kept)
    else:
        pts = pts[:n]
    return PointConfiguration(pts, window)
