"""Kernel-based local observables and their space averages.

An observable is f(eta) = sign * exp(-sum_{x in eta} g(x)) for a nonnegative
compactly supported kernel g, so |f| <= 1 and the add-one-point gradient has
the closed form D_x f = (exp(-g(x)) - 1) f.  Space averages integrate f over
translations of the configuration; the translation integral uses a midpoint
grid whose spacing resolves the kernel.

Kernel block in run-config files:
    {"family": "tent", "amplitude": 1.0, "radius": 1.0, "sign": 1}
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from . import core
from .geometry import PERIODIC, PointConfiguration


@dataclass(frozen=True)
class Kernel:
    """Nonnegative kernel with declared compact support.

    ``fn`` maps an (k, dim) array of offsets to k nonnegative values and must
    vanish outside the sup-norm ball of the declared support radius; supports
    are never inferred.
    """

    fn: object
    support_radius: float
    dim: int = 2
    sign: int = 1
    label: str = "kernel"
    tent: tuple | None = field(default=None, compare=False)

    def __post_init__(self):
        if self.support_radius <= 0:
            raise ValueError("support_radius must be positive")
        if self.sign not in (-1, 1):
            raise ValueError("sign must be +1 or -1")

    def with_sign(self, sign: int) -> "Kernel":
        return Kernel(self.fn, self.support_radius, self.dim, sign,
                      self.label, self.tent)

    def __call__(self, offsets) -> np.ndarray:
        pts = np.atleast_2d(np.asarray(offsets, dtype=float))
        return np.asarray(self.fn(pts), dtype=float)


def tent_kernel(amplitude: float, radius: float, sign: int = 1,
                dim: int = 2) -> Kernel:
    """g(x) = amplitude * max(0, 1 - |x|/radius)."""
    if amplitude <= 0:
        raise ValueError("amplitude must be positive")

    def fn(pts):
        rho = np.sqrt(np.sum(pts * pts, axis=1))
        return amplitude * np.maximum(0.0, 1.0 - rho / radius)

    return Kernel(fn, radius, dim, sign,
                  label=f"tent(a={amplitude:g},r={radius:g})",
                  tent=(float(amplitude), float(radius)))


def box_kernel(height: float, lower, upper, sign: int = 1) -> Kernel:
    """g = height on the box [lower, upper], zero outside."""
    lo = np.asarray(lower, dtype=float)
    hi = np.asarray(upper, dtype=float)
    radius = float(np.max(np.abs(np.concatenate([lo, hi]))))

    def fn(pts):
        inside = np.all((pts >= lo) & (pts <= hi), axis=1)
        return height * inside.astype(float)

    return Kernel(fn, radius, len(lo), sign,
                  label=f"box(h={height:g})")


def kernel_from_spec(spec: dict, dim: int = 2) -> Kernel:
    if spec.get("family") != "tent":
        raise ValueError(f"unknown kernel family {spec.get('family')!r}")
    return tent_kernel(spec["amplitude"], spec["radius"],
                       spec.get("sign", 1), dim)


def eval_f(kernel: Kernel, config: PointConfiguration) -> float:
    """sign * exp(-sum of kernel values over the points)."""
    if len(config) == 0:
        return float(kernel.sign)
    return kernel.sign * float(np.exp(-np.sum(kernel(config.points))))


def discrete_gradient(F, x, config: PointConfiguration) -> float:
    """Add-one-point difference F(eta + delta_x) - F(eta)."""
    x = np.asarray(x, dtype=float)
    if not config.window.contains(x):
        raise ValueError("x must lie inside the window")
    return float(F(config.with_point(x))) - float(F(config))


@dataclass(frozen=True)
class SpaceAverageSpec:
    """Translation-average of a kernel observable over the box of half-side n."""

    kernel: Kernel
    n: float
    quad_spacing: float | None = None

    def __post_init__(self):
        r = self.kernel.support_radius
        if self.n < r:
            raise ValueError("averaging half-side must be >= kernel radius")
        delta = self.quad_spacing if self.quad_spacing is not None else r / 16
        if delta > r / 8:
            raise ValueError("quad_spacing must resolve the kernel (<= r/8)")
        object.__setattr__(self, "quad_spacing", float(delta))

    @property
    def grid_count(self) -> int:
        return max(1, round(2.0 * self.n / self.quad_spacing))

    @property
    def grid_spacing(self) -> float:
        # adjusted so the midpoint cells tile the averaging box exactly
        return 2.0 * self.n / self.grid_count

    def volume(self) -> float:
        return (2.0 * self.n) ** self.kernel.dim

    def grid_axes(self) -> np.ndarray:
        m = self.grid_count
        delta = self.grid_spacing
        return -self.n + (np.arange(m) + 0.5) * delta


def _require_window(spec: SpaceAverageSpec, config: PointConfiguration):
    w = config.window
    if w.boundary != PERIODIC:
        raise ValueError("space averages need a periodic window")
    if w.half_side < spec.n + spec.kernel.support_radius:
        raise ValueError("window half-side must be >= n + kernel radius")


def kernel_field(spec: SpaceAverageSpec, config: PointConfiguration) -> np.ndarray:
    """S(x_q) = sum_p g(p - x_q) on the translation grid (shape (m,)*dim)."""
    d = spec.kernel.dim
    m = spec.grid_count
    if spec.kernel.tent is not None and d == 2:
        amp, r = spec.kernel.tent
        grid = np.zeros((m, m))
        if len(config):
            core.active_backend().accumulate_tent(
                config.points, amp, r, -spec.n, spec.grid_spacing, grid)
        return grid
    axes = [spec.grid_axes()] * d
    mesh = np.stack(np.meshgrid(*axes, indexing="ij"), axis=-1).reshape(-1, d)
    S = np.zeros(mesh.shape[0])
    for p in np.atleast_2d(config.points) if len(config) else []:
        S += spec.kernel(p - mesh)
    return S.reshape((m,) * d)


def space_average(spec: SpaceAverageSpec, config: PointConfiguration) -> float:
    """Midpoint quadrature of x -> f(theta_x eta) over the averaging box."""
    _require_window(spec, config)
    S = kernel_field(spec, config)
    cell = spec.grid_spacing ** spec.kernel.dim
    return spec.kernel.sign * cell * float(np.sum(np.exp(-S)))


def space_average_batch(spec: SpaceAverageSpec, configs) -> np.ndarray:
    if configs:
        _require_window(spec, configs[0])
    cell = spec.grid_spacing ** spec.kernel.dim
    out = np.empty(len(configs))
    for i, cfg in enumerate(configs):
        out[i] = spec.kernel.sign * cell * float(np.sum(np.exp(-kernel_field(spec, cfg))))
    return out


def space_average_gradient(spec: SpaceAverageSpec, config: PointConfiguration,
                           z) -> float:
    """Exact add-one gradient of the quadratured space average at z."""
    _require_window(spec, config)
    z = np.asarray(z, dtype=float)
    d = spec.kernel.dim
    m = spec.grid_count
    axes = [spec.grid_axes()] * d
    mesh = np.stack(np.meshgrid(*axes, indexing="ij"), axis=-1).reshape(-1, d)
    S = kernel_field(spec, config).reshape(-1)
    w = np.exp(-spec.kernel(z - mesh)) - 1.0
    cell = spec.grid_spacing ** d
    return spec.kernel.sign * cell * float(np.sum(np.exp(-S) * w))


def grad_sq_integral(spec: SpaceAverageSpec, config: PointConfiguration) -> float:
    """Quadrature of int |D_z F|^2 dz over the inflated support of D F."""
    from scipy.signal import convolve

    _require_window(spec, config)
    d = spec.kernel.dim
    delta = spec.grid_spacing
    r = spec.kernel.support_radius
    k = int(np.ceil(r / delta))
    offsets = (np.arange(2 * k + 1) - k) * delta
    mesh = np.stack(np.meshgrid(*([offsets] * d), indexing="ij"),
                    axis=-1).reshape(-1, d)
    stencil = (np.exp(-spec.kernel(mesh)) - 1.0).reshape((2 * k + 1,) * d)
    A = np.exp(-kernel_field(spec, config))
    conv = convolve(A, stencil, mode="full")
    cell = delta ** d
    return cell * float(np.sum((cell * conv) ** 2))


def beta_constant(kernel: Kernel, quad_spacing: float | None = None) -> float:
    """Integral of |1 - exp(-g)| over the kernel support (midpoint rule)."""
    r = kernel.support_radius
    if quad_spacing is None:
        quad_spacing = r / 128 if kernel.dim <= 2 else r / 32
    m = max(1, round(2.0 * r / quad_spacing))
    delta = 2.0 * r / m
    axis = -r + (np.arange(m) + 0.5) * delta
    mesh = np.stack(np.meshgrid(*([axis] * kernel.dim), indexing="ij"),
                    axis=-1).reshape(-1, kernel.dim)
    vals = np.abs(1.0 - np.exp(-kernel(mesh)))
    return float(np.sum(vals)) * delta ** kernel.dim


def psi_envelope(kernel: Kernel, x) -> float:
    """sup over configurations of |D_x f|, exact because |f| <= 1."""
    return float(np.abs(1.0 - np.exp(-kernel(np.atleast_2d(x))))[0])


def alpha_sq(kernel: Kernel, n: float,
             quad_spacing: float | None = None) -> float:
    """beta^2 |Lambda_n|, the gradient L2 budget of the space average."""
    if n <= 0:
        raise ValueError("n must be positive")
    beta = beta_constant(kernel, quad_spacing)
    return beta * beta * (2.0 * n) ** kernel.dim


@dataclass(frozen=True)
class GradientConstants:
    beta: float
    alpha_sq_n: float


def gradient_constants(kernel: Kernel, n: float,
                       quad_spacing: float | None = None) -> GradientConstants:
    beta = beta_constant(kernel, quad_spacing)
    return GradientConstants(beta, beta * beta * (2.0 * n) ** kernel.dim)
