"""Space-time product quadrature for causal boundary kernels.

Space is handled by the periodic trapezoid rule on equispaced angular
nodes (spectrally accurate for smooth periodic integrands).  Time is
handled by reconstructing the density as piecewise linear between the
uniform time nodes and integrating it against the kernel slab by slab:
a trapezoid slab rule for bounded kernels, and product-integration
weights with exact moments of s^(-1/2) for inverse-square-root kernels.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np


@dataclass(frozen=True)
class TimeGrid:
    """Uniform partition of [0, T] into M steps; nodes t_i = i T / M."""

    horizon: float
    steps: int
    nodes: np.ndarray = field(init=False, repr=False, compare=False)

    def __post_init__(self):
        if self.horizon <= 0:
            raise ValueError(f"horizon must be positive, got {self.horizon}")
        if self.steps < 2:
            raise ValueError(f"need at least 2 time steps, got {self.steps}")
        object.__setattr__(self, "nodes", np.linspace(0.0, self.horizon, self.steps + 1))

    @property
    def h(self):
        return self.horizon / self.steps

    @property
    def is_uniform(self):
        return True


@dataclass(frozen=True)
class NonUniformTimeGrid:
    """Strictly increasing time nodes starting at 0; no Toeplitz structure."""

    nodes: np.ndarray

    def __post_init__(self):
        nodes = np.asarray(self.nodes, dtype=float)
        if nodes.ndim != 1 or len(nodes) < 3:
            raise ValueError("need at least 3 nodes")
        if nodes[0] != 0.0 or np.any(np.diff(nodes) <= 0):
            raise ValueError("nodes must start at 0 and increase strictly")
        object.__setattr__(self, "nodes", nodes)

    @property
    def horizon(self):
        return float(self.nodes[-1])

    @property
    def steps(self):
        return len(self.nodes) - 1

    @property
    def is_uniform(self):
        return False


@dataclass(frozen=True)
class SpaceGrid:
    """N equispaced angular nodes on [0, 2pi)."""

    n: int

    def __post_init__(self):
        if self.n < 8 or self.n % 2 != 0:
            raise ValueError(f"need an even node count >= 8, got {self.n}")

    @property
    def theta(self):
        return 2.0 * math.pi * np.arange(self.n) / self.n

    @property
    def dtheta(self):
        return 2.0 * math.pi / self.n


def _check_conv_shapes(grid, kernel, density):
    kernel = np.asarray(kernel, dtype=float)
    density = np.asarray(density, dtype=float)
    m = grid.steps
    if kernel.ndim != 3:
        raise ValueError("kernel must have shape (lags, n_targets, n_sources)")
    if kernel.shape[0] < m + 1:
        raise ValueError(
            f"kernel supplies {kernel.shape[0]} lags but the grid needs {m + 1}"
        )
    if density.ndim != 2 or density.shape != (m + 1, kernel.shape[2]):
        raise ValueError(
            f"density shape {density.shape} inconsistent with "
            f"(steps+1, sources) = ({m + 1}, {kernel.shape[2]})"
        )
    return kernel, density


def convolve(grid: TimeGrid, kernel, density, singularity_class="smooth", space_weights=None):
    """Causal space-time convolution of a lag kernel with a density.

    Approximates K(t_i, x) = int_0^{t_i} sum_y w_y G(t_i - tau, x, y)
    f(tau, y) dtau with f reconstructed piecewise linearly in time.

    Parameters
    ----------
    grid : TimeGrid
        Uniform time grid; the kernel is sampled at its lags.
    kernel : array (lags, n_targets, n_sources)
        Samples G(l*h, x_i, y_j).  For the inverse_sqrt_time class the
        lag-0 entry is never read (it would be infinite); the bounded
        factor G(s) sqrt(s) is extrapolated to lag 0 from lags 1 and 2.
    density : array (steps+1, n_sources)
        Samples f(t_i, y_j).  The value at t_0 participates in the
        piecewise-linear reconstruction as given.
    singularity_class : {"smooth", "inverse_sqrt_time"}
        Bounded kernels use a trapezoid slab rule; kernels behaving like
        s^(-1/2) use exact product-integration moments.
    space_weights : array (n_sources,), optional
        Quadrature weights in y.  Defaults to the periodic trapezoid
        weight 2 pi / n_sources (1.0 for a single source point).

    Returns
    -------
    array (steps+1, n_targets)
    """
    kernel, density = _check_conv_shapes(grid, kernel, density)
    m = grid.steps
    h = grid.h
    n_tgt, n_src = kernel.shape[1], kernel.shape[2]
    if space_weights is None:
        space_weights = np.full(n_src, 2.0 * math.pi / n_src if n_src > 1 else 1.0)
    else:
        space_weights = np.asarray(space_weights, dtype=float)
        if space_weights.shape != (n_src,):
            raise ValueError("space_weights must have one entry per source node")
    fw = density * space_weights[None, :]  # (m+1, n_src)
    out = np.zeros((m + 1, n_tgt))
    if singularity_class == "smooth":
        # Trapezoid over each slab; adjacent slabs merge into the classic
        # composite rule with half weights at tau = 0 and tau = t_i.
        for i in range(1, m + 1):
            acc = 0.5 * (kernel[i] @ fw[0] + kernel[0] @ fw[i])
            for k in range(1, i):
                acc = acc + kernel[i - k] @ fw[k]
            out[i] = h * acc
    elif singularity_class == "inverse_sqrt_time":
        lags = np.arange(1, m + 1)
        gt = np.empty((m + 1,) + kernel.shape[1:])
        gt[1:] = kernel[1 : m + 1] * np.sqrt(lags * h)[:, None, None]
        gt[0] = 2.0 * gt[1] - gt[2]  # bounded-factor limit at zero lag
        for i in range(1, m + 1):
            acc = np.zeros(n_tgt)
            for mm in range(i):
                a = (i - mm - 1) * h
                b = (i - mm) * h
                i0 = 2.0 * (math.sqrt(b) - math.sqrt(a))
                i1 = (2.0 / 3.0) * (b**1.5 - a**1.5)
                # p(s) = p_b + (p_a - p_b)(s - a)/h with p_a at tau=t_{mm+1}
                pa = gt[i - mm - 1] @ fw[mm + 1]
                pb = gt[i - mm] @ fw[mm]
                acc = acc + pa * i0 + (pb - pa) * (i1 - a * i0) / h
            out[i] = acc
    else:
        raise ValueError(f"unknown singularity_class {singularity_class!r}")
    return out


def toeplitz_check(grid, block_fn, n=None, tol=1e-14):
    """Verify lower-triangular block-Toeplitz structure of an assembly.

    block_fn(i, j) must return the time block coupling source slab j to
    target node i (i > j).  On a uniform grid the blocks are compared
    against their lag-only counterparts block_fn(i - j, 0); the maximum
    deviation and a pass flag are returned.  On a non-uniform grid the
    structure does not exist and the check reports not-applicable.

    Returns
    -------
    ("ok" | "fail" | "not-applicable", max_deviation or None)
    """
    if not grid.is_uniform:
        return "not-applicable", None
    m = grid.steps
    dev = 0.0
    for i in range(1, m + 1):
        for j in range(i):
            direct = np.asarray(block_fn(i, j))
            lagged = np.asarray(block_fn(i - j, 0))
            dev = max(dev, float(np.max(np.abs(direct - lagged))) if direct.size else 0.0)
    return ("ok" if dev <= tol else "fail"), dev


def norm_bound_probe(grid: TimeGrid, kernel, density, singularity_class="smooth", space_weights=None):
    """Two sides of the convolution boundedness inequality.

    Returns (sup |K[G,f]|, ||G|| * ||f||) where ||G|| is the discrete
    L1-in-time norm of the sup-over-targets spatial L1 kernel norm and
    ||f|| is sup |f|.  The ratio of the two is an empirical continuity
    constant; it is meaningful only relative to the same convention at
    other resolutions.
    """
    kernel, density = _check_conv_shapes(grid, kernel, density)
    out = convolve(grid, kernel, density, singularity_class, space_weights)
    n_src = kernel.shape[2]
    if space_weights is None:
        w = np.full(n_src, 2.0 * math.pi / n_src if n_src > 1 else 1.0)
    else:
        w = np.asarray(space_weights, dtype=float)
    m = grid.steps
    lag_norms = np.max(np.abs(kernel[: m + 1]) @ w, axis=1)
    if singularity_class == "inverse_sqrt_time":
        lags = np.arange(m + 1, dtype=float)
        lag_norms = lag_norms * np.sqrt(lags * grid.h)
        lag_norms[0] = abs(2.0 * lag_norms[1] - lag_norms[2])
        kernel_norm = float(np.sum(lag_norms) * 2.0 * math.sqrt(grid.h))
    else:
        kernel_norm = float(np.trapezoid(lag_norms, dx=grid.h))
    f_norm = float(np.max(np.abs(density)))
    return float(np.max(np.abs(out))), kernel_norm * f_norm
