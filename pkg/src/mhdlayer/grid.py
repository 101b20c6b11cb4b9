"""Computational domain: periodic x times a truncated y half-strip.

The x direction is uniform and periodic (Fourier differentiation), the y
direction is a node set on [0, ymax] that may be smoothly stretched toward
the wall.  The grid also owns the discrete y-operators shared by the rest
of the package: high-order first/second derivative matrices, the compact
3-point second-derivative stencil used by the implicit diffusion solve,
and the sliding-window quadrature/cumulative-integration weights.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
import scipy.sparse as sp

__all__ = ["Grid", "build_grid", "quad_y"]

# Nodes per local polynomial window.  Six nodes integrate degree-5
# interpolants exactly (composite order 6) and keep all column-summed
# quadrature weights strictly positive on uniform and stretched grids.
_QUAD_WINDOW = 6
_DY1_WINDOW = 5   # order-4 first derivative, one-sided at the ends
_DY2_WINDOW = 6   # order >= 4 second derivative, one-sided at the ends


def _fd_weights(x: np.ndarray, x0: float, m: int) -> np.ndarray:
    """Finite-difference weights for the m-th derivative at x0 on nodes x.

    Fornberg's recursion; exact for polynomials of degree < len(x).
    """
    n = len(x)
    c = np.zeros((n, m + 1))
    c1 = 1.0
    c4 = x[0] - x0
    c[0, 0] = 1.0
    for i in range(1, n):
        mn = min(i, m)
        c2 = 1.0
        c5 = c4
        c4 = x[i] - x0
        for j in range(i):
            c3 = x[i] - x[j]
            c2 *= c3
            if j == i - 1:
                for k in range(mn, 0, -1):
                    c[i, k] = c1 * (k * c[i - 1, k - 1] - c5 * c[i - 1, k]) / c2
                c[i, 0] = -c1 * c5 * c[i - 1, 0] / c2
            for k in range(mn, 0, -1):
                c[j, k] = (c4 * c[j, k] - k * c[j, k - 1]) / c3
            c[j, 0] = c4 * c[j, 0] / c3
        c1 = c2
    return c[:, m]


def _interval_weights(nodes: np.ndarray, a: float, b: float) -> np.ndarray:
    """Weights integrating the local interpolant over [a, b] exactly.

    Shift/scale the window to [-1, 1] before the Vandermonde solve so the
    system stays well conditioned on stretched grids.
    """
    n = len(nodes)
    c = 0.5 * (a + b)
    s = 0.5 * (b - a) if b > a else 1.0
    z = (nodes - c) / s
    vander = np.vander(z, n, increasing=True).T
    za, zb = (a - c) / s, (b - c) / s
    powers = np.arange(1, n + 1)
    moments = (zb ** powers - za ** powers) / powers
    return np.linalg.solve(vander, moments) * s


def _window_start(i: int, npts: int, win: int, center_off: int) -> int:
    return min(max(i - center_off, 0), npts - win)


def _derivative_matrix(y: np.ndarray, order: int, win: int) -> sp.csr_matrix:
    ny = len(y)
    rows, cols, vals = [], [], []
    off = (win - 1) // 2
    for i in range(ny):
        lo = _window_start(i, ny, win, off)
        idx = np.arange(lo, lo + win)
        w = _fd_weights(y[idx], y[i], order)
        rows.extend([i] * win)
        cols.extend(idx)
        vals.extend(w)
    return sp.csr_matrix((vals, (rows, cols)), shape=(ny, ny))


def _increments_matrix(y: np.ndarray) -> sp.csr_matrix:
    """Row i integrates the local degree-5 interpolant over [y_i, y_{i+1}]."""
    ny = len(y)
    win = _QUAD_WINDOW
    rows, cols, vals = [], [], []
    for i in range(ny - 1):
        lo = _window_start(i, ny, win, win // 2 - 1)
        idx = np.arange(lo, lo + win)
        w = _interval_weights(y[idx], y[i], y[i + 1])
        rows.extend([i] * win)
        cols.extend(idx)
        vals.extend(w)
    return sp.csr_matrix((vals, (rows, cols)), shape=(ny - 1, ny))


@dataclass(frozen=True, eq=False)
class Grid:
    """Tensor-product grid with quadrature and cached y-operators.

    x_nodes are uniform on [0, lx); y_nodes increase strictly from 0 to
    ymax; y_quad are non-negative weights with sum(y_quad) = ymax.
    """

    nx: int
    ny: int
    lx: float
    ymax: float
    x_nodes: np.ndarray
    y_nodes: np.ndarray
    y_quad: np.ndarray
    dy1: sp.csr_matrix = field(repr=False)
    dy2: sp.csr_matrix = field(repr=False)
    dy2_compact: sp.csr_matrix = field(repr=False)
    increments: sp.csr_matrix = field(repr=False)

    @property
    def dx_spacing(self) -> float:
        return self.lx / self.nx

    @property
    def kx(self) -> np.ndarray:
        """Wavenumbers of the real FFT, 2*pi*j/lx for j = 0..nx//2."""
        return 2.0 * np.pi * np.arange(self.nx // 2 + 1) / self.lx

    @property
    def dealias_keep(self) -> int:
        """Largest retained mode index under the 2/3 rule."""
        return self.nx // 3


def build_grid(nx: int, ny: int, lx: float = 2.0 * np.pi,
               ymax: float = 12.0, stretch: float = 0.0) -> Grid:
    """Construct a Grid.

    stretch = 0 gives uniform y nodes; 0 < stretch < 1 applies the
    monotone map y = ymax*((1-s)*xi + s*xi^2), concentrating nodes near
    the wall while keeping y_0 = 0 and y_{ny-1} = ymax.
    """
    if nx < 16 or (nx & (nx - 1)) != 0:
        raise ValueError(f"nx must be a power of two >= 16, got {nx}")
    if ny < 65:
        raise ValueError(f"ny must be >= 65, got {ny}")
    if lx <= 0 or ymax <= 0:
        raise ValueError("lx and ymax must be positive")
    if not 0.0 <= stretch < 1.0:
        raise ValueError(f"stretch must lie in [0, 1), got {stretch}")

    x = np.arange(nx) * (lx / nx)
    xi = np.linspace(0.0, 1.0, ny)
    y = ymax * ((1.0 - stretch) * xi + stretch * xi * xi)
    y[0], y[-1] = 0.0, ymax

    inc = _increments_matrix(y)
    y_quad = np.asarray(inc.sum(axis=0)).ravel()
    if y_quad.min() < 0.0:
        raise RuntimeError("quadrature weights lost positivity; "
                           "refine ny or reduce stretch")

    return Grid(
        nx=nx, ny=ny, lx=float(lx), ymax=float(ymax),
        x_nodes=x, y_nodes=y, y_quad=y_quad,
        dy1=_derivative_matrix(y, 1, _DY1_WINDOW),
        dy2=_derivative_matrix(y, 2, _DY2_WINDOW),
        dy2_compact=_derivative_matrix(y, 2, 3),
        increments=inc,
    )


def quad_y(grid: Grid, samples: np.ndarray) -> float:
    """Integrate samples on the y nodes over [0, ymax]."""
    samples = np.asarray(samples)
    if samples.shape[-1] != grid.ny:
        raise ValueError(f"expected {grid.ny} samples, got {samples.shape[-1]}")
    return float(samples @ grid.y_quad) if samples.ndim == 1 else samples @ grid.y_quad
