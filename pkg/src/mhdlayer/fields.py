"""Scalar fields on the grid: spectral x-derivatives, high-order
y-derivatives, and the causal/anticausal y-integrals that recover the
normal components v and g from the divergence-free conditions.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable

import numpy as np

from .grid import Grid

__all__ = [
    "Field", "from_function", "zeros", "dx", "dy",
    "cumint_y", "tailint_y", "derive_vg", "lowpass", "total_y",
]


@dataclass
class Field:
    """Nodal values with shape (nx, ny); row index = x node."""

    grid: Grid
    values: np.ndarray

    def __post_init__(self):
        self.values = np.asarray(self.values, dtype=float)
        if self.values.shape != (self.grid.nx, self.grid.ny):
            raise ValueError(
                f"values shape {self.values.shape} does not match grid "
                f"({self.grid.nx}, {self.grid.ny})")

    def copy(self) -> "Field":
        return Field(self.grid, self.values.copy())


def zeros(grid: Grid) -> Field:
    return Field(grid, np.zeros((grid.nx, grid.ny)))


def from_function(grid: Grid, fn: Callable[[np.ndarray, np.ndarray], np.ndarray]) -> Field:
    """Evaluate fn(x, y) on the tensor grid (broadcasting meshes)."""
    X = grid.x_nodes[:, None]
    Y = grid.y_nodes[None, :]
    return Field(grid, np.broadcast_to(fn(X, Y), (grid.nx, grid.ny)).astype(float))


def dx(h: Field, m: int) -> Field:
    """m-th x-derivative via the real FFT; exact per resolved mode.

    The Nyquist mode is zeroed for odd m (its derivative is not
    representable on the real grid).
    """
    if not 0 <= m <= 10:
        raise ValueError(f"x-derivative order must be in [0, 10], got {m}")
    if m == 0:
        return h.copy()
    spec = np.fft.rfft(h.values, axis=0)
    spec *= (1j * h.grid.kx[:, None]) ** m
    if m % 2 == 1 and h.grid.nx % 2 == 0:
        spec[-1] = 0.0
    return Field(h.grid, np.fft.irfft(spec, n=h.grid.nx, axis=0))


def dy(h: Field, k: int) -> Field:
    """k-th y-derivative (k = 1 or 2), 4th-order sliding stencils."""
    if k == 1:
        D = h.grid.dy1
    elif k == 2:
        D = h.grid.dy2
    else:
        raise ValueError(f"y-derivative order must be 1 or 2, got {k}")
    return Field(h.grid, (D @ h.values.T).T)


def cumint_y(h: Field) -> Field:
    """F(x, y_j) = integral of h from 0 to y_j; F(x, 0) = 0 exactly."""
    inc = h.values @ h.grid.increments.T
    out = np.zeros_like(h.values)
    np.cumsum(inc, axis=1, out=out[:, 1:])
    return Field(h.grid, out)


def total_y(h: Field) -> np.ndarray:
    """Integral over the full [0, ymax] strip, one value per x node."""
    return h.values @ h.grid.y_quad


def tailint_y(h: Field) -> Field:
    """T(x, y_j) = integral of h from y_j to ymax.

    Computed as total - cumint so that T + cumint telescopes exactly and
    T(x, ymax) = 0 identically.
    """
    F = cumint_y(h)
    return Field(h.grid, F.values[:, -1:] - F.values)


def derive_vg(u: Field, f: Field) -> tuple[Field, Field]:
    """Normal components from the divergence conditions.

    v = -int_0^y dx(u), g = -int_0^y dx(f); both vanish at y = 0.
    """
    v = cumint_y(dx(u, 1))
    g = cumint_y(dx(f, 1))
    v.values *= -1.0
    g.values *= -1.0
    return v, g


def lowpass(h: Field) -> Field:
    """2/3-rule dealiasing filter: zero all modes with index > nx//3."""
    spec = np.fft.rfft(h.values, axis=0)
    spec[h.grid.dealias_keep + 1:] = 0.0
    return Field(h.grid, np.fft.irfft(spec, n=h.grid.nx, axis=0))
