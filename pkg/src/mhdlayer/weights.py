"""Time-dependent Gaussian weights mu_lambda(t, y) = exp(lambda*y^2/(4<t>))
with <t> = 1 + t, and the weighted L2 / anisotropic Sobolev norms built on
them.  All weighted quadratures fuse the half-exponent weight with the
field before squaring: mu(0, 12) = e^36 is representable, but separate
products with Gaussian field tails would lose precision.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .fields import Field, dx, dy
from .grid import Grid

__all__ = ["WeightSpec", "NormSpec", "mu_lambda", "weighted_l2",
           "weighted_l2_profile", "weighted_sobolev", "weighted_pairing"]


@dataclass(frozen=True)
class WeightSpec:
    """Weight parameters (lam, t); lam is the exponent coefficient.

    lam <= 1: positive lam sharpens the Gaussian growth of the weight,
    negative lam gives an integrable weight.  t >= 0 is simulation time.
    """

    lam: float
    t: float

    def __post_init__(self):
        if self.lam > 1.0:
            raise ValueError(f"weight exponent must be <= 1, got {self.lam}")
        if self.t < 0.0:
            raise ValueError(f"time must be >= 0, got {self.t}")


@dataclass(frozen=True)
class NormSpec:
    """Anisotropic Sobolev index pair (m, k) and the weight."""

    m: int
    k: int
    weight: WeightSpec

    def __post_init__(self):
        if not 0 <= self.m <= 8:
            raise ValueError(f"x-derivative count must be in [0, 8], got {self.m}")
        if not 0 <= self.k <= 2:
            raise ValueError(f"y-derivative count must be in [0, 2], got {self.k}")


def mu_lambda(spec: WeightSpec, y):
    """exp(lam * y^2 / (4 <t>))."""
    return np.exp(spec.lam * np.asarray(y, dtype=float) ** 2 / (4.0 * (1.0 + spec.t)))


def _half_weight(grid: Grid, spec: WeightSpec) -> np.ndarray:
    return np.exp(spec.lam * grid.y_nodes ** 2 / (8.0 * (1.0 + spec.t)))


def weighted_l2(h: Field, spec: WeightSpec) -> float:
    """( sum_x dx * int_y mu_lam h^2 dy )^(1/2)."""
    g = h.grid
    fused = h.values * _half_weight(g, spec)[None, :]
    return float(np.sqrt(np.sum(fused * fused @ g.y_quad) * g.dx_spacing))


def weighted_l2_profile(grid: Grid, samples: np.ndarray, spec: WeightSpec) -> float:
    """Weighted L2_y norm of a pure y-profile (no x integration)."""
    fused = np.asarray(samples, dtype=float) * _half_weight(grid, spec)
    return float(np.sqrt((fused * fused) @ grid.y_quad))


def weighted_pairing(h1: Field, h2: Field, spec: WeightSpec) -> float:
    """Weighted inner product int mu_lam h1 h2 dx dy."""
    g = h1.grid
    w = _half_weight(g, spec)
    fused = (h1.values * w[None, :]) * (h2.values * w[None, :])
    return float(np.sum(fused @ g.y_quad) * g.dx_spacing)


def weighted_sobolev(h: Field, norm: NormSpec) -> float:
    """( sum_{i<=m} sum_{j<=k} ||dx^i dy^j h||^2 )^(1/2) in the given weight."""
    total = 0.0
    for j in range(norm.k + 1):
        hj = h if j == 0 else dy(h, j)
        for i in range(norm.m + 1):
            hij = hj if i == 0 else dx(hj, i)
            total += weighted_l2(hij, norm.weight) ** 2
    return float(np.sqrt(total))
