"""Cancellation unknowns u_m, f_m, the linearly-good pair (U, F), the
binomial source terms of their derived evolution equations, and residual
evaluators for those equations on saved solver frames.

The derived equations are the witness of the cancellation structure: the
m-th tangential derivatives lose one derivative term by term, but the
combinations u_m = dx^m u + (dy u/(1+f)) dx^{m-1} g (and the f analogue)
satisfy closed equations whose sources contain only derivatives up to
order m.  The residual evaluators check those closed equations against a
simulated trajectory.

Conventions shared with the solver: v and g are the cumulative integrals
-int_0^y dx(u) and -int_0^y dx(f).  With that choice the exact evolution
equation of g carries one extra y-independent source, the wall flux
dx dy f(x, 0, t); `residual_umfm` adds the induced terms by default
(``boundary_flux=True``), since without them the residual stalls at the
quadratic nonlinearity scale instead of converging with the grid.
"""

from __future__ import annotations

from dataclasses import dataclass
from math import comb
from typing import Sequence

import numpy as np
import scipy.sparse as sp

from .fields import Field, cumint_y, dx, tailint_y
from .grid import Grid
from .solver import FloorViolation, State

__all__ = [
    "GoodUnknowns", "LinearGood", "compute_um_fm", "compute_UF",
    "source_S", "source_S_tilde", "residual_umfm", "residual_UF",
]

_F_FLOOR = 0.25


@dataclass
class GoodUnknowns:
    """The pair (u_m, f_m); m = 0 stores the primitive fields."""

    m: int
    u_m: Field
    f_m: Field


@dataclass
class LinearGood:
    """The linearly-good pair (U, F) = (u, f) minus the lift terms."""

    U: Field
    F: Field


# ---------------------------------------------------------------------------
# shared low-level helpers (ndarray in, ndarray out)
# ---------------------------------------------------------------------------

def _guarded_recip(state: State) -> np.ndarray:
    """The single reciprocal 1/(1+f) every division in this module uses."""
    opf = 1.0 + state.f.values
    m = opf.min()
    if m < _F_FLOOR:
        raise FloorViolation(
            state.t, f"min(1+f) = {m:.6g} below the 1/4 guard")
    return 1.0 / opf


def _dxn(grid: Grid, a: np.ndarray, m: int) -> np.ndarray:
    """m-th spectral x-derivative of a (nx, *) array (axis 0)."""
    if m == 0:
        return a.copy()
    spec = np.fft.rfft(a, axis=0)
    spec *= (1j * grid.kx[:, None]) ** m
    if m % 2 == 1 and grid.nx % 2 == 0:
        spec[-1] = 0.0
    return np.fft.irfft(spec, n=grid.nx, axis=0)


def _dx_stack(grid: Grid, a: np.ndarray, m_hi: int) -> list[np.ndarray]:
    """[a, dx a, ..., dx^m_hi a] from one forward transform."""
    spec = np.fft.rfft(a, axis=0)
    ik = 1j * grid.kx[:, None]
    out = [a]
    for m in range(1, m_hi + 1):
        s = spec * ik ** m
        if m % 2 == 1 and grid.nx % 2 == 0:
            s[-1] = 0.0
        out.append(np.fft.irfft(s, n=grid.nx, axis=0))
    return out


def _apply_y(op: sp.spmatrix, a: np.ndarray) -> np.ndarray:
    return (op @ a.T).T


def _cumint(grid: Grid, a: np.ndarray) -> np.ndarray:
    inc = a @ grid.increments.T
    out = np.zeros_like(a)
    np.cumsum(inc, axis=1, out=out[:, 1:])
    return out


def _tailint(grid: Grid, a: np.ndarray) -> np.ndarray:
    F = _cumint(grid, a)
    return F[:, -1:] - F


def _vg(grid: Grid, u: np.ndarray, f: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    return -_cumint(grid, _dxn(grid, u, 1)), -_cumint(grid, _dxn(grid, f, 1))


def _lowpass(grid: Grid, a: np.ndarray) -> np.ndarray:
    spec = np.fft.rfft(a, axis=0)
    spec[grid.dealias_keep + 1:] = 0.0
    return np.fft.irfft(spec, n=grid.nx, axis=0)


# ---------------------------------------------------------------------------
# good unknowns
# ---------------------------------------------------------------------------

def _um_fm_values(state: State, m: int, recip: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    grid = state.u.grid
    if m == 0:
        return state.u.values.copy(), state.f.values.copy()
    dyu = _apply_y(grid.dy1, state.u.values)
    dyf = _apply_y(grid.dy1, state.f.values)
    g = -_cumint(grid, _dxn(grid, state.f.values, 1))
    gm1 = _dxn(grid, g, m - 1)
    u_m = _dxn(grid, state.u.values, m) + dyu * recip * gm1
    f_m = _dxn(grid, state.f.values, m) + dyf * recip * gm1
    return u_m, f_m


def compute_um_fm(state: State, m: int) -> GoodUnknowns:
    """u_m = dx^m u + (dy u/(1+f)) dx^{m-1} g, and the f analogue.

    m = 0 returns the primitive fields unchanged.  Raises FloorViolation
    when min(1+f) < 1/4, the regime where the transform degenerates.
    """
    if not 0 <= m <= 8:
        raise ValueError(f"m must be in [0, 8], got {m}")
    recip = _guarded_recip(state)
    u_m, f_m = _um_fm_values(state, m, recip)
    grid = state.u.grid
    return GoodUnknowns(m, Field(grid, u_m), Field(grid, f_m))


def compute_UF(state: State) -> tuple[LinearGood, LinearGood]:
    """Both representations of the linearly-good pair.

    direct: U = u + (y/(2<t>)) int_0^y u;  tail: U = u - (y/(2<t>)) int_y^ymax u.
    They agree exactly when each x-column of u has zero y-mean, so the
    discrepancy is a direct readout of the mean drift.
    """
    grid = state.u.grid
    ylift = grid.y_nodes[None, :] / (2.0 * (1.0 + state.t))
    direct = LinearGood(
        U=Field(grid, state.u.values + ylift * cumint_y(state.u).values),
        F=Field(grid, state.f.values + ylift * cumint_y(state.f).values))
    tail = LinearGood(
        U=Field(grid, state.u.values - ylift * tailint_y(state.u).values),
        F=Field(grid, state.f.values - ylift * tailint_y(state.f).values))
    return direct, tail


# ---------------------------------------------------------------------------
# binomial source terms
# ---------------------------------------------------------------------------

def _binom_sum(n: int, k_hi: int, shift: int,
               terms: Sequence[tuple[float, list[np.ndarray], list[np.ndarray]]],
               shape: tuple[int, int]) -> np.ndarray:
    """sum_{k=1}^{k_hi} C(n, k) * sum_j sign_j * A_j[k] * B_j[shift-k].

    One routine instantiates every binomial sum in the derived equations;
    the callers differ only in the (sign, stack, stack) templates.
    """
    out = np.zeros(shape)
    for k in range(1, k_hi + 1):
        w = float(comb(n, k))
        for sign, a_stack, b_stack in terms:
            out += (sign * w) * (a_stack[k] * b_stack[shift - k])
    return out


def _source_values(state: State, m: int, recip: np.ndarray,
                   d2op: sp.spmatrix) -> tuple[np.ndarray, ...]:
    """All six sources (S_1..S_3, tilde S_1..S_3) of the m-th equations."""
    grid = state.u.grid
    u, f = state.u.values, state.f.values
    v, g = _vg(grid, u, f)
    dyu = _apply_y(grid.dy1, u)
    dyf = _apply_y(grid.dy1, f)
    d2yu = _apply_y(d2op, u)
    d2yf = _apply_y(d2op, f)

    Du = _dx_stack(grid, u, m)
    Df = _dx_stack(grid, f, m)
    Dv = _dx_stack(grid, v, m - 1)
    Dg = _dx_stack(grid, g, m - 1)
    Ddyu = _dx_stack(grid, dyu, m - 1)
    Ddyf = _dx_stack(grid, dyf, m - 1)

    shape = u.shape
    S1 = (_binom_sum(m, m, m + 1, [(+1.0, Df, Df), (-1.0, Du, Du)], shape)
          + _binom_sum(m, m - 1, m, [(+1.0, Dg, Ddyf), (-1.0, Dv, Ddyu)], shape))
    S1t = (_binom_sum(m, m, m + 1, [(+1.0, Df, Du), (-1.0, Du, Df)], shape)
           + _binom_sum(m, m - 1, m, [(+1.0, Dg, Ddyu), (-1.0, Dv, Ddyf)], shape))

    I_m = _binom_sum(m - 1, m - 1, m,
                     [(+1.0, Df, Dv), (-1.0, Dg, Du),
                      (-1.0, Du, Dg), (+1.0, Dv, Df)], shape)
    S2 = dyu * recip * I_m
    S2t = dyf * recip * I_m

    xm_f, xm_u, xm1_g = Df[m], Du[m], Dg[m - 1]
    S3 = ((g * dyf * recip + 2.0 * _apply_y(grid.dy1, dyu * recip)) * xm_f
          - g * dyu * recip * xm_u
          - 2.0 * dyf ** 2 * dyu * recip ** 3 * xm1_g
          + ((dyf * Df[1] - dyu * Du[1]) * recip
             + (g * dyf ** 2 - g * dyu ** 2 + 2.0 * dyf * d2yu) * recip ** 2) * xm1_g)
    S3t = ((g * dyu * recip + 2.0 * _apply_y(grid.dy1, dyf * recip)) * xm_f
           - g * dyf * recip * xm_u
           + ((Du[1] * dyf - dyu * Df[1]) * recip
              + 2.0 * dyf * d2yf * recip ** 2
              - 2.0 * dyf ** 3 * recip ** 3) * xm1_g)
    return S1, S2, S3, S1t, S2t, S3t


def source_S(state: State, m: int) -> tuple[Field, Field, Field]:
    """The three sources of the u_m equation (binomial sums, the
    (dy u/(1+f))-weighted commutator sum, and the rational-coefficient
    remainder)."""
    if not 1 <= m <= 8:
        raise ValueError(f"m must be in [1, 8], got {m}")
    recip = _guarded_recip(state)
    grid = state.u.grid
    S1, S2, S3, _, _, _ = _source_values(state, m, recip, grid.dy2)
    return Field(grid, S1), Field(grid, S2), Field(grid, S3)


def source_S_tilde(state: State, m: int) -> tuple[Field, Field, Field]:
    """The three sources of the f_m equation (mirror structure)."""
    if not 1 <= m <= 8:
        raise ValueError(f"m must be in [1, 8], got {m}")
    recip = _guarded_recip(state)
    grid = state.u.grid
    _, _, _, S1t, S2t, S3t = _source_values(state, m, recip, grid.dy2)
    return Field(grid, S1t), Field(grid, S2t), Field(grid, S3t)


# ---------------------------------------------------------------------------
# residual evaluators
# ---------------------------------------------------------------------------

def _check_frames(frames: Sequence[State]) -> tuple[Grid, float]:
    if len(frames) != 3:
        raise ValueError(f"need exactly three frames, got {len(frames)}")
    grid = frames[0].u.grid
    for fr in frames[1:]:
        if fr.u.grid is not grid and (fr.u.grid.nx, fr.u.grid.ny) != (grid.nx, grid.ny):
            raise ValueError("frames live on different grids")
    h1 = frames[1].t - frames[0].t
    h2 = frames[2].t - frames[1].t
    if h1 <= 0 or abs(h2 - h1) > 1e-12 * max(h1, 1.0):
        raise ValueError(
            f"frames must be equally spaced in t, got spacings {h1!r}, {h2!r}")
    return grid, h1


def _select_d2(grid: Grid, y_mode: str) -> sp.spmatrix:
    if y_mode == "consistent":
        return grid.dy2_compact
    if y_mode == "high_order":
        return grid.dy2
    raise ValueError(f"y_mode must be 'consistent' or 'high_order', got {y_mode!r}")


def _finish_residual(grid: Grid, r: np.ndarray) -> Field:
    """Restrict the residual to the evolved degrees of freedom: the
    solver's resolved x-modes and the interior y-rows (the boundary rows
    are held at zero by the scheme, not evolved)."""
    r = _lowpass(grid, r)
    r[:, 0] = 0.0
    r[:, -1] = 0.0
    return Field(grid, r)


def residual_umfm(frames: Sequence[State], m: int, *,
                  y_mode: str = "consistent",
                  boundary_flux: bool = True,
                  _defect: str | None = None) -> tuple[Field, Field]:
    """LHS - RHS of the derived (u_m, f_m) system on three saved frames.

    The time derivative is the centered difference across the outer
    frames; every other term is evaluated on the middle frame.  y_mode
    selects the y-operators: "consistent" uses the 3-point second
    derivative the integrator applies (so the residual measures time
    error at fixed grid), "high_order" uses the wide 4th-order stencils
    (so the residual exposes the integrator's y-truncation error).

    boundary_flux adds the wall-flux sources induced by the cumulative
    v, g convention (see module docstring).  `_defect` is a fault hook
    for self-tests: "flip_S2" negates the commutator sources, which must
    destroy the convergence order.
    """
    if m < 1:
        raise ValueError(f"m must be >= 1 for the derived system, got {m}")
    grid, h = _check_frames(frames)
    d2op = _select_d2(grid, y_mode)
    if _defect not in (None, "flip_S2"):
        raise ValueError(f"unknown defect {_defect!r}")

    rec = [_guarded_recip(fr) for fr in frames]
    um0, fm0 = _um_fm_values(frames[0], m, rec[0])
    um1, fm1 = _um_fm_values(frames[1], m, rec[1])
    um2, fm2 = _um_fm_values(frames[2], m, rec[2])

    mid = frames[1]
    u, f = mid.u.values, mid.f.values
    v, g = _vg(grid, u, f)
    S1, S2, S3, S1t, S2t, S3t = _source_values(mid, m, rec[1], d2op)
    if _defect == "flip_S2":
        S2 = -S2
        S2t = -S2t
    rhs_u = S1 + S2 + S3
    rhs_f = S1t + S2t + S3t

    if boundary_flux:
        dyu = _apply_y(grid.dy1, u)
        dyf = _apply_y(grid.dy1, f)
        wall = _dxn(grid, dyf[:, :1], m)  # dx^m dy f at y = 0, (nx, 1)
        rhs_u = rhs_u + dyu * rec[1] * wall
        rhs_f = rhs_f + dyf * rec[1] * wall

    r_u = ((um2 - um0) / (2.0 * h)
           + u * _dxn(grid, um1, 1) + v * _apply_y(grid.dy1, um1)
           - _apply_y(d2op, um1)
           - (1.0 + f) * _dxn(grid, fm1, 1) - g * _apply_y(grid.dy1, fm1)
           - rhs_u)
    r_f = ((fm2 - fm0) / (2.0 * h)
           + u * _dxn(grid, fm1, 1) + v * _apply_y(grid.dy1, fm1)
           - _apply_y(d2op, fm1)
           - (1.0 + f) * _dxn(grid, um1, 1) - g * _apply_y(grid.dy1, um1)
           - rhs_f)
    return _finish_residual(grid, r_u), _finish_residual(grid, r_f)


def residual_UF(frames: Sequence[State], *,
                y_mode: str = "consistent") -> tuple[Field, Field]:
    """LHS - RHS of the linearly-good system on three saved frames.

    Uses the tail representation U = u - (y/(2<t>)) int_y^ymax u, whose
    evolution equation needs no zero-mean hypothesis.  The damped
    diffusion of U is expanded through the exact identity
    dy^2 U = dy^2 u + u/<t> + (y/(2<t>)) dy u, so the only second
    derivative taken is of the primitive field (selected by y_mode).
    """
    grid, h = _check_frames(frames)
    d2op = _select_d2(grid, y_mode)
    y = grid.y_nodes[None, :]

    def tail_pair(fr: State) -> tuple[np.ndarray, np.ndarray]:
        ylift = y / (2.0 * (1.0 + fr.t))
        return (fr.u.values - ylift * _tailint(grid, fr.u.values),
                fr.f.values - ylift * _tailint(grid, fr.f.values))

    U0, F0 = tail_pair(frames[0])
    U1, F1 = tail_pair(frames[1])
    U2, F2 = tail_pair(frames[2])

    mid = frames[1]
    tt = 1.0 + mid.t
    u, f = mid.u.values, mid.f.values
    v, g = _vg(grid, u, f)
    dxu = _dxn(grid, u, 1)
    dxf = _dxn(grid, f, 1)
    dyu = _apply_y(grid.dy1, u)
    dyf = _apply_y(grid.dy1, f)
    d2U = _apply_y(d2op, u) + u / tt + (y / (2.0 * tt)) * dyu
    d2F = _apply_y(d2op, f) + f / tt + (y / (2.0 * tt)) * dyf

    adv_u = u * dxu + v * dyu        # (u dx + v dy) u
    mag_f = f * dxf + g * dyf        # (f dx + g dy) f
    adv_f = u * dxf + v * dyf        # (u dx + v dy) f
    mag_u = f * dxu + g * dyu        # (f dx + g dy) u

    ylift = y / (2.0 * tt)
    r_U = ((U2 - U0) / (2.0 * h) - d2U + U1 / tt - _dxn(grid, F1, 1)
           + adv_u - mag_f - ylift * _tailint(grid, adv_u - mag_f))
    r_F = ((F2 - F0) / (2.0 * h) - d2F + F1 / tt - _dxn(grid, U1, 1)
           + adv_f - mag_u - ylift * _tailint(grid, adv_f - mag_u))
    return _finish_residual(grid, r_U), _finish_residual(grid, r_F)
