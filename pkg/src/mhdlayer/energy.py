"""Energy and dissipation bookkeeping, bootstrap-inequality checking,
decay-exponent fitting, and norm-comparison diagnostics.

The energy couples nine cancellation-unknown terms (m = 0..8, decay
like a heat flow) with two linearly-good terms (k = 0, 1, damped heat
flow, faster decay); the dissipation carries the matching delta-weighted
y-derivative norms.  All good-unknown y-derivatives are evaluated
through the exact lift identities

    dy U   = dy u   - (1/(2<t>)) T(u) + (y/(2<t>)) u
    dy^2 U = dy^2 u + u/<t>           + (y/(2<t>)) dy u

with T the tail integral, so no finite-difference operator is applied
to the (smooth but nonlocal) tail term itself.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Iterable, Sequence

import numpy as np

from .fields import Field, dx, dy, total_y
from .solver import State
from .unknowns import _apply_y, _cumint, _dx_stack, _guarded_recip, _tailint
from .weights import NormSpec, WeightSpec, weighted_l2, weighted_sobolev

__all__ = [
    "DELTA_MAX", "FRAME_SCHEMA_VERSION", "EnergyBudget", "DiagnosticsFrame",
    "energy", "diagnostics_frame", "bootstrap_check", "fit_decay",
    "norm_comparison", "frame_csv_header", "frame_csv_row",
]

DELTA_MAX = 1.0 / 25.0
FRAME_SCHEMA_VERSION = 1

#: x-derivative orders entering the good-unknown Sobolev norms.
_SOBOLEV_X = 5
#: highest cancellation-unknown order.
_M_MAX = 8
#: weight parameter for the lambda-weighted diagnostic norms.
_LAMBDA_DIAG = 0.5


@dataclass
class EnergyBudget:
    """One evaluation of the energy/dissipation pair with its summands.

    components holds every labeled summand: E_m{m} and D_m{m} for the
    cancellation-unknown terms, E_good_k{k} and D_good_k{k} for the
    linearly-good terms.  E_delta (D_delta) equals the sum of its E_*
    (D_*) entries to roundoff.
    """

    t: float
    E_delta: float
    D_delta: float
    components: dict[str, float]
    delta: float


@dataclass
class DiagnosticsFrame:
    """Everything the monitor records per saved frame."""

    t: float
    budget: EnergyBudget
    primitive_norms: dict[str, float]
    good_norms: dict[str, float]
    ratios: dict[str, float]
    mean_drift: dict[str, float]
    f_range: tuple[float, float]


def _check_delta(delta: float) -> None:
    if not 0.0 < delta <= DELTA_MAX:
        raise ValueError(f"delta must lie in (0, 1/25], got {delta}")


def _good_pair(state: State) -> tuple[list[np.ndarray], list[np.ndarray]]:
    """[U, dy U, dy^2 U] and the F analogue via the lift identities."""
    grid = state.u.grid
    tt = 1.0 + state.t
    y = grid.y_nodes[None, :]
    out = []
    for h in (state.u, state.f):
        vals = h.values
        tail = _tailint(grid, vals)
        d1 = _apply_y(grid.dy1, vals)
        d2 = _apply_y(grid.dy2, vals)
        out.append([
            vals - (y / (2.0 * tt)) * tail,
            d1 - tail / (2.0 * tt) + (y / (2.0 * tt)) * vals,
            d2 + vals / tt + (y / (2.0 * tt)) * d1,
        ])
    return out[0], out[1]


def _um_fm_all(state: State) -> tuple[list[np.ndarray], list[np.ndarray]]:
    """u_m and f_m for every m = 0..8 from shared derivative stacks."""
    grid = state.u.grid
    recip = _guarded_recip(state)
    u, f = state.u.values, state.f.values
    Du = _dx_stack(grid, u, _M_MAX)
    Df = _dx_stack(grid, f, _M_MAX)
    g = -_cumint(grid, Df[1])
    Dg = _dx_stack(grid, g, _M_MAX - 1)
    cu = _apply_y(grid.dy1, u) * recip
    cf = _apply_y(grid.dy1, f) * recip
    um = [Du[0]] + [Du[m] + cu * Dg[m - 1] for m in range(1, _M_MAX + 1)]
    fm = [Df[0]] + [Df[m] + cf * Dg[m - 1] for m in range(1, _M_MAX + 1)]
    return um, fm


def energy(state: State, delta: float) -> EnergyBudget:
    """The energy/dissipation pair of the state, with every summand.

    E  = sum_m <t>^{(1-d)/2} |(u_m, f_m)|^2_{L2_mu}
       + sum_k (d/2)^k <t>^{(5-d)/2+k} |(dy^k U, dy^k F)|^2_{H50_mu}
    D  = sum_m d <t>^{(1-d)/2} |(dy u_m, dy f_m)|^2_{L2_mu}
       + sum_k (d/2)^{k+1} <t>^{(5-d)/2+k} |(dy^{k+1} U, dy^{k+1} F)|^2_{H50_mu}
    """
    _check_delta(delta)
    grid = state.u.grid
    t = state.t
    tt = 1.0 + t
    w = WeightSpec(1.0, t)
    sob = NormSpec(_SOBOLEV_X, 0, w)

    def l2sq(vals: np.ndarray) -> float:
        return weighted_l2(Field(grid, vals), w) ** 2

    def sobsq(vals: np.ndarray) -> float:
        return weighted_sobolev(Field(grid, vals), sob) ** 2

    um, fm = _um_fm_all(state)
    comp: dict[str, float] = {}
    low_weight = tt ** ((1.0 - delta) / 2.0)
    for m in range(_M_MAX + 1):
        comp[f"E_m{m}"] = low_weight * (l2sq(um[m]) + l2sq(fm[m]))
        comp[f"D_m{m}"] = delta * low_weight * (
            l2sq(_apply_y(grid.dy1, um[m])) + l2sq(_apply_y(grid.dy1, fm[m])))

    goodU, goodF = _good_pair(state)
    for k in (0, 1):
        good_weight = tt ** ((5.0 - delta) / 2.0 + k)
        comp[f"E_good_k{k}"] = (delta / 2.0) ** k * good_weight * (
            sobsq(goodU[k]) + sobsq(goodF[k]))
        comp[f"D_good_k{k}"] = (delta / 2.0) ** (k + 1) * good_weight * (
            sobsq(goodU[k + 1]) + sobsq(goodF[k + 1]))

    E = sum(v for k, v in comp.items() if k.startswith("E_"))
    D = sum(v for k, v in comp.items() if k.startswith("D_"))
    return EnergyBudget(t=t, E_delta=E, D_delta=D, components=comp, delta=delta)


def norm_comparison(state: State, lam: float = _LAMBDA_DIAG) -> dict[str, float]:
    """Ratios bounded by the (unquantified) comparison constants.

    For k = 0, 1, 2:  |dy^k u|_{H50_mu_lam} / |dy^k U|_{H50_mu} and the
    f/F analogue; for m = 1..8:  |dx^m u|_{L2_mu} / |u_m|_{L2_mu} and
    the f analogue.  Ratios where both sides are below 1e-14 report 0.
    """
    if not 0.0 <= lam < 1.0:
        raise ValueError(f"lambda must lie in [0, 1), got {lam}")
    grid = state.u.grid
    t = state.t
    w1 = WeightSpec(1.0, t)
    wlam = WeightSpec(lam, t)
    sob_lam = NormSpec(_SOBOLEV_X, 0, wlam)
    sob_mu = NormSpec(_SOBOLEV_X, 0, w1)

    def guarded(num: float, den: float) -> float:
        if num < 1e-14 and den < 1e-14:
            return 0.0
        return num / den if den > 0.0 else float("inf")

    goodU, goodF = _good_pair(state)
    out: dict[str, float] = {}
    for name, h, good in (("u", state.u, goodU), ("f", state.f, goodF)):
        for k in (0, 1, 2):
            hk = h if k == 0 else dy(h, k)
            num = weighted_sobolev(hk, sob_lam)
            den = weighted_sobolev(Field(grid, good[k]), sob_mu)
            out[f"ratio_{name}_dy{k}"] = guarded(num, den)

    um, fm = _um_fm_all(state)
    for name, h, hm in (("u", state.u, um), ("f", state.f, fm)):
        for m in range(1, _M_MAX + 1):
            num = weighted_l2(dx(h, m), w1)
            den = weighted_l2(Field(grid, hm[m]), w1)
            out[f"ratio_{name}_x{m}"] = guarded(num, den)
    return out


def diagnostics_frame(state: State, delta: float,
                      lam: float = _LAMBDA_DIAG) -> DiagnosticsFrame:
    """Budget plus the primitive/good norms, ratios, drift, and f-range."""
    grid = state.u.grid
    t = state.t
    w1 = WeightSpec(1.0, t)
    wlam = WeightSpec(lam, t)
    budget = energy(state, delta)

    primitive: dict[str, float] = {}
    for name, h in (("u", state.u), ("f", state.f)):
        primitive[f"{name}_H80_mu"] = weighted_sobolev(h, NormSpec(8, 0, w1))
        for k in (0, 1, 2):
            hk = h if k == 0 else dy(h, k)
            primitive[f"{name}_dy{k}_H50_mulam"] = weighted_sobolev(
                hk, NormSpec(_SOBOLEV_X, 0, wlam))

    goodU, goodF = _good_pair(state)
    good: dict[str, float] = {}
    for name, stack in (("U", goodU), ("F", goodF)):
        for k in (0, 1, 2):
            good[f"{name}_dy{k}_H50_mu"] = weighted_sobolev(
                Field(grid, stack[k]), NormSpec(_SOBOLEV_X, 0, w1))

    opf = 1.0 + state.f.values
    return DiagnosticsFrame(
        t=t,
        budget=budget,
        primitive_norms=primitive,
        good_norms=good,
        ratios=norm_comparison(state, lam),
        mean_drift={"u": float(np.abs(total_y(state.u)).max()),
                    "f": float(np.abs(total_y(state.f)).max())},
        f_range=(float(opf.min()), float(opf.max())),
    )


def bootstrap_check(budgets: Sequence[EnergyBudget]) -> float:
    """Margin of the integrated smallness inequality along a trajectory.

    With eps^2 := E(t_0), returns min over later frames of
    eps^2 - [E(t) + 1/2 int_{t_0}^t D], the time integral by the
    trapezoid rule.  Positive margin means the trajectory stays inside
    the ball it started in; the initial frame (margin identically 0)
    is excluded from the min.
    """
    if len(budgets) < 2:
        raise ValueError("bootstrap check needs at least two frames")
    t = np.array([b.t for b in budgets])
    if np.any(np.diff(t) <= 0):
        raise ValueError("frames must be strictly increasing in t")
    deltas = {b.delta for b in budgets}
    if len(deltas) != 1:
        raise ValueError(f"frames mix different delta values: {sorted(deltas)}")
    E = np.array([b.E_delta for b in budgets])
    D = np.array([b.D_delta for b in budgets])
    half_int = 0.5 * np.concatenate(
        ([0.0], np.cumsum(np.diff(t) * (D[1:] + D[:-1]) / 2.0)))
    margins = E[0] - (E + half_int)
    return float(margins[1:].min())


def fit_decay(series: Iterable[tuple[float, float]],
              window: tuple[float, float]) -> float:
    """Least-squares slope of log(value) against log(<t>) on the window.

    A value decaying exactly like <t>^p fits slope p to roundoff.
    """
    t0, t1 = window
    if not t1 > t0 >= 1.0:
        raise ValueError(f"window must satisfy t1 > t0 >= 1, got {window}")
    pts = [(t, v) for t, v in series if t0 <= t <= t1]
    if len(pts) < 2:
        raise ValueError(f"need at least two samples inside {window}")
    t = np.array([p[0] for p in pts])
    v = np.array([p[1] for p in pts])
    if np.any(v <= 0):
        raise ValueError("decay fit requires positive values")
    return float(np.polyfit(np.log1p(t), np.log(v), 1)[0])


# ---------------------------------------------------------------------------
# CSV emission
# ---------------------------------------------------------------------------

def _frame_columns(frame: DiagnosticsFrame) -> list[tuple[str, float]]:
    cols: list[tuple[str, float]] = [
        ("t", frame.t),
        ("E_delta", frame.budget.E_delta),
        ("D_delta", frame.budget.D_delta),
    ]
    for m in range(_M_MAX + 1):
        cols.append((f"E_m{m}", frame.budget.components[f"E_m{m}"]))
    for k in (0, 1):
        cols.append((f"E_good_k{k}", frame.budget.components[f"E_good_k{k}"]))
    for m in range(_M_MAX + 1):
        cols.append((f"D_m{m}", frame.budget.components[f"D_m{m}"]))
    for k in (0, 1):
        cols.append((f"D_good_k{k}", frame.budget.components[f"D_good_k{k}"]))
    for key in sorted(frame.primitive_norms):
        cols.append((key, frame.primitive_norms[key]))
    for key in sorted(frame.good_norms):
        cols.append((key, frame.good_norms[key]))
    for key in sorted(frame.ratios):
        cols.append((key, frame.ratios[key]))
    cols.append(("drift_u", frame.mean_drift["u"]))
    cols.append(("drift_f", frame.mean_drift["f"]))
    cols.append(("f_min", frame.f_range[0]))
    cols.append(("f_max", frame.f_range[1]))
    return cols


def frame_csv_header(frame: DiagnosticsFrame) -> str:
    """Schema comment plus the column-name line for this frame layout."""
    names = ",".join(name for name, _ in _frame_columns(frame))
    return (f"# mhdlayer frame schema v{FRAME_SCHEMA_VERSION} "
            f"delta={frame.budget.delta!r}\n{names}")


def frame_csv_row(frame: DiagnosticsFrame) -> str:
    return ",".join(repr(float(v)) for _, v in _frame_columns(frame))
