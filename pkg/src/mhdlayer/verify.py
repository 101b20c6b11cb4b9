"""Standalone checkers for the weighted functional inequalities and a
manufactured-solution convergence harness.

The inequality checkers act on y-profiles sampled on a grid's y nodes
and report margins; failures are recorded, never raised (invalid inputs
-- profiles violating the decay hypothesis, or frames that do not solve
the claimed equation -- are rejected with ValueError instead).  The
convergence harness runs forced manufactured problems through the
solver, or unforced small-data trajectories through the derived-equation
residual evaluators, and fits refinement orders.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from typing import Callable, Optional, Sequence

import numpy as np

from .energy import _check_delta
from .fields import Field
from .grid import Grid, build_grid
from .solver import SolverConfig, State, initial_data, run
from .unknowns import residual_UF, residual_umfm
from .weights import WeightSpec, weighted_l2, weighted_l2_profile

__all__ = [
    "InequalityReport", "ResidualReport", "MMSProblem",
    "decaying_profiles", "check_poincare", "check_poincare_weighted_y",
    "check_sup_bound", "check_technical_lemma", "heat_solution_frames",
    "steady_problem", "manufactured_problem", "residual_problem",
    "mms_convergence", "report_json",
]

#: decay-hypothesis enforcement: the profile's weighted edge value must be
#: negligible against its weighted norm.
_DECAY_TOL = 1e-10
#: relative tolerance of the equation pre-check in check_technical_lemma.
_PDE_TOL = 1e-2


@dataclass
class InequalityReport:
    """Outcome of one inequality check.

    margin is (RHS - LHS)/RHS for the Poincare-type checks (raw values
    in inputs), the raw discrete margin for the evolution-inequality
    check (its RHS may vanish identically), and the observed constant
    LHS/(<t>^{1/4} RHS) for the sup bound.  Negative margins are data,
    not errors.
    """

    name: str
    margin: float
    inputs: dict = field(default_factory=dict)


@dataclass
class ResidualReport:
    """Refinement study: (dt, dy, residual) per level plus fitted orders.

    A fitted order is NaN when the corresponding parameter does not vary
    across levels (or a residual is exactly zero).
    """

    equation: str
    levels: list
    fitted_order_dt: float
    fitted_order_dy: float


# ---------------------------------------------------------------------------
# profile family and hypothesis checks
# ---------------------------------------------------------------------------

def decaying_profiles(grid: Grid, count: int, seed: int = 0) -> list[np.ndarray]:
    """The documented test family: spans of y e^{-a y^2}, a in [1/2, 4]."""
    rng = np.random.default_rng(seed)
    y = grid.y_nodes
    out = []
    for _ in range(count):
        h = np.zeros(grid.ny)
        for _ in range(3):
            h += rng.uniform(-1.0, 1.0) * y * np.exp(-rng.uniform(0.5, 4.0) * y * y)
        out.append(h)
    return out


def _require_decay(grid: Grid, h: np.ndarray, spec: WeightSpec) -> float:
    """Enforce the 'decays sufficiently fast' hypothesis on [0, ymax]."""
    norm = weighted_l2_profile(grid, h, spec)
    edge = abs(float(h[-1])) * float(
        np.exp(spec.lam * grid.ymax ** 2 / (8.0 * (1.0 + spec.t))))
    if edge > _DECAY_TOL * norm:
        raise ValueError(
            f"profile does not decay at ymax: weighted edge value {edge:.3e} "
            f"exceeds {_DECAY_TOL:g} * norm ({norm:.3e})")
    return norm


def _dy_profile(grid: Grid, h: np.ndarray) -> np.ndarray:
    return grid.dy1 @ h


# ---------------------------------------------------------------------------
# inequality checkers
# ---------------------------------------------------------------------------

def check_poincare(grid: Grid, h: np.ndarray, lam: float, t: float
                   ) -> InequalityReport:
    """(lam/(2<t>)) |h|^2_{mu_lam} <= |dy h|^2_{mu_lam}, margin normalized."""
    if not 0.0 <= lam <= 1.0:
        raise ValueError(f"lambda must lie in [0, 1], got {lam}")
    spec = WeightSpec(lam, t)
    norm = _require_decay(grid, h, spec)
    lhs = lam / (2.0 * (1.0 + t)) * norm ** 2
    rhs = weighted_l2_profile(grid, _dy_profile(grid, h), spec) ** 2
    margin = (rhs - lhs) / rhs if rhs > 0.0 else 0.0
    return InequalityReport("poincare", float(margin),
                            {"lambda": lam, "t": t, "lhs": lhs, "rhs": rhs})


def check_poincare_weighted_y(grid: Grid, h: np.ndarray, lam: float, t: float
                              ) -> InequalityReport:
    """Two-term variant:
    (sqrt(lam)/(2 sqrt<t>)) |h| + (lam/4) |(y/<t>) h| <= 2 |dy h|,
    all norms in mu_lam; margin normalized by the right side.
    """
    if not 0.0 <= lam <= 1.0:
        raise ValueError(f"lambda must lie in [0, 1], got {lam}")
    spec = WeightSpec(lam, t)
    tt = 1.0 + t
    norm = _require_decay(grid, h, spec)
    ymoment = weighted_l2_profile(grid, (grid.y_nodes / tt) * h, spec)
    lhs = np.sqrt(lam) / (2.0 * np.sqrt(tt)) * norm + (lam / 4.0) * ymoment
    rhs = 2.0 * weighted_l2_profile(grid, _dy_profile(grid, h), spec)
    margin = (rhs - lhs) / rhs if rhs > 0.0 else 0.0
    return InequalityReport("poincare_weighted_y", float(margin),
                            {"lambda": lam, "t": t, "lhs": float(lhs),
                             "rhs": float(rhs)})


def check_sup_bound(grid: Grid, h: np.ndarray, lam: float, t: float
                    ) -> InequalityReport:
    """sup_y mu_{lam/2}|h| <= C_lam <t>^{1/4} |dy h|_{L2 weighted}.

    The squared measure weight of the right-hand norm is mu_{(lam+1)/2}.
    margin reports the observed ratio (the empirical C_lam, 0 for h = 0);
    inputs carries the analytic constant (2 pi/(1-lam))^{1/4} for
    comparison.
    """
    if not 0.0 <= lam < 1.0:
        raise ValueError(f"lambda must lie in [0, 1), got {lam}")
    tt = 1.0 + t
    _require_decay(grid, h, WeightSpec(lam, t))
    lhs = float(np.max(np.abs(h) * np.exp(
        (lam / 2.0) * grid.y_nodes ** 2 / (4.0 * tt))))
    rhs = tt ** 0.25 * weighted_l2_profile(
        grid, _dy_profile(grid, h), WeightSpec((lam + 1.0) / 2.0, t))
    ratio = lhs / rhs if rhs > 0.0 else 0.0
    return InequalityReport(
        "sup_bound", float(ratio),
        {"lambda": lam, "t": t, "lhs_sup": lhs, "rhs": float(rhs),
         "c_theory": float((2.0 * np.pi / (1.0 - lam)) ** 0.25)})


# ---------------------------------------------------------------------------
# evolution-inequality checker
# ---------------------------------------------------------------------------

def heat_solution_frames(grid: Grid, times: Sequence[float], damped: bool = False
                         ) -> tuple[list[np.ndarray], list[np.ndarray]]:
    """Closed-form frames phi = <t>^{-3/2} y e^{-y^2/(4<t>)}, psi = 0.

    With damped=True the frames are divided by <t>, turning the plain
    heat solution into one of the damped equation (extra phi/<t> term).
    """
    y = grid.y_nodes
    phis, psis = [], []
    for t in times:
        tt = 1.0 + t
        phi = tt ** -1.5 * y * np.exp(-y * y / (4.0 * tt))
        if damped:
            phi = phi / tt
        phis.append(phi)
        psis.append(np.zeros_like(phi))
    return phis, psis


def _pair_profile(grid: Grid, a: np.ndarray, b: np.ndarray,
                  spec: WeightSpec) -> float:
    w = np.exp(spec.lam * grid.y_nodes ** 2 / (8.0 * (1.0 + spec.t)))
    return float(((a * w) * (b * w)) @ grid.y_quad)


def check_technical_lemma(grid: Grid, times: Sequence[float],
                          phi_frames: Sequence[np.ndarray],
                          psi_frames: Sequence[np.ndarray],
                          delta: float, damped: bool = False
                          ) -> InequalityReport:
    """Discrete margins of the weighted evolution inequality.

    For (dt - dy^2) phi = psi (damped: an extra phi/<t> on the left) with
    phi dy(phi) = 0 at the wall, check at every interior frame both

        d/dt N + (c - delta)/(2<t>) N + delta |dy phi|^2 <= 2 (psi, phi)
        d/dt (<t>^{(c-delta)/2} N) + delta <t>^{(c-delta)/2} |dy phi|^2
                                   <= 2 <t>^{(c-delta)/2} (psi, phi)

    with N = |phi|^2 in the t-dependent weight, c = 1 (damped: c = 5);
    time derivatives are centered.  Frames whose centered-time equation
    residual exceeds a relative tolerance are rejected: a margin is only
    meaningful for actual solutions.  margin is the raw minimum over
    frames and both forms; per-form minima are in inputs.
    """
    _check_delta(delta)
    times = np.asarray(times, dtype=float)
    if not len(times) == len(phi_frames) == len(psi_frames):
        raise ValueError("times, phi_frames, psi_frames must align")
    if len(times) < 3:
        raise ValueError("need at least three frames")
    steps = np.diff(times)
    h = steps[0]
    if not np.allclose(steps, h, rtol=1e-10):
        raise ValueError("frames must be uniformly spaced in t")

    coeff = 5.0 - delta if damped else 1.0 - delta
    spec = [WeightSpec(1.0, t) for t in times]
    N = np.array([weighted_l2_profile(grid, p, s) ** 2
                  for p, s in zip(phi_frames, spec)])
    W = (1.0 + times) ** (coeff / 2.0) * N

    as1, as2, max_rel = [], [], 0.0
    for n in range(1, len(times) - 1):
        t = times[n]
        tt = 1.0 + t
        phi, psi = phi_frames[n], psi_frames[n]
        wall = abs(float(phi[0])) * abs(float(_dy_profile(grid, phi)[0]))
        scale_w = float(np.abs(phi).max() * np.abs(_dy_profile(grid, phi)).max())
        if wall > 1e-12 * scale_w:
            raise ValueError(f"frame {n}: phi * dy(phi) != 0 at the wall")
        lap = grid.dy2 @ phi
        resid = (phi_frames[n + 1] - phi_frames[n - 1]) / (2.0 * h) - lap - psi
        if damped:
            resid = resid + phi / tt
        rnorm = weighted_l2_profile(grid, resid, spec[n])
        scale = max(weighted_l2_profile(grid, lap, spec[n]),
                    weighted_l2_profile(grid, psi, spec[n]))
        if rnorm > _PDE_TOL * scale:
            raise ValueError(
                f"frame {n} (t={t:g}) does not solve the claimed equation: "
                f"residual {rnorm:.3e} > {_PDE_TOL:g} * {scale:.3e}")
        max_rel = max(max_rel, rnorm / scale if scale > 0 else 0.0)

        dyn = weighted_l2_profile(grid, _dy_profile(grid, phi), spec[n]) ** 2
        pair = _pair_profile(grid, psi, phi, spec[n])
        dN = (N[n + 1] - N[n - 1]) / (2.0 * h)
        as1.append(2.0 * pair - (dN + coeff / (2.0 * tt) * N[n] + delta * dyn))
        tw = tt ** (coeff / 2.0)
        dW = (W[n + 1] - W[n - 1]) / (2.0 * h)
        as2.append(2.0 * tw * pair - (dW + delta * tw * dyn))

    name = "technical_lemma_damped" if damped else "technical_lemma"
    return InequalityReport(
        name, float(min(min(as1), min(as2))),
        {"delta": delta, "damped": damped, "frames": int(len(times)),
         "min_plain": float(min(as1)), "min_weighted": float(min(as2)),
         "argmin_t": float(times[1 + int(np.argmin(as1))]),
         "pde_residual_max_rel": float(max_rel)})


# ---------------------------------------------------------------------------
# manufactured problems
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class MMSProblem:
    """A refinement-study problem.

    Solution-error studies set `exact` (fields at any t) and `forcing`
    (grid -> time-callable source pair); the study integrates from the
    exact initial data and measures the plain-L2 solution error at
    t_end.  Residual studies set `residual` to ("um_fm", m) or ("UF",)
    instead: the study runs unforced small data of size epsilon to
    t_end and evaluates the derived-equation residual there.
    """

    name: str
    nx: int
    t_end: float
    exact: Optional[Callable] = None
    forcing: Optional[Callable] = None
    residual: Optional[tuple] = None
    epsilon: float = 1e-3
    seed: int = 0
    y_order: int = 4
    y_mode: str = "high_order"
    ymax: float = 12.0


def steady_problem(epsilon: float = 1e-3) -> MMSProblem:
    """x-independent steady cubic: every operator in the default scheme
    is exact on it, so the solver must reproduce it to rounding."""

    def exact(grid: Grid, t: float):
        y = grid.y_nodes
        q = (-y ** 3 + 16.0 * y ** 2 - 48.0 * y) * (epsilon / 140.0)
        u = np.broadcast_to(q, (grid.nx, grid.ny)).copy()
        return u, np.zeros_like(u)

    def forcing(grid: Grid):
        y = grid.y_nodes
        fu = np.broadcast_to((6.0 * y - 32.0) * (epsilon / 140.0),
                             (grid.nx, grid.ny)).copy()
        ff = np.zeros((grid.nx, grid.ny))
        return lambda t: (fu, ff)

    return MMSProblem(name="steady_cubic", nx=16, t_end=1.0,
                      exact=exact, forcing=forcing, epsilon=epsilon, y_order=2)


def manufactured_problem(epsilon: float = 1e-3) -> MMSProblem:
    """Fully coupled single-mode problem
    u = eps sin(x) y e^{-y^2} e^{-t},  f = eps cos(x) y e^{-y^2} e^{-t},
    with the compatible forcing (normal components from the cumulative
    integrals of -dx u, -dx f).
    """

    def exact(grid: Grid, t: float):
        X = grid.x_nodes[:, None]
        Y = grid.y_nodes[None, :]
        P = Y * np.exp(-Y ** 2)
        amp = epsilon * np.exp(-t)
        return amp * np.sin(X) * P, amp * np.cos(X) * P

    def forcing(grid: Grid):
        X = grid.x_nodes[:, None]
        Y = grid.y_nodes[None, :]
        P = Y * np.exp(-Y ** 2)
        Pp = (1.0 - 2.0 * Y ** 2) * np.exp(-Y ** 2)
        Ppp = (4.0 * Y ** 3 - 6.0 * Y) * np.exp(-Y ** 2)
        Q = (1.0 - np.exp(-Y ** 2)) / 2.0
        s, c = np.sin(X), np.cos(X)

        def F(t: float):
            amp = epsilon * np.exp(-t)
            fu = -amp * s * Ppp + 2.0 * amp ** 2 * s * c * (P ** 2 - Q * Pp)
            ff = -2.0 * amp * c * P - amp * c * Ppp - amp ** 2 * (P ** 2 + Q * Pp)
            return fu, ff

        return F

    return MMSProblem(name="gaussian_mode", nx=16, t_end=0.2,
                      exact=exact, forcing=forcing, epsilon=epsilon)


def residual_problem(target, epsilon: float = 1e-3, seed: int = 0,
                     nx: int = 32, t_mid: float = 0.02,
                     y_order: int = 2, y_mode: str = "consistent"
                     ) -> MMSProblem:
    """Residual study on an unforced small-data trajectory.

    target: an integer m (the cancellation-unknown pair u_m/f_m) or the
    string "UF" (the linearly-good pair).
    """
    if target == "UF":
        residual = ("UF",)
        name = "residual_UF"
    else:
        residual = ("um_fm", int(target))
        name = f"residual_umfm_m{int(target)}"
    return MMSProblem(name=name, nx=nx, t_end=t_mid, residual=residual,
                      epsilon=epsilon, seed=seed, y_order=y_order,
                      y_mode=y_mode)


# ---------------------------------------------------------------------------
# refinement harness
# ---------------------------------------------------------------------------

def _validate_levels(levels: Sequence[tuple[float, float]]) -> None:
    if len(levels) < 2:
        raise ValueError("need at least two refinement levels")
    for (dt0, dy0), (dt1, dy1) in zip(levels, levels[1:]):
        if dt1 > dt0 or dy1 > dy0 or (dt1, dy1) == (dt0, dy0):
            raise ValueError(
                "non-monotone refinement input: "
                f"({dt1}, {dy1}) does not refine ({dt0}, {dy0})")


def _fit_order(params: np.ndarray, vals: np.ndarray) -> float:
    if params.max() <= params.min() * (1.0 + 1e-12):
        return float("nan")
    if np.any(vals <= 0.0):
        return float("nan")
    return float(np.polyfit(np.log(params), np.log(vals), 1)[0])


def _solution_error(problem: MMSProblem, grid: Grid, dt: float) -> float:
    u0, f0 = problem.exact(grid, 0.0)
    state = State(0.0, Field(grid, u0), Field(grid, f0))
    cfg = SolverConfig(dt=dt, t_end=problem.t_end, save_every=10 ** 9,
                       y_order=problem.y_order)
    res = run(state, cfg, forcing=problem.forcing(grid))
    ue, fe = problem.exact(grid, res.state.t)
    w = WeightSpec(0.0, res.state.t)
    return float(np.hypot(
        weighted_l2(Field(grid, res.state.u.values - ue), w),
        weighted_l2(Field(grid, res.state.f.values - fe), w)))


def _residual_norm(problem: MMSProblem, grid: Grid, dt: float,
                   defect: Optional[str]) -> float:
    state = initial_data(grid, problem.epsilon, seed=problem.seed)
    cfg = SolverConfig(dt=dt, t_end=problem.t_end + dt, save_every=1,
                       y_order=problem.y_order)
    frames = run(state, cfg).frames
    n = round(problem.t_end / dt)
    triple = frames[n - 1:n + 2]
    if problem.residual[0] == "um_fm":
        ru, rf = residual_umfm(triple, problem.residual[1],
                               y_mode=problem.y_mode, _defect=defect)
    else:
        if defect is not None:
            raise ValueError("defect injection applies to u_m/f_m residuals")
        ru, rf = residual_UF(triple, y_mode=problem.y_mode)
    w = WeightSpec(1.0, problem.t_end)
    return float(np.hypot(weighted_l2(ru, w), weighted_l2(rf, w)))


def mms_convergence(problem: MMSProblem,
                    levels: Sequence[tuple[float, float]],
                    defect: Optional[str] = None) -> ResidualReport:
    """Run the problem at each (dt, dy) level and fit refinement orders.

    dy must divide ymax into a whole number of intervals.  `defect` is
    threaded into the residual evaluator (detector self-tests); it is
    rejected for solution-error studies, which do not involve the
    source-term expansions.
    """
    _validate_levels(levels)
    if problem.residual is None:
        if problem.exact is None or problem.forcing is None:
            raise ValueError("a solution-error problem supplies exact "
                             "fields and compatible forcing")
        if defect is not None:
            raise ValueError("defect injection applies to u_m/f_m residuals")
    out = []
    for dt, dyy in levels:
        ny = round(problem.ymax / dyy) + 1
        if abs((ny - 1) * dyy - problem.ymax) > 1e-9:
            raise ValueError(f"dy={dyy} does not divide ymax={problem.ymax}")
        grid = build_grid(problem.nx, ny, ymax=problem.ymax)
        if problem.residual is None:
            val = _solution_error(problem, grid, dt)
        else:
            val = _residual_norm(problem, grid, dt, defect)
        out.append((float(dt), float(dyy), val))
    arr = np.array(out)
    return ResidualReport(
        equation=problem.name,
        levels=[tuple(level) for level in out],
        fitted_order_dt=_fit_order(arr[:, 0], arr[:, 2]),
        fitted_order_dy=_fit_order(arr[:, 1], arr[:, 2]))


# ---------------------------------------------------------------------------
# JSON emission
# ---------------------------------------------------------------------------

def report_json(reports: Sequence, metadata: dict) -> str:
    """Consolidated, deterministic JSON document for a verification run."""
    entries = []
    for r in reports:
        if isinstance(r, InequalityReport):
            entries.append({"kind": "inequality", "name": r.name,
                            "margin": r.margin, "inputs": r.inputs})
        elif isinstance(r, ResidualReport):
            entries.append({"kind": "residual", "equation": r.equation,
                            "levels": [list(level) for level in r.levels],
                            "fitted_order_dt": r.fitted_order_dt,
                            "fitted_order_dy": r.fitted_order_dy})
        else:
            raise TypeError(f"unknown report type {type(r).__name__}")
    doc = {"format_version": 1, "metadata": metadata, "reports": entries}
    return json.dumps(doc, sort_keys=True, indent=2, allow_nan=True)
