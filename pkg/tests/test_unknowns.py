"""Good-unknown transforms, source terms, and derived-equation residuals."""

import numpy as np
import pytest
import sympy as spy

import mhdlayer as ml
from mhdlayer.fields import dx as field_dx
from mhdlayer.solver import FloorViolation, SolverConfig, State, initial_data, run
from mhdlayer.unknowns import (compute_UF, compute_um_fm, residual_UF,
                               residual_umfm, source_S, source_S_tilde)
from mhdlayer.weights import WeightSpec, weighted_l2, weighted_pairing


def _single_mode_state(grid, a=1.0, b=1e-3, t=0.0):
    u = ml.from_function(grid, lambda X, Y: a * np.sin(X) * Y * np.exp(-Y**2))
    f = ml.from_function(grid, lambda X, Y: b * np.sin(X) * Y * np.exp(-Y**2))
    return State(t, u, f)


def _random_band_limited(grid, seed, amp=1e-2, modes=5):
    rng = np.random.default_rng(seed)
    X = grid.x_nodes[:, None]
    Y = grid.y_nodes[None, :]
    vals = np.zeros((grid.nx, grid.ny))
    for k in range(1, modes + 1):
        vals += (rng.normal() * np.cos(k * X + rng.uniform(0, 2 * np.pi))
                 * Y * np.exp(-(0.5 + 0.1 * k) * Y**2))
    return ml.Field(grid, amp * vals)


def _frames_at(nx, ny, dt, t_mid, eps=1e-3, seed=0):
    """Three consecutive frames centered at t_mid from a fresh run."""
    grid = ml.build_grid(nx, ny)
    state0 = initial_data(grid, eps, seed=seed)
    cfg = SolverConfig(dt=dt, t_end=t_mid + dt, save_every=1)
    frames = run(state0, cfg).frames
    n = round(t_mid / dt)
    return frames[n - 1], frames[n], frames[n + 1]


# ---------------------------------------------------------------------------
# compute_um_fm
# ---------------------------------------------------------------------------

def test_um_fm_m0_is_bit_identical():
    grid = ml.build_grid(16, 129)
    state = _single_mode_state(grid)
    good = compute_um_fm(state, 0)
    assert good.m == 0
    assert np.array_equal(good.u_m.values, state.u.values)
    assert np.array_equal(good.f_m.values, state.f.values)


@pytest.mark.parametrize("m", [1, 2, 3, 4])
def test_um_fm_reduces_to_dxm_when_f_vanishes(m):
    # g == 0 makes the correction term vanish exactly, term by term.
    grid = ml.build_grid(16, 129)
    u = ml.from_function(grid, lambda X, Y: np.sin(X) * Y * np.exp(-Y**2))
    state = State(0.0, u, ml.zeros(grid))
    good = compute_um_fm(state, m)
    assert np.array_equal(good.u_m.values, field_dx(u, m).values)
    assert not good.f_m.values.any()


def test_um_fm_symbolic_oracle_m1():
    # u = sin(x) y e^{-y^2}, f = 1e-3 u: the m=1 transform has the closed
    # form dx u + (dy u/(1+f)) * (-1e-3 cos(x) (1-e^{-y^2})/2).
    grid = ml.build_grid(32, 257)
    state = _single_mode_state(grid, a=1.0, b=1e-3)
    good = compute_um_fm(state, 1)
    X = grid.x_nodes[:, None]
    Y = grid.y_nodes[None, :]
    dxu = np.cos(X) * Y * np.exp(-Y**2)
    dyu = np.sin(X) * (1 - 2 * Y**2) * np.exp(-Y**2)
    g = -1e-3 * np.cos(X) * (1 - np.exp(-Y**2)) / 2
    oracle = dxu + dyu / (1 + state.f.values) * g
    assert np.abs(good.u_m.values - oracle).max() < 1e-7


@pytest.mark.parametrize("m", [1, 2, 3, 4])
def test_um_fm_symmetric_fields_coincide(m):
    # u == f collapses the two transforms onto the same expression.
    grid = ml.build_grid(16, 129)
    h = _random_band_limited(grid, seed=m, amp=0.1)
    state = State(0.0, h, h.copy())
    good = compute_um_fm(state, m)
    assert np.array_equal(good.u_m.values, good.f_m.values)


def test_um_fm_guard_and_range():
    grid = ml.build_grid(16, 129)
    deep = ml.from_function(grid, lambda X, Y: -0.9 * np.exp(-((Y - 3) ** 2)))
    state = State(0.0, ml.zeros(grid), deep)
    with pytest.raises(FloorViolation):
        compute_um_fm(state, 1)
    ok = _single_mode_state(grid)
    with pytest.raises(ValueError):
        compute_um_fm(ok, 9)
    with pytest.raises(ValueError):
        compute_um_fm(ok, -1)


# ---------------------------------------------------------------------------
# compute_UF
# ---------------------------------------------------------------------------

def test_UF_zero_state():
    grid = ml.build_grid(16, 129)
    direct, tail = compute_UF(State(0.0, ml.zeros(grid), ml.zeros(grid)))
    assert not direct.U.values.any() and not direct.F.values.any()
    assert not tail.U.values.any() and not tail.F.values.any()


def test_UF_direct_antiderivative_oracle():
    # cumint of sin(x)(1-2y^2)e^{-y^2} is sin(x) y e^{-y^2}, so the direct
    # form at t=0 is sin(x) e^{-y^2} (1 - 3y^2/2).
    grid = ml.build_grid(32, 257)
    u = ml.from_function(grid, lambda X, Y: np.sin(X) * (1 - 2 * Y**2) * np.exp(-Y**2))
    direct, _ = compute_UF(State(0.0, u, ml.zeros(grid)))
    X = grid.x_nodes[:, None]
    Y = grid.y_nodes[None, :]
    oracle = np.sin(X) * np.exp(-Y**2) * (1 - 1.5 * Y**2)
    assert np.abs(direct.U.values - oracle).max() < 1e-6


def test_UF_direct_tail_agree_for_zero_mean_columns():
    grid = ml.build_grid(32, 257)
    u = ml.from_function(grid, lambda X, Y: np.sin(X) * (1 - 2 * Y**2) * np.exp(-Y**2))
    direct, tail = compute_UF(State(0.0, u, ml.zeros(grid)))
    assert np.abs(direct.U.values - tail.U.values).max() < 1e-6


def test_UF_wall_values_vanish():
    grid = ml.build_grid(16, 129)
    state = _single_mode_state(grid, t=0.7)
    direct, tail = compute_UF(state)
    for lg in (direct, tail):
        assert np.abs(lg.U.values[:, 0]).max() == 0.0
        assert np.abs(lg.F.values[:, 0]).max() == 0.0


def test_UF_form_gap_is_bounded_by_mean_drift():
    # direct - tail = (y/(2<t>)) * columnwise mean, so the unweighted L2
    # gap is at most (ymax/(2<t>)) * max|mean| * sqrt(lx*ymax).
    grid = ml.build_grid(16, 129)
    t = 0.3
    u = ml.from_function(grid, lambda X, Y: (1 + 0.5 * np.sin(X)) * np.exp(-Y**2) * Y)
    state = State(t, u, ml.zeros(grid))
    direct, tail = compute_UF(state)
    gap = ml.Field(grid, direct.U.values - tail.U.values)
    drift = np.abs(ml.fields.total_y(u)).max()
    bound = (grid.ymax / (2 * (1 + t))) * drift * np.sqrt(grid.lx * grid.ymax)
    assert weighted_l2(gap, WeightSpec(0.0, t)) <= bound


# ---------------------------------------------------------------------------
# source terms
# ---------------------------------------------------------------------------

@pytest.mark.parametrize("m", [1, 2, 3])
def test_sources_zero_state(m):
    grid = ml.build_grid(16, 129)
    state = State(0.0, ml.zeros(grid), ml.zeros(grid))
    for term in source_S(state, m) + source_S_tilde(state, m):
        assert not term.values.any()


@pytest.mark.parametrize("m", [1, 2, 3])
def test_sources_vanish_for_x_independent_state(m):
    # Every term carries an x-derivative of u, f, v, or g, and v = g = 0.
    grid = ml.build_grid(16, 129)
    u = ml.from_function(grid, lambda X, Y: Y * np.exp(-Y**2) + 0.0 * X)
    f = ml.from_function(grid, lambda X, Y: 0.5 * Y * np.exp(-Y**2) + 0.0 * X)
    state = State(0.0, u, f)
    for term in source_S(state, m) + source_S_tilde(state, m):
        assert np.abs(term.values).max() < 1e-12


def test_source_S11_single_mode_oracle():
    # f == 0, u = sin(x) p(y), m = 1: S1 = -(dx u)^2 = -cos^2(x) p^2 and
    # the other two sources are exactly zero (empty sums, zero factors).
    grid = ml.build_grid(32, 257)
    u = ml.from_function(grid, lambda X, Y: np.sin(X) * Y * np.exp(-Y**2))
    state = State(0.0, u, ml.zeros(grid))
    S1, S2, S3 = source_S(state, 1)
    X = grid.x_nodes[:, None]
    Y = grid.y_nodes[None, :]
    oracle = -(np.cos(X) * Y * np.exp(-Y**2)) ** 2
    assert np.abs(S1.values - oracle).max() < 1e-13
    assert not S2.values.any()
    assert not S3.values.any()


@pytest.mark.parametrize("m", [1, 2])
def test_sources_symbolic_oracle(m):
    # Independent sympy composition of all six source terms on a
    # two-mode state whose v, g have closed antiderivatives.
    grid = ml.build_grid(32, 257)
    xs, ys = spy.symbols("x y", real=True)
    a, b = spy.Rational(2, 5), spy.Rational(3, 10)
    p = ys * spy.exp(-(ys**2))
    P = (1 - spy.exp(-(ys**2))) / 2
    u_s, f_s = a * spy.sin(xs) * p, b * spy.cos(xs) * p
    v_s, g_s = -a * spy.cos(xs) * P, b * spy.sin(xs) * P
    rec = 1 / (1 + f_s)
    dyu, dyf = spy.diff(u_s, ys), spy.diff(f_s, ys)
    d2yu, d2yf = spy.diff(u_s, ys, 2), spy.diff(f_s, ys, 2)

    def DX(h, k):
        return spy.diff(h, xs, k) if k else h

    S1 = sum(spy.binomial(m, k) * (DX(f_s, k) * DX(f_s, m - k + 1)
                                   - DX(u_s, k) * DX(u_s, m - k + 1))
             for k in range(1, m + 1))
    S1 += sum(spy.binomial(m, k) * (DX(g_s, k) * DX(dyf, m - k)
                                    - DX(v_s, k) * DX(dyu, m - k))
              for k in range(1, m))
    S1t = sum(spy.binomial(m, k) * (DX(f_s, k) * DX(u_s, m - k + 1)
                                    - DX(u_s, k) * DX(f_s, m - k + 1))
              for k in range(1, m + 1))
    S1t += sum(spy.binomial(m, k) * (DX(g_s, k) * DX(dyu, m - k)
                                     - DX(v_s, k) * DX(dyf, m - k))
               for k in range(1, m))
    I_m = sum(spy.binomial(m - 1, k) * (DX(f_s, k) * DX(v_s, m - k)
                                        - DX(g_s, k) * DX(u_s, m - k)
                                        - DX(u_s, k) * DX(g_s, m - k)
                                        + DX(v_s, k) * DX(f_s, m - k))
              for k in range(1, m))
    S2, S2t = dyu * rec * I_m, dyf * rec * I_m
    S3 = ((g_s * dyf * rec + 2 * spy.diff(dyu * rec, ys)) * DX(f_s, m)
          - g_s * dyu * rec * DX(u_s, m)
          - 2 * dyf**2 * dyu * rec**3 * DX(g_s, m - 1)
          + ((dyf * spy.diff(f_s, xs) - dyu * spy.diff(u_s, xs)) * rec
             + (g_s * dyf**2 - g_s * dyu**2 + 2 * dyf * d2yu) * rec**2)
          * DX(g_s, m - 1))
    S3t = ((g_s * dyu * rec + 2 * spy.diff(dyf * rec, ys)) * DX(f_s, m)
           - g_s * dyf * rec * DX(u_s, m)
           + ((spy.diff(u_s, xs) * dyf - dyu * spy.diff(f_s, xs)) * rec
              + 2 * dyf * d2yf * rec**2 - 2 * dyf**3 * rec**3)
           * DX(g_s, m - 1))

    state = State(0.0,
                  ml.from_function(grid, lambda X, Y: 0.4 * np.sin(X) * Y * np.exp(-Y**2)),
                  ml.from_function(grid, lambda X, Y: 0.3 * np.cos(X) * Y * np.exp(-Y**2)))
    got = source_S(state, m) + source_S_tilde(state, m)
    X = grid.x_nodes[:, None]
    Y = grid.y_nodes[None, :]
    for sym, num in zip((S1, S2, S3, S1t, S2t, S3t), got):
        ref = np.broadcast_to(spy.lambdify((xs, ys), sym, "numpy")(X, Y),
                              num.values.shape)
        assert np.abs(num.values - ref).max() < 3e-5


@pytest.mark.parametrize("m", [1, 2, 3, 4])
def test_sources_symmetric_reduction(m):
    # u == f makes the binomial sums cancel pairwise (exactly in floats)
    # and the two rational remainders coincide.
    grid = ml.build_grid(16, 129)
    h = _random_band_limited(grid, seed=10 + m, amp=0.1)
    state = State(0.0, h, h.copy())
    S1, S2, S3 = source_S(state, m)
    S1t, S2t, S3t = source_S_tilde(state, m)
    assert not S1.values.any() and not S1t.values.any()
    # The four-term commutator sum cancels pairwise; accumulation order
    # leaves rounding dust for m >= 3.
    assert np.abs(S2.values).max() < 1e-14
    assert np.abs(S2t.values).max() < 1e-14
    scale = max(np.abs(S3.values).max(), 1e-30)
    assert np.abs(S3.values - S3t.values).max() < 1e-12 * max(scale, 1.0)


def test_sources_guard_and_range():
    grid = ml.build_grid(16, 129)
    deep = ml.from_function(grid, lambda X, Y: -0.9 * np.exp(-((Y - 3) ** 2)))
    with pytest.raises(FloorViolation):
        source_S(State(0.0, ml.zeros(grid), deep), 1)
    ok = _single_mode_state(grid)
    with pytest.raises(ValueError):
        source_S(ok, 0)
    with pytest.raises(ValueError):
        source_S_tilde(ok, 9)


# ---------------------------------------------------------------------------
# coupling antisymmetry
# ---------------------------------------------------------------------------

@pytest.mark.parametrize("m", [0, 1, 2, 3, 4, 5])
def test_coupling_pairing_antisymmetry(m):
    # <dx^{m+1} F, dx^m U>_mu + <dx^{m+1} U, dx^m F>_mu = 0 holds to
    # roundoff: x-integration by parts is exact for trigonometric
    # interpolants and the weight depends only on y.
    grid = ml.build_grid(32, 257)
    t = 0.5
    state = State(t, _random_band_limited(grid, seed=1),
                  _random_band_limited(grid, seed=2))
    _, tail = compute_UF(state)
    w = WeightSpec(1.0, t)
    p1 = weighted_pairing(field_dx(tail.F, m + 1), field_dx(tail.U, m), w)
    p2 = weighted_pairing(field_dx(tail.U, m + 1), field_dx(tail.F, m), w)
    scale = (weighted_l2(field_dx(tail.F, m + 1), w) * weighted_l2(field_dx(tail.U, m), w)
             + weighted_l2(field_dx(tail.U, m + 1), w) * weighted_l2(field_dx(tail.F, m), w))
    assert abs(p1 + p2) <= 1e-12 * max(scale, 1e-30)


# ---------------------------------------------------------------------------
# residuals
# ---------------------------------------------------------------------------

def _zero_frames(grid, h=1e-3):
    return [State(k * h, ml.zeros(grid), ml.zeros(grid)) for k in range(3)]


def test_residual_zero_trajectory():
    grid = ml.build_grid(16, 129)
    frames = _zero_frames(grid)
    r_u, r_f = residual_umfm(frames, 1)
    assert not r_u.values.any() and not r_f.values.any()
    r_U, r_F = residual_UF(frames)
    assert not r_U.values.any() and not r_F.values.any()


def test_residual_frame_validation():
    grid = ml.build_grid(16, 129)
    frames = _zero_frames(grid)
    with pytest.raises(ValueError):
        residual_umfm(frames[:2], 1)
    bad = [frames[0], frames[1], State(0.0035, ml.zeros(grid), ml.zeros(grid))]
    with pytest.raises(ValueError):
        residual_umfm(bad, 1)
    with pytest.raises(ValueError):
        residual_umfm(frames, 0)
    with pytest.raises(ValueError):
        residual_umfm(frames, 1, y_mode="spectral")
    with pytest.raises(ValueError):
        residual_umfm(frames, 1, _defect="flip_S9")
    with pytest.raises(ValueError):
        residual_UF(frames, y_mode="nearest")


@pytest.mark.parametrize("m", [1, 2])
def test_residual_umfm_second_order_in_dt(m):
    # Consistent y-operators leave the centered-difference/time-stepping
    # error as the leading term: halving dt should shrink the residual
    # about 4x (measured 3.9x).
    norms = []
    for dt in (1e-3, 5e-4):
        frames = _frames_at(32, 513, dt, 4 * dt)
        w = WeightSpec(1.0, frames[1].t)
        r_u, r_f = residual_umfm(frames, m)
        norms.append((weighted_l2(r_u, w), weighted_l2(r_f, w)))
    assert norms[0][0] / norms[1][0] > 3.0
    assert norms[0][1] / norms[1][1] > 3.0


def test_residual_umfm_second_order_in_dy_high_order_mode():
    # With 4th-order evaluation stencils the residual isolates the
    # integrator's O(dy^2) truncation error: doubling ny shrinks it ~4x.
    norms = []
    for ny in (129, 257):
        frames = _frames_at(32, ny, 5e-6, 5e-4)
        w = WeightSpec(1.0, frames[1].t)
        r_u, _ = residual_umfm(frames, 1, y_mode="high_order")
        norms.append(weighted_l2(r_u, w))
    assert norms[0] / norms[1] > 3.0


def test_residual_umfm_detects_frame_perturbation():
    # Adding A sin(x) e^{-y^2} to the last frame's u must shift the
    # residual by ~A ||cos(x) e^{-y^2}|| / (2h).
    frames = list(_frames_at(32, 257, 1e-3, 4e-3))
    grid = frames[0].u.grid
    amp = 1e-6
    pert = ml.from_function(grid, lambda X, Y: amp * np.sin(X) * np.exp(-Y**2))
    w = WeightSpec(0.0, frames[1].t)
    r_base, _ = residual_umfm(frames, 1)
    bumped = frames[2].copy()
    bumped.u.values += pert.values
    r_pert, _ = residual_umfm([frames[0], frames[1], bumped], 1)
    diff = ml.Field(grid, r_pert.values - r_base.values)
    expected = weighted_l2(
        ml.from_function(grid, lambda X, Y: amp * np.cos(X) * np.exp(-Y**2)), w) / (2e-3)
    assert 0.9 < weighted_l2(diff, w) / expected < 1.1


def test_residual_umfm_boundary_flux_terms_matter():
    # Dropping the wall-flux sources leaves a quadratic-scale floor that
    # dwarfs the converged residual.
    frames = _frames_at(32, 513, 1e-3, 4e-3)
    w = WeightSpec(1.0, frames[1].t)
    with_flux, _ = residual_umfm(frames, 1)
    without, _ = residual_umfm(frames, 1, boundary_flux=False)
    assert weighted_l2(with_flux, w) < 0.5 * weighted_l2(without, w)


def test_residual_umfm_cancellation_witness():
    # The assembled residual is tiny against the largest single term
    # (the (1+f) dx f_m coupling, which carries dx^{m+1} f), and the
    # ratio keeps falling as dt is refined.
    from mhdlayer.unknowns import _dxn, _guarded_recip, _um_fm_values
    ratios = []
    for dt in (1e-3, 5e-4):
        frames = _frames_at(32, 513, dt, 4 * dt)
        mid = frames[1]
        w = WeightSpec(1.0, mid.t)
        _, fm1 = _um_fm_values(mid, 2, _guarded_recip(mid))
        loss = ml.Field(mid.u.grid, (1.0 + mid.f.values) * _dxn(mid.u.grid, fm1, 1))
        r_u, _ = residual_umfm(frames, 2)
        ratios.append(weighted_l2(r_u, w) / weighted_l2(loss, w))
    assert ratios[0] < 1e-3
    assert ratios[1] < 0.35 * ratios[0]


def test_residual_umfm_defect_hook_breaks_the_equation():
    # At moderate amplitude the commutator source is well above the
    # discretization floor, so flipping its sign inflates the residual.
    grid = ml.build_grid(32, 513)
    state0 = initial_data(grid, 0.2, seed=0)
    cfg = SolverConfig(dt=2e-4, t_end=1e-3, save_every=1)
    frames = run(state0, cfg).frames
    w = WeightSpec(1.0, frames[3].t)
    base, _ = residual_umfm(frames[2:5], 2)
    broken, _ = residual_umfm(frames[2:5], 2, _defect="flip_S2")
    assert weighted_l2(broken, w) > 3.0 * weighted_l2(base, w)


def test_residual_UF_decreases_with_dt():
    norms = []
    for dt in (2e-3, 1e-3):
        frames = _frames_at(64, 1025, dt, 0.02)
        w = WeightSpec(1.0, frames[1].t)
        r_U, r_F = residual_UF(frames)
        norms.append((weighted_l2(r_U, w), weighted_l2(r_F, w)))
    assert norms[0][0] / norms[1][0] > 2.0
    assert norms[0][1] / norms[1][1] > 2.0


def test_residual_UF_x_independent_trajectory():
    # Pure boundary-layer columns: the equations reduce to damped heat
    # flow plus y-transport; the residual stays x-independent and shrinks
    # ~4x when ny doubles (high-order evaluation of the O(dy^2) scheme).
    norms = []
    for ny in (129, 257):
        grid = ml.build_grid(16, ny)
        u = ml.from_function(grid, lambda X, Y: 1e-3 * Y * np.exp(-Y**2) + 0.0 * X)
        f = ml.from_function(grid, lambda X, Y: 5e-4 * Y * np.exp(-Y**2) + 0.0 * X)
        cfg = SolverConfig(dt=5e-6, t_end=5e-4 + 5e-6, save_every=1)
        frames = run(State(0.0, u, f), cfg).frames
        r_U, _ = residual_UF(frames[99:102], y_mode="high_order")
        xspread = np.abs(r_U.values - r_U.values.mean(axis=0, keepdims=True)).max()
        assert xspread < 1e-18
        norms.append(weighted_l2(r_U, WeightSpec(1.0, frames[100].t)))
    assert norms[0] / norms[1] > 3.0
