"""Grid construction, validation, and quadrature accuracy."""

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from mhdlayer.grid import build_grid, quad_y


def test_rejects_non_power_of_two_nx():
    with pytest.raises(ValueError, match="power of two"):
        build_grid(48, 129, 2 * np.pi, 12.0)
    with pytest.raises(ValueError, match="power of two"):
        build_grid(8, 129, 2 * np.pi, 12.0)


def test_rejects_small_ny():
    with pytest.raises(ValueError, match="ny"):
        build_grid(64, 64, 2 * np.pi, 12.0)


def test_rejects_bad_stretch():
    with pytest.raises(ValueError, match="stretch"):
        build_grid(64, 129, 2 * np.pi, 12.0, stretch=1.0)


def test_uniform_spacing():
    g = build_grid(64, 129, 2 * np.pi, 12.0, 0.0)
    dy = np.diff(g.y_nodes)
    assert np.allclose(dy, 12.0 / 128, rtol=0, atol=1e-14)
    assert g.y_nodes[0] == 0.0 and g.y_nodes[-1] == 12.0


def test_x_nodes_uniform():
    g = build_grid(16, 65, 2 * np.pi, 8.0, 0.0)
    assert g.x_nodes[0] == 0.0
    assert np.isclose(g.x_nodes[8], np.pi, rtol=0, atol=1e-15)


def test_stretched_grid_monotone_and_wall_clustered():
    g = build_grid(64, 129, 2 * np.pi, 12.0, 0.5)
    dy = np.diff(g.y_nodes)
    assert np.all(dy > 0)
    assert dy[0] < dy[-1]
    assert g.y_nodes[0] == 0.0 and g.y_nodes[-1] == 12.0


@pytest.mark.parametrize("stretch", [0.0, 0.5])
def test_quad_weights_positive_and_sum_to_ymax(stretch):
    g = build_grid(64, 257, 2 * np.pi, 12.0, stretch)
    assert g.y_quad.min() >= 0.0
    assert abs(g.y_quad.sum() - 12.0) <= 1e-12 * 12.0


def test_quad_constant():
    g = build_grid(64, 129, 2 * np.pi, 12.0)
    assert abs(quad_y(g, np.ones(g.ny)) - 12.0) <= 1e-12


def test_quad_gaussian_derivative():
    # exact antiderivative of 2y e^{-y^2} is 1 - e^{-y^2}
    g = build_grid(64, 129, 2 * np.pi, 12.0)
    y = g.y_nodes
    assert abs(quad_y(g, 2 * y * np.exp(-y ** 2)) - 1.0) <= 1e-6


def test_quad_gaussian_second_moment():
    # int_0^inf y^2 e^{-y^2/4} dy = sqrt(pi)/(4 a^{3/2}), a = 1/4 -> 2 sqrt(pi)
    g = build_grid(64, 129, 2 * np.pi, 12.0)
    y = g.y_nodes
    exact = 2.0 * np.sqrt(np.pi)
    assert abs(quad_y(g, y ** 2 * np.exp(-y ** 2 / 4)) - exact) <= 1e-5


def test_quad_length_mismatch():
    g = build_grid(64, 129, 2 * np.pi, 12.0)
    with pytest.raises(ValueError, match="samples"):
        quad_y(g, np.ones(100))


@settings(max_examples=25, deadline=None)
@given(a=st.floats(-5, 5), b=st.floats(-5, 5), seed=st.integers(0, 2 ** 31 - 1))
def test_quad_linearity(a, b, seed):
    g = build_grid(16, 65, 2 * np.pi, 12.0)
    rng = np.random.default_rng(seed)
    f1 = rng.standard_normal(g.ny)
    f2 = rng.standard_normal(g.ny)
    lhs = quad_y(g, a * f1 + b * f2)
    rhs = a * quad_y(g, f1) + b * quad_y(g, f2)
    assert abs(lhs - rhs) <= 1e-10 * (1 + abs(lhs) + abs(rhs))


@settings(max_examples=25, deadline=None)
@given(seed=st.integers(0, 2 ** 31 - 1))
def test_quad_nonnegative_on_nonnegative_samples(seed):
    g = build_grid(16, 65, 2 * np.pi, 12.0, stretch=0.3)
    rng = np.random.default_rng(seed)
    samples = np.abs(rng.standard_normal(g.ny))
    assert quad_y(g, samples) >= 0.0


def test_quad_refinement_order():
    # doubling ny must cut the error at order >= 2 on Gaussian integrands
    errs = []
    for ny in (65, 129, 257):
        g = build_grid(16, ny, 2 * np.pi, 12.0)
        y = g.y_nodes
        errs.append(abs(quad_y(g, 2 * y * np.exp(-y ** 2)) - 1.0))
    orders = np.log2(np.array(errs[:-1]) / np.array(errs[1:]))
    assert np.all(orders >= 2.0)
