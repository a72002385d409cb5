"""Mollifier constants, ball quadrature, and the smoothing operator."""
import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from lipfree.manifolds import Circle, DomainError, make_manifold
from lipfree.mollify import (
    BallQuadrature,
    CalibrationError,
    SmoothingOperator,
    calibrate_delta,
    compute_G,
    kernel_constants,
    kernel_eval,
    kernel_grad,
)

# Independent adaptive quadrature of e * int_0^1 exp(1/(r^2-1)) r^(N-1) dr,
# inverted.  Frozen before the module under test existed.
G_FROZEN = {
    1: 1.6571376797382105,
    2: 4.954755186317767,
    3: 10.480675284536668,
}


@pytest.mark.parametrize("N,expected", sorted(G_FROZEN.items()))
def test_G_matches_frozen_quadrature(N, expected):
    assert compute_G(N) == pytest.approx(expected, rel=1e-12)


def test_G_rejects_nonpositive_dimension():
    with pytest.raises(ValueError):
        compute_G(0)


@pytest.mark.parametrize("N", [1, 2, 3])
def test_constant_identity_residual(N):
    # A * area(S^{N-1}) / (e G) = 1: three quadrature routes agree.
    assert kernel_constants(N).identity_residual <= 1e-6


@pytest.mark.parametrize("N", [1, 2, 3])
@pytest.mark.parametrize("s", [0.05, 0.5])
def test_kernel_mass_is_one(N, s):
    q = BallQuadrature(N, s, 48)
    assert abs(q.kernel_mass() - 1.0) <= 1e-6


@pytest.mark.parametrize("N", [1, 2, 3])
@pytest.mark.parametrize("s", [0.05, 0.1, 0.5])
def test_gradient_mass_bound(N, s):
    q = BallQuadrature(N, s, 48)
    G = kernel_constants(N).G
    assert q.gradient_mass() <= (G / s) * (1.0 + 1e-3)


def test_kernel_supported_in_ball():
    s = 0.3
    on_edge = np.array([[s, 0.0], [0.0, -s], [2 * s, 2 * s]])
    assert np.all(kernel_eval(on_edge, s) == 0.0)
    assert np.all(kernel_grad(on_edge, s) == 0.0)
    inside = np.array([[0.1 * s, 0.0]])
    assert kernel_eval(inside, s)[0] > 0.0


def test_kernel_scaling_identity():
    rng = np.random.default_rng(7)
    x = rng.uniform(-0.04, 0.04, size=(40, 3))
    s = 0.05
    lhs = kernel_eval(x, s)
    rhs = kernel_eval(x / s, 1.0) / s ** 3
    np.testing.assert_allclose(lhs, rhs, rtol=1e-12)


def test_gradient_matches_finite_difference():
    s = 0.4
    x = np.array([[0.1, -0.05, 0.02]])
    g = kernel_grad(x, s)[0]
    h = 1e-7
    for j in range(3):
        e = np.zeros(3)
        e[j] = h
        fd = (kernel_eval(x + e, s)[0] - kernel_eval(x - e, s)[0]) / (2 * h)
        assert g[j] == pytest.approx(fd, rel=1e-5, abs=1e-8)


@settings(max_examples=60, deadline=None)
@given(st.lists(st.floats(-2.0, 2.0), min_size=2, max_size=2))
def test_kernel_nonnegative(pt):
    v = kernel_eval(np.array([pt]), 0.7)
    assert v[0] >= 0.0


def test_calibration_error_carries_stage():
    err = CalibrationError("grid exhausted")
    assert err.stage == "smoothing"
    err2 = CalibrationError("grid exhausted", stage="interpolation")
    assert err2.stage == "interpolation"


def test_calibrate_delta_flat_graph_takes_first_grid_value():
    man = make_manifold({"kind": "graph", "name": "line",
                         "box": [[-30.0, 30.0]]})
    delta, defect = calibrate_delta(man, K=1.0, n=5, radius=20.0)
    assert delta == min(man.tube_radius() / 2.0, 1.0)
    assert defect <= 1e-12


def _smoother(n=5):
    return SmoothingOperator(Circle(1.0), K=1.0, L_n=1.0, n=n)


def test_smoothing_scale_within_window():
    S = _smoother()
    c = S.constants()
    assert c["delta_n"] <= S.man.tube_radius() / 2.0 + 1e-15
    assert c["delta"] <= c["delta_n"]
    assert c["s_n"] == pytest.approx(c["delta"] / (2 * S.n * S.K * S.L_n))


def test_smoothing_constant_function_maps_to_zero():
    S = _smoother()
    pts = Circle(1.0).sample(20, seed=3)
    out = S.apply(lambda y: np.full(len(np.atleast_2d(y)), 4.25), pts)
    np.testing.assert_allclose(out, 0.0, atol=1e-12)


def test_smoothing_vanishes_at_basepoint():
    S = _smoother()
    out = S.apply(lambda y: np.atleast_2d(y)[:, 0] ** 2, np.zeros((1, 2)))
    assert out[0] == pytest.approx(0.0, abs=1e-15)


def test_smoothing_is_linear():
    S = _smoother()
    pts = Circle(1.0).sample(15, seed=11)
    f = lambda y: np.abs(np.atleast_2d(y)[:, 0])
    g = lambda y: np.atleast_2d(y)[:, 1]
    combo = lambda y: 2.0 * f(y) - 0.5 * g(y)
    lhs = S.apply(combo, pts)
    rhs = 2.0 * S.apply(f, pts) - 0.5 * S.apply(g, pts)
    np.testing.assert_allclose(lhs, rhs, atol=1e-10)


def test_smoothing_zero_cache_reused():
    S = _smoother()
    pts = Circle(1.0).sample(5, seed=2)
    f = lambda y: np.atleast_2d(y)[:, 0]
    first = S.apply(f, pts, f_token="f")
    assert "f" in S._zero_cache
    second = S.apply(f, pts, f_token="f")
    np.testing.assert_array_equal(first, second)


def test_smoothing_stencil_outside_tube_raises():
    S = _smoother()
    with pytest.raises(DomainError):
        S.preimages(np.array([[3.0, 0.0]]))


def test_smoothing_uniform_defect_small():
    # |S_n f - f| <= Lip(f) * s_n * (stencil diameter factor); with Lip = 1
    # the coarse budget 2 s_n already separates pass from failure.
    S = _smoother()
    pts = Circle(1.0).sample(30, seed=9)
    f = lambda y: np.atleast_2d(y)[:, 0]
    fvals = f(pts) - f(np.zeros((1, 2)))
    defect = float(np.max(np.abs(S.apply(f, pts) - fvals)))
    assert defect <= 2.0 * S.s_n + S.quad_tol
