"""Mesh bookkeeping, multilinear interpolation, and pitch calibration."""
import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from lipfree.interpolation import (
    FiniteRankChartOperator,
    HypercubeMesh,
    calibrate_pitch,
    chart_gradient_modulus,
    lambda_on_cube,
    lambda_piecewise,
    multilinear_weights,
)
from lipfree.manifolds import DomainError
from lipfree.mollify import CalibrationError


def test_mesh_rejects_bad_shapes():
    with pytest.raises(ValueError):
        HypercubeMesh((0.0,), (1.0, 2.0), (4, 4))
    with pytest.raises(ValueError):
        HypercubeMesh((0.0,), (1.0,), (0,))
    with pytest.raises(ValueError):
        HypercubeMesh((1.0,), (1.0,), (4,))


def test_from_pitch_rounds_cell_count_up():
    mesh = HypercubeMesh.from_pitch([0.0], [1.0], 0.3)
    assert mesh.cells == (4,)
    assert mesh.pitch[0] <= 0.3
    mesh2 = HypercubeMesh.from_pitch([-0.5, 0.0], [0.5, 2.0], 0.5)
    assert mesh2.cells == (2, 4)


def test_vertex_count_and_coordinates():
    mesh = HypercubeMesh((0.0, -1.0), (1.0, 1.0), (2, 4))
    assert mesh.vertex_count == 3 * 5
    np.testing.assert_allclose(mesh.vertex((0, 0)), [0.0, -1.0])
    np.testing.assert_allclose(mesh.vertex((2, 4)), [1.0, 1.0])
    np.testing.assert_allclose(mesh.vertex((1, 2)), [0.5, 0.0])


def test_locate_interior_and_face_preference():
    mesh = HypercubeMesh((0.0,), (1.0,), (4,))
    idx, t = mesh.locate([[0.3]])
    assert idx[0, 0] == 1
    assert t[0, 0] == pytest.approx(0.2, abs=1e-12)
    # a query exactly on an interior lattice plane belongs to both cubes;
    # the smaller index wins
    idx, t = mesh.locate([[0.5]])
    assert idx[0, 0] == 1
    assert t[0, 0] == pytest.approx(1.0, abs=1e-9)


def test_locate_rejects_outside_and_bad_dim():
    mesh = HypercubeMesh((0.0,), (1.0,), (4,))
    with pytest.raises(DomainError):
        mesh.locate([[1.2]])
    with pytest.raises(ValueError):
        mesh.locate([[0.2, 0.3]])


def test_multilinear_weights_binary_corner_order():
    w = multilinear_weights([[0.0, 1.0]])
    # corners in binary order (0,0),(0,1),(1,0),(1,1)
    np.testing.assert_allclose(w[0], [0.0, 1.0, 0.0, 0.0], atol=1e-15)
    w = multilinear_weights([[1.0, 1.0]])
    np.testing.assert_allclose(w[0], [0.0, 0.0, 0.0, 1.0], atol=1e-15)


@settings(max_examples=80, deadline=None)
@given(st.lists(st.floats(0.0, 1.0), min_size=2, max_size=2))
def test_weights_form_convex_combination(t):
    w = multilinear_weights([t])
    assert np.all(w >= -1e-15)
    assert float(np.sum(w)) == pytest.approx(1.0, abs=1e-12)


def test_cube_interpolant_hits_corners_and_affine():
    rng = np.random.default_rng(0)
    vv = rng.standard_normal(4)
    corners = [(0.0, 0.0), (0.0, 1.0), (1.0, 0.0), (1.0, 1.0)]
    for k, c in enumerate(corners):
        assert lambda_on_cube(vv, [c])[0] == pytest.approx(vv[k], abs=1e-14)
    a, b, c0 = 1.3, -0.7, 0.25
    aff = np.array([a * g0 + b * g1 + c0 for g0, g1 in corners])
    t = rng.uniform(0, 1, size=(30, 2))
    got = lambda_on_cube(aff, t)
    want = a * t[:, 0] + b * t[:, 1] + c0
    np.testing.assert_allclose(got, want, atol=1e-13)


def test_cube_interpolant_rejects_outside():
    with pytest.raises(DomainError):
        lambda_on_cube(np.zeros(4), [[1.5, 0.5]])


@settings(max_examples=60, deadline=None)
@given(st.lists(st.floats(-5.0, 5.0), min_size=4, max_size=4),
       st.lists(st.floats(0.0, 1.0), min_size=2, max_size=2))
def test_cube_interpolant_within_corner_hull(vv, t):
    out = lambda_on_cube(vv, [t])[0]
    assert min(vv) - 1e-9 <= out <= max(vv) + 1e-9


def test_piecewise_vertex_exact_and_affine():
    mesh = HypercubeMesh((0.0, 0.0), (1.0, 1.0), (3, 5))
    rng = np.random.default_rng(1)
    vv = rng.standard_normal((4, 6))
    verts = np.array([[mesh.vertex((i, j)) for j in range(6)]
                      for i in range(4)]).reshape(-1, 2)
    got = lambda_piecewise(mesh, vv, verts)
    np.testing.assert_allclose(got, vv.reshape(-1), atol=1e-12)

    aff = verts @ np.array([0.4, -1.1]) + 2.0
    got = lambda_piecewise(mesh, aff.reshape(4, 6),
                           rng.uniform(0, 1, size=(50, 2)))


def test_piecewise_rejects_wrong_vertex_shape():
    mesh = HypercubeMesh((0.0,), (1.0,), (4,))
    with pytest.raises(ValueError):
        lambda_piecewise(mesh, np.zeros(4), [[0.5]])


def _identity_chart(u):
    return np.atleast_2d(np.asarray(u, dtype=float))


def test_chart_operator_matches_eager_interpolant():
    mesh = HypercubeMesh((-1.0, -1.0), (1.0, 1.0), (5, 5))
    op = FiniteRankChartOperator(mesh, _identity_chart)
    g = lambda p: np.sin(np.atleast_2d(p)[:, 0]) + np.atleast_2d(p)[:, 1] ** 2
    verts = np.array([[mesh.vertex((i, j)) for j in range(6)]
                      for i in range(6)]).reshape(-1, 2)
    vv = g(verts).reshape(6, 6)
    u = np.random.default_rng(3).uniform(-1, 1, size=(40, 2))
    np.testing.assert_allclose(op.evaluate(g, u),
                               lambda_piecewise(mesh, vv, u), atol=1e-13)


def test_chart_operator_cache_lifecycle():
    mesh = HypercubeMesh((-1.0,), (1.0,), (8,))
    op = FiniteRankChartOperator(mesh, _identity_chart)
    g = lambda p: np.atleast_2d(p)[:, 0] ** 2
    assert op.cached_vertex_count("tok") == 0
    op.evaluate(g, [[0.1], [0.7]], token="tok")
    n1 = op.cached_vertex_count("tok")
    assert 0 < n1 <= mesh.vertex_count
    op.evaluate(g, [[0.1]], token="tok")
    assert op.cached_vertex_count("tok") == n1  # reused, not recomputed
    op.drop("tok")
    assert op.cached_vertex_count("tok") == 0


def test_chart_operator_rejects_unpackable_mesh():
    mesh = HypercubeMesh((0.0,) * 4, (1.0,) * 4, (2 ** 16 - 1,) * 4)
    with pytest.raises(ValueError):
        FiniteRankChartOperator(mesh, _identity_chart)


def _direct_apply(f, pts):
    return f(pts)


def test_gradient_modulus_table_monotone():
    g = lambda p: np.sin(2.0 * np.atleast_2d(p)[:, 0]) \
        + np.cos(3.0 * np.atleast_2d(p)[:, 1])
    table = chart_gradient_modulus(_direct_apply, _identity_chart, 2, 0.5,
                                   [0.05, 0.1, 0.2], [g], seed=5)
    by_delta = sorted(table)
    deltas = [d for d, _ in by_delta]
    vals = [v for _, v in by_delta]
    assert deltas == [0.05, 0.1, 0.2]
    assert vals == sorted(vals)
    assert vals[-1] > 0.0


def test_calibrate_pitch_bisection_route():
    g = lambda p: np.sin(4.0 * np.atleast_2d(p)[:, 0])
    pitch, mod = calibrate_pitch(_direct_apply, _identity_chart, 1, 0.5,
                                 target=0.3, suite=[g], seed=2)
    assert mod <= 0.3
    assert 0 < pitch < 0.5
    k = round(np.log2(0.5 / pitch))
    assert pitch == pytest.approx(0.5 * 0.5 ** k, rel=1e-12)
    # one grid step coarser must violate the target, else bisection
    # stopped early
    coarser = chart_gradient_modulus(_direct_apply, _identity_chart, 1, 0.5,
                                     [2 * pitch], [g], seed=2)
    assert coarser[0][1] > 0.3


def test_calibrate_pitch_budget_route():
    g = lambda p: 0.8 * np.atleast_2d(p)[:, 0]
    pitch, mod = calibrate_pitch(_direct_apply, _identity_chart, 1, 0.5,
                                 target=0.5, suite=[g], seed=2,
                                 budget_slope=8.0)
    k = int(np.ceil(np.log2(0.5 * 8.0 / 0.25)))
    assert pitch == pytest.approx(0.5 * 0.5 ** k, rel=1e-12)
    assert mod <= 1e-6


def test_calibrate_pitch_rejects_bad_slope():
    g = lambda p: np.atleast_2d(p)[:, 0]
    with pytest.raises(ValueError):
        calibrate_pitch(_direct_apply, _identity_chart, 1, 0.5, 0.5, [g],
                        budget_slope=0.0)


def test_calibrate_pitch_exhaustion_names_stage():
    g = lambda p: np.sin(4.0 * np.atleast_2d(p)[:, 0])
    with pytest.raises(CalibrationError) as exc:
        calibrate_pitch(_direct_apply, _identity_chart, 1, 0.5,
                        target=1e-12, suite=[g], seed=2, max_halvings=6)
    assert exc.value.stage == "interpolation"
