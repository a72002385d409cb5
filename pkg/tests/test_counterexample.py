"""Flat patch, candidate retractions, and the projection-constant search."""
import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from lipfree.counterexample import (
    FROZEN_MATRIX,
    CandidateRetraction,
    average_derivative,
    derived_projection,
    flat_patch_check,
    flat_patch_grid,
    frozen_tilde_norm,
    min_projection_norm,
    projection_candidate,
    projection_matrix,
    synthetic_candidate,
    tension_check,
)
from lipfree.manifolds import DomainError
from lipfree.norms import EuclideanNorm

# Frozen outcome of the default-parameter search over the frozen norm,
# recorded from an isolated run before these tests existed.
FROZEN_MIN = 1.331177802900311
FROZEN_Z = (1.501291, -1.129708)


@pytest.fixture(scope="module")
def frozen_search():
    return min_projection_norm(frozen_tilde_norm(), dir_count=4096,
                               refine_rounds=3, starts=8, seed=2718)


@pytest.fixture(scope="module")
def synthetic_T():
    cand = synthetic_candidate(0.01, seed=0)
    return cand, average_derivative(cand, nodes=24)


@settings(max_examples=100, deadline=None)
@given(st.floats(-3.0, 3.0), st.floats(-3.0, 3.0))
def test_projection_matrix_idempotent_and_plane_fixing(z1, z2):
    P = projection_matrix(z1, z2)
    np.testing.assert_array_equal(P @ P, P)  # exact float algebra
    plane = np.array([[1.0, 0.0, 0.0], [0.0, 1.0, 0.0], [2.5, -1.5, 0.0]])
    np.testing.assert_array_equal(plane @ P.T, plane)
    assert np.all(P[2] == 0.0)


def test_euclidean_minimum_is_orthogonal_projection():
    res = min_projection_norm(EuclideanNorm(3), dir_count=1024,
                              refine_rounds=1, starts=5, seed=1)
    assert res.value == pytest.approx(1.0, abs=2e-3)
    assert abs(res.z[0]) < 0.05 and abs(res.z[1]) < 0.05


def test_frozen_norm_search_matches_frozen_outcome(frozen_search):
    res = frozen_search
    assert res.value == pytest.approx(FROZEN_MIN, abs=1e-3)
    assert res.z[0] == pytest.approx(FROZEN_Z[0], abs=1e-3)
    assert res.z[1] == pytest.approx(FROZEN_Z[1], abs=1e-3)
    assert res.spread < 1e-3
    assert len(res.trace) == 8


def test_search_rows_pass_above_floor(frozen_search):
    rows = frozen_search.rows(floor=1.02)
    by_name = {r.bound_name: r for r in rows}
    assert by_name["projection-search-stability"].passed
    assert by_name["projection-min-margin"].passed
    assert by_name["projection-min-margin"].sampled_value < 0.0


def test_flat_patch_grid_shape():
    pts = flat_patch_grid(count=9)
    assert pts.shape == (81, 3)
    assert np.all(pts[:, 2] == 2.0)
    assert np.max(np.abs(pts[:, :2])) == 1.5


def test_flat_patch_rows_pass():
    rows = flat_patch_check(count=9)
    assert [r.bound_name for r in rows] == [
        "flat-patch-body-value", "flat-patch-gauge", "flat-patch-off-control"]
    for r in rows:
        assert r.passed, r.bound_name
    assert rows[0].sampled_value <= 1e-10
    assert rows[1].sampled_value <= 1e-8


def test_candidate_rejects_points_outside_slab():
    cand = projection_candidate(slab=0.5)
    with pytest.raises(DomainError):
        cand(np.array([[0.0, 0.0, 0.5]]))


def test_average_derivative_needs_room_in_slab():
    cand = projection_candidate(slab=0.5)
    with pytest.raises(DomainError):
        average_derivative(cand, h=0.5)


def test_average_derivative_rejects_off_plane_candidate():
    ident = CandidateRetraction(lambda x: np.array(x, copy=True), xi=1.0,
                                slab=0.5, claims_displacement=False)
    with pytest.raises(ValueError):
        average_derivative(ident)


def test_projection_candidate_averages_to_plain_projection():
    cand = projection_candidate(shift=(0.3, -0.2))
    T = average_derivative(cand, nodes=24)
    np.testing.assert_allclose(T.matrix, np.diag([1.0, 1.0, 0.0]), atol=1e-8)


def test_synthetic_candidate_validates_displacement(synthetic_T):
    cand, _T = synthetic_T
    rows = cand.validate(frozen_tilde_norm())
    assert [r.bound_name for r in rows] == ["retraction-displacement"]
    assert rows[0].passed
    assert rows[0].paper_value == 0.01


def test_derived_projection_is_projection(synthetic_T):
    _cand, T = synthetic_T
    R = derived_projection(T)
    np.testing.assert_allclose(R @ R, R, atol=1e-12)
    plane = np.array([[1.0, 0.0, 0.0], [0.0, 1.0, 0.0]])
    np.testing.assert_allclose(plane @ R.T, plane, atol=1e-12)
    assert np.all(R[2] == 0.0)


def test_tension_rows_pass(synthetic_T, frozen_search):
    cand, T = synthetic_T
    rows = tension_check(T, frozen_tilde_norm(), frozen_search, cand.xi)
    names = [r.bound_name for r in rows]
    assert names == ["averaged-defect-e1", "averaged-defect-e2",
                     "projection-tension"]
    for r in rows:
        assert r.passed, r.bound_name
    # the averaged operator nearly fixes the plane: defect <= 2 xi
    assert rows[0].paper_value == pytest.approx(0.02)


def test_frozen_matrix_is_stable():
    assert FROZEN_MATRIX == (
        (0.693, 0.548, -0.102),
        (0.588, 0.984, -0.081),
        (-0.124, 0.345, 0.911),
    )
    norm = frozen_tilde_norm()
    assert norm.dim == 3
