import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from lipfree.norms import (BodyNorm, EuclideanNorm, PNorm, ProfileBody,
                           WeightedL1Norm, estimate_K, make_norm,
                           minkowski_gauge, profile_deriv, profile_eval,
                           profile_second, working_K)

FROZEN_A = ((0.693, 0.548, -0.102),
            (0.588, 0.984, -0.081),
            (-0.124, 0.345, 0.911))


def test_profile_vanishes_below_three_quarters():
    t = np.linspace(-1.0, 0.75, 50)
    assert np.all(profile_eval(t) == 0.0)
    assert np.all(profile_deriv(t) == 0.0)


def test_profile_is_one_at_one():
    assert profile_eval(1.0) == pytest.approx(1.0, abs=1e-12)


def test_profile_second_nonnegative():
    t = np.linspace(0.0, 1.2, 200)
    assert np.all(profile_second(t) >= 0.0)


def test_profile_deriv_matches_finite_difference():
    h = 1e-6
    for t in (0.8, 0.9, 1.0, 1.1):
        fd = (profile_eval(t + h) - profile_eval(t - h)) / (2 * h)
        assert profile_deriv(t) == pytest.approx(fd, rel=1e-7)


def test_body_axis_point_on_boundary():
    body = ProfileBody(3)
    assert body.value(np.array([2.0, 0.0, 0.0])) == pytest.approx(1.0, abs=1e-12)
    # patch [-1/2, 3/2]^2 x {2}: first two coordinates contribute nothing
    assert body.value(np.array([1.5, -0.5, 2.0])) == pytest.approx(1.0, abs=1e-12)


def test_gauge_axis_oracle():
    body = ProfileBody(3)
    # ray through (1,0,0) crosses the boundary at (2,0,0), so gauge = 1/2
    assert minkowski_gauge(body, np.array([1.0, 0.0, 0.0])) == \
        pytest.approx(0.5, rel=1e-9)
    assert minkowski_gauge(body, np.array([2.0, 0.0, 0.0])) == \
        pytest.approx(1.0, rel=1e-9)


def test_gauge_zero_at_origin():
    body = ProfileBody(3)
    assert minkowski_gauge(body, np.zeros(3)) == 0.0


@settings(max_examples=40, deadline=None)
@given(st.lists(st.floats(-3, 3), min_size=3, max_size=3),
       st.floats(0.1, 5.0))
def test_gauge_positive_homogeneity(coords, scale):
    x = np.asarray(coords)
    if np.linalg.norm(x) < 1e-3:
        return
    body = ProfileBody(3)
    g1 = minkowski_gauge(body, x)
    g2 = minkowski_gauge(body, scale * x)
    assert g2 == pytest.approx(scale * g1, rel=1e-7)


def test_gauge_level_set_matches_containment():
    body = ProfileBody(3)
    rng = np.random.default_rng(5)
    x = rng.uniform(-3, 3, size=(100, 3))
    g = minkowski_gauge(body, x)
    inside = body.contains(x)
    assert np.all(inside[g <= 0.999])
    assert not np.any(inside[g >= 1.001])


def test_pnorm_analytic_K():
    assert PNorm(2, math.inf).analytic_K() == pytest.approx(math.sqrt(2))
    assert PNorm(3, 1.0).analytic_K() == pytest.approx(math.sqrt(3))
    assert PNorm(4, 2.0).analytic_K() == pytest.approx(1.0)
    assert EuclideanNorm(7).analytic_K() == 1.0


def test_working_K_prefers_analytic():
    K, src = working_K(PNorm(2, math.inf))
    assert K == pytest.approx(math.sqrt(2))
    assert src == "analytic"


def test_estimate_K_lower_bounds_equivalence():
    # sampled two-sided equivalence can only under-report the true K
    norm = PNorm(2, math.inf)
    est = estimate_K(norm, samples=2048, seed=1)
    assert 1.0 <= est.value <= math.sqrt(2) + 1e-9
    assert est.value >= 0.95 * math.sqrt(2)


@settings(max_examples=40, deadline=None)
@given(st.lists(st.floats(-5, 5), min_size=3, max_size=3),
       st.lists(st.floats(-5, 5), min_size=3, max_size=3))
def test_weighted_l1_triangle_inequality(xs, ys):
    norm = WeightedL1Norm(FROZEN_A)
    x, y = np.asarray(xs), np.asarray(ys)
    assert norm(x + y) <= norm(x) + norm(y) + 1e-12


def test_weighted_l1_needs_invertible_matrix():
    with pytest.raises(ValueError):
        WeightedL1Norm(((1.0, 0.0, 0.0), (0.0, 1.0, 0.0), (1.0, 1.0, 0.0)))


def test_weighted_l1_coord_lip_bound():
    norm = WeightedL1Norm(FROZEN_A)
    rng = np.random.default_rng(11)
    for j in range(3):
        b = norm.coord_lip_bound(j)
        x = rng.standard_normal((200, 3))
        y = rng.standard_normal((200, 3))
        ratio = np.abs(x[:, j] - y[:, j]) / norm(x - y)
        assert np.max(ratio) <= b * (1 + 1e-9)


def test_make_norm_round_trip():
    for cfg in ({"kind": "euclidean", "dim": 3},
                {"kind": "pnorm", "dim": 2, "p": math.inf},
                {"kind": "weighted-l1", "dim": 3, "matrix": FROZEN_A},
                {"kind": "minkowski", "dim": 3,
                 "profile": "exp-reciprocal"}):
        norm = make_norm(cfg)
        echo = norm.to_config()
        again = make_norm(echo)
        x = np.array([0.3, -1.2, 0.8])[:norm.dim]
        assert norm(x) == again(x)


def test_make_norm_rejects_unknown_kind():
    with pytest.raises(ValueError):
        make_norm({"kind": "taxicab", "dim": 2})


def test_body_norm_is_a_norm_on_samples():
    norm = BodyNorm(3, ProfileBody(3))
    rng = np.random.default_rng(2)
    x = rng.uniform(-2, 2, size=(50, 3))
    y = rng.uniform(-2, 2, size=(50, 3))
    assert np.all(norm(x + y) <= norm(x) + norm(y) + 1e-9)
    assert np.all(np.abs(norm(2.5 * x) - 2.5 * norm(x)) <= 1e-7 * norm(x))
