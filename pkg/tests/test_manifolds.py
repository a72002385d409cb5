import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from lipfree.manifolds import (Circle, DomainError, Sphere, Torus,
                               make_manifold, tangent_flatness_defect,
                               tangent_identity_defect, translation_defect,
                               tube_sample)

TRIO = (Circle(1.0), Sphere(1.0), Torus(2.0, 0.5))


@pytest.mark.parametrize("man", TRIO, ids=["circle", "sphere", "torus"])
def test_retract_fixes_manifold_points(man):
    pts = man.sample(60, 3, "fix")
    assert np.max(np.abs(man.retract(pts) - pts)) < 1e-12


@pytest.mark.parametrize("man", TRIO, ids=["circle", "sphere", "torus"])
def test_retract_idempotent_on_tube(man):
    pts = tube_sample(man, None, 0.4 * man.tube_radius(), 80, 9)
    once = man.retract(pts)
    assert np.max(np.abs(man.retract(once) - once)) < 1e-10


@pytest.mark.parametrize("man", TRIO, ids=["circle", "sphere", "torus"])
def test_retract_is_nearest_point(man):
    # |psi(y) - y| <= |x - y| for every manifold point x
    pts = tube_sample(man, None, 0.3 * man.tube_radius(), 20, 4)
    proj = man.retract(pts)
    probes = man.sample(300, 5, "nearest")
    d_proj = np.linalg.norm(pts - proj, axis=1)
    d_all = np.linalg.norm(pts[:, None, :] - probes[None, :, :], axis=2)
    assert np.all(d_proj <= np.min(d_all, axis=1) + 1e-9)


@pytest.mark.parametrize("man", TRIO, ids=["circle", "sphere", "torus"])
def test_frames_orthonormal(man):
    for x in man.sample(20, 6, "frames"):
        E = man.tangent_frame(x)
        assert E.shape == (man.dim, man.ambient)
        assert np.allclose(E @ E.T, np.eye(man.dim), atol=1e-9)


@pytest.mark.parametrize("man", TRIO, ids=["circle", "sphere", "torus"])
def test_tangent_identity_small(man):
    rep = tangent_identity_defect(man, 50, seed=0)
    assert rep.pairs == 50
    assert rep.value <= 1e-6


@settings(max_examples=30, deadline=None)
@given(st.floats(-0.3, 0.3), st.integers(0, 59))
def test_retract_lands_on_manifold(offset, idx):
    man = Circle(1.0)
    pts = man.sample(60, 3, "land")
    x = pts[idx]
    y = x + offset * (x + man.basepoint_raw)  # radial push in raw terms
    p = man.retract(y[None])
    assert abs(float(man.contains_residual(p)[0])) < 1e-10


def test_circle_flatness_ratio_oracle():
    # unit circle, chords <= delta: worst residual ratio is sin(theta/2)
    # at chord delta, i.e. delta/2
    delta = 0.1
    rep = tangent_flatness_defect(Circle(1.0), None, delta, 400, seed=0)
    assert rep.value == pytest.approx(delta / 2.0, rel=0.01)


def test_sphere_flatness_ratio_oracle():
    delta = 0.1
    rep = tangent_flatness_defect(Sphere(1.0), None, delta, 400, seed=0)
    assert rep.value == pytest.approx(delta / 2.0, rel=0.01)


def test_translation_defect_shrinks_with_delta():
    man = Torus(2.0, 0.5)
    vals = [translation_defect(man, None, d, d, 300, seed=0).value
            for d in (0.2, 0.1, 0.05)]
    assert vals[1] <= vals[0] + 0.01
    assert vals[2] <= vals[1] + 0.01


def test_translation_defect_rejects_offsets_outside_tube():
    man = Circle(1.0)
    with pytest.raises(DomainError):
        translation_defect(man, None, 0.1, man.tube_radius(), 50, seed=0)


def test_retract_raises_outside_tube():
    man = Sphere(1.0)
    x = man.sample(1, 2, "far")[0]
    y = x + 5.0 * (x + man.basepoint_raw)  # way past the reach
    with pytest.raises(DomainError):
        man.retract(y[None])


def test_retract_unchecked_is_total():
    man = Circle(1.0)
    x = man.sample(1, 2, "far")[0]
    y = x + 20.0 * (x + man.basepoint_raw)
    p = man.retract(y[None], check=False)
    assert abs(float(man.contains_residual(p)[0])) < 1e-10


def test_graph_manifold_stays_on_graph():
    man = make_manifold({"kind": "graph", "name": "sine",
                         "box": [[-2.0, 2.0], [-2.0, 2.0]]})
    pts = man.sample(50, 1, "graph")
    u, z = pts[:, :2], pts[:, 2]
    assert np.allclose(z, 0.3 * np.sin(u).sum(axis=1), atol=1e-12)


def test_make_manifold_rejects_unknown_kind():
    with pytest.raises(ValueError):
        make_manifold({"kind": "mobius"})


def test_sample_radius_filter():
    man = make_manifold({"kind": "graph", "name": "line",
                         "box": [[-100.0, 100.0]]})
    pts = man.sample(200, 0, "radius", radius=5.0)
    assert 0 < len(pts) <= 200
    assert np.max(np.linalg.norm(pts, axis=1)) <= 5.0 + 1e-12
    assert len(man.sample(200, 0, "radius")) == 200


def test_origin_is_the_basepoint():
    # centered coordinates place the basepoint at 0, so 0 is on M
    for man in TRIO:
        z = np.zeros((1, man.ambient))
        assert np.max(np.abs(man.retract(z) - z)) < 1e-12
