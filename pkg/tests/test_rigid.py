import math
from itertools import product

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from jawkin.errors import DegenerateGeometryError, FrameMismatchError
from jawkin.rigid import (
    FrameId,
    RigidTransform,
    compose,
    frame_from_three_points,
    geodesic_angle,
    interpolate_pose,
    invert,
    kabsch_fit,
    random_transform,
    rms_residual,
    so3_exp,
    so3_log,
)


def rz(deg, t=(0.0, 0.0, 0.0), parent=None, child=None):
    return RigidTransform.from_axis_angle([0, 0, 1], deg, t, parent, child)


def assert_tf_close(a, b, tol):
    np.testing.assert_allclose(a.matrix, b.matrix, atol=tol, rtol=0)


seeds = st.integers(min_value=0, max_value=2**32 - 1)


# construction ------------------------------------------------------------


def test_rejects_non_orthonormal_and_improper():
    with pytest.raises(ValueError):
        RigidTransform(np.diag([1.0, 1.0, 1.001]), np.zeros(3))
    with pytest.raises(ValueError):
        RigidTransform(np.diag([1.0, 1.0, -1.0]), np.zeros(3))
    with pytest.raises(ValueError):
        RigidTransform.from_matrix(np.ones((4, 4)))


def test_arrays_are_read_only():
    t = rz(30, (1, 2, 3))
    with pytest.raises(ValueError):
        t.translation[0] = 5.0


# compose / invert ----------------------------------------------------------


def test_compose_identity_and_inverse(rng):
    t = random_transform(rng)
    assert_tf_close(compose(t, RigidTransform.identity()), t, 0)
    assert_tf_close(compose(t, invert(t)), RigidTransform.identity(), 1e-12)


def test_compose_hand_multiplied():
    a = rz(90, (1, 0, 0))
    b = rz(90)
    # [[0,-1,0,1],[1,0,0,0],[0,0,1,0]] @ [[0,-1,0,0],[1,0,0,0],[0,0,1,0]] by hand
    expected = np.array([[-1.0, 0, 0, 1], [0, -1, 0, 0], [0, 0, 1, 0], [0, 0, 0, 1]])
    np.testing.assert_allclose(compose(a, b).matrix, expected, atol=1e-15)


def test_compose_frame_mismatch():
    a = rz(10, parent=FrameId.O_OMOCAP, child=FrameId.CS_MTA)
    b = rz(10, parent=FrameId.CS_CRA, child=FrameId.CS_DP)
    with pytest.raises(FrameMismatchError):
        compose(a, b)
    c = compose(a, rz(5, parent=FrameId.CS_MTA, child=FrameId.CS_MAND_ANAT))
    assert (c.parent, c.child) == (FrameId.O_OMOCAP, FrameId.CS_MAND_ANAT)
    assert (invert(c).parent, invert(c).child) == (FrameId.CS_MAND_ANAT, FrameId.O_OMOCAP)


def test_invert_examples(rng):
    assert_tf_close(invert(RigidTransform.identity()), RigidTransform.identity(), 0)
    t = random_transform(rng)
    assert_tf_close(invert(invert(t)), t, 1e-12)
    # -R^T t for Rz(90), t=(1,2,3): R^T = Rz(-90) maps (1,2,3) to (2,-1,3)
    inv = invert(rz(90, (1, 2, 3)))
    assert_tf_close(inv, rz(-90, (-2, 1, -3)), 1e-12)


@settings(max_examples=60, deadline=None)
@given(seeds)
def test_compose_inverse_property(seed):
    t = random_transform(np.random.default_rng(seed))
    assert np.max(np.abs(compose(t, invert(t)).matrix - np.eye(4))) < 1e-12


# SO(3) maps ----------------------------------------------------------------


@settings(max_examples=100, deadline=None)
@given(seeds, st.floats(min_value=0.0, max_value=math.pi - 1e-6))
def test_log_exp_round_trip(seed, angle):
    rng = np.random.default_rng(seed)
    axis = rng.normal(size=3)
    axis /= np.linalg.norm(axis)
    w = axis * angle
    np.testing.assert_allclose(so3_log(so3_exp(w)), w, atol=1e-9)


def test_log_near_pi():
    axis = np.array([1.0, 2.0, -2.0]) / 3.0
    for angle in (math.pi, math.pi - 1e-9, math.pi - 1e-5):
        r = so3_exp(axis * angle)
        np.testing.assert_allclose(so3_exp(so3_log(r)), r, atol=1e-9)
        assert abs(np.linalg.norm(so3_log(r)) - angle) < 1e-8


def test_geodesic_examples():
    t = rz(17, (3, 4, 5))
    assert geodesic_angle(t, t) == 0.0
    assert abs(geodesic_angle(RigidTransform.identity(), rz(90)) - 90.0) < 1e-12
    r = RigidTransform.from_axis_angle(np.ones(3) / math.sqrt(3), 10.0)
    assert abs(geodesic_angle(RigidTransform.identity(), r) - 10.0) < 1e-12


def test_geodesic_small_angle_precision():
    r = RigidTransform.from_rotvec([1e-9, 0, 0])
    assert abs(geodesic_angle(RigidTransform.identity(), r) - math.degrees(1e-9)) < 1e-18


@settings(max_examples=100, deadline=None)
@given(seeds)
def test_geodesic_triangle_inequality(seed):
    rng = np.random.default_rng(seed)
    a, b, c = (random_transform(rng) for _ in range(3))
    assert geodesic_angle(a, c) <= geodesic_angle(a, b) + geodesic_angle(b, c) + 1e-9


def test_interpolate_examples(rng):
    a, b = random_transform(rng), random_transform(rng)
    s0 = interpolate_pose(a, b, 0.0)
    assert np.array_equal(s0.matrix, a.matrix)
    assert_tf_close(interpolate_pose(RigidTransform.identity(), rz(90), 0.5), rz(45), 1e-12)
    full = geodesic_angle(a, b)
    for s in (0.25, 0.5, 0.75):
        assert abs(geodesic_angle(a, interpolate_pose(a, b, s)) - s * full) < 1e-9
    with pytest.raises(ValueError):
        interpolate_pose(a, b, 1.5)


# frames from points -----------------------------------------------------------


def test_frame_from_three_points_examples():
    f = frame_from_three_points([0, 0, 0], [1, 0, 0], [0, 1, 0])
    assert_tf_close(f, RigidTransform.identity(), 1e-15)
    f = frame_from_three_points([5, 0, 0], [6, 0, 0], [5, 1, 0])
    np.testing.assert_allclose(f.rotation, np.eye(3), atol=1e-15)
    np.testing.assert_allclose(f.translation, [5, 0, 0], atol=0)


def test_frame_from_three_points_degenerate():
    with pytest.raises(DegenerateGeometryError):
        frame_from_three_points([0, 0, 0], [1, 0, 0], [2, 0, 0])
    with pytest.raises(DegenerateGeometryError):
        frame_from_three_points([0, 0, 0], [1e-8, 0, 0], [0, 1, 0])


@settings(max_examples=60, deadline=None)
@given(seeds)
def test_frame_equivariance(seed):
    rng = np.random.default_rng(seed)
    pts = rng.normal(scale=20.0, size=(3, 3))
    t = random_transform(rng)
    moved = frame_from_three_points(*t.apply(pts))
    np.testing.assert_allclose(moved.matrix, compose(t, frame_from_three_points(*pts)).matrix, atol=1e-9)


# Kabsch ----------------------------------------------------------------------


@pytest.mark.parametrize("n", [3, 4, 10])
def test_kabsch_exact_recovery(rng, n):
    for _ in range(20):
        src = rng.normal(scale=50.0, size=(n, 3))
        t = random_transform(rng)
        fit, rms = kabsch_fit(src, t.apply(src))
        assert np.max(np.abs(fit.matrix - t.matrix)) < 1e-10
        assert rms < 1e-10


def test_kabsch_identity(rng):
    src = rng.normal(size=(5, 3))
    fit, rms = kabsch_fit(src, src)
    assert_tf_close(fit, RigidTransform.identity(), 1e-12)
    assert rms < 1e-14


def test_kabsch_degenerate():
    with pytest.raises(DegenerateGeometryError):
        kabsch_fit(np.zeros((2, 3)), np.zeros((2, 3)))
    line = np.outer(np.arange(4.0), [1.0, 2.0, 3.0])
    with pytest.raises(DegenerateGeometryError):
        kabsch_fit(line, line)
    with pytest.raises(DegenerateGeometryError):
        kabsch_fit(np.eye(3), np.eye(4)[:, :3])


def test_kabsch_proper_on_mirrored_and_planar(rng):
    for k in range(2000):
        n = 3 + k % 5
        src = rng.normal(size=(n, 3))
        if k % 3 == 0:
            src[:, 2] *= 1e-7  # near-planar
        mirror = np.diag([1.0, 1.0, -1.0]) if k % 2 else np.eye(3)
        dst = random_transform(rng).apply(src @ mirror) + rng.normal(scale=0.01, size=(n, 3))
        fit, _ = kabsch_fit(src, dst)
        assert np.linalg.det(fit.rotation) > 0.999999


@settings(max_examples=50, deadline=None)
@given(seeds)
def test_kabsch_residual_invariant_under_joint_motion(seed):
    rng = np.random.default_rng(seed)
    src = rng.normal(scale=30.0, size=(6, 3))
    dst = random_transform(rng).apply(src) + rng.normal(scale=0.5, size=(6, 3))
    _, rms = kabsch_fit(src, dst)
    a, b = random_transform(rng), random_transform(rng)
    _, rms_moved = kabsch_fit(a.apply(src), b.apply(dst))
    assert abs(rms - rms_moved) < 1e-9


def euler_grid(step_deg):
    """ZYZ Euler grid over the rotation group."""
    step = math.radians(step_deg)
    alphas = np.arange(0.0, 2 * math.pi, step)
    betas = np.arange(0.0, math.pi + 1e-12, step)
    out = []
    for a, b in product(alphas, betas):
        for g in alphas:
            ca, sa, cb, sb, cg, sg = math.cos(a), math.sin(a), math.cos(b), math.sin(b), math.cos(g), math.sin(g)
            out.append([[ca * cb * cg - sa * sg, -ca * cb * sg - sa * cg, ca * sb],
                        [sa * cb * cg + ca * sg, -sa * cb * sg + ca * cg, sa * sb],
                        [-sb * cg, sb * sg, cb]])
    return np.array(out)


def grid_min_rms(src, dst, rots):
    a = src - src.mean(axis=0)
    b = dst - dst.mean(axis=0)
    # optimal translation for fixed R aligns centroids
    resid = b[None] - np.einsum("kij,nj->kni", rots, a)
    return float(np.sqrt(np.min(np.mean(np.sum(resid**2, axis=2), axis=1))))


def test_kabsch_matches_grid_search_on_mirrored_triads(rng):
    rots = euler_grid(3.0)
    # max distance from any rotation to the grid is below ~1.5 grid steps in angle
    theta_max = math.radians(4.5)
    for _ in range(5):
        src = rng.normal(scale=10.0, size=(3, 3))
        dst = random_transform(rng).apply(src * [1, 1, -1])
        fit, rms = kabsch_fit(src, dst)
        grid = grid_min_rms(src, dst, rots)
        radius = math.sqrt(np.mean(np.sum((src - src.mean(0)) ** 2, axis=1)))
        assert rms <= grid + 1e-9
        assert grid - rms <= theta_max * radius
        assert abs(rms_residual(fit, src, dst) - rms) < 1e-10
