import numpy as np
import pytest

from dismantle.geometry import IDENTITY, Pose, normalize, pose_step


def test_pose_compose_inverse_round_trip():
    rng = np.random.default_rng(0)
    for _ in range(20):
        q = rng.normal(size=4)
        q /= np.linalg.norm(q)
        a = Pose(rng.uniform(-1, 1, 3), q)
        q2 = rng.normal(size=4)
        q2 /= np.linalg.norm(q2)
        b = Pose(rng.uniform(-1, 1, 3), q2)
        ab = a.compose(b)
        back = a.inverse().compose(ab)
        assert back.approx_equal(b, tol=1e-9)


def test_pose_apply_matches_compose():
    s = np.sqrt(0.5)
    p = Pose(np.array([1.0, 0.0, 0.0]), np.array([s, 0.0, 0.0, s]))  # 90 deg z
    pt = p.apply(np.array([1.0, 0.0, 0.0]))
    np.testing.assert_allclose(pt, [1.0, 1.0, 0.0], atol=1e-9)


def test_non_unit_quaternion_rejected():
    with pytest.raises(ValueError):
        Pose(np.zeros(3), np.array([1.0, 1.0, 0.0, 0.0]))


def test_rotvec_vector_round_trip():
    v = np.array([0.1, -0.2, 0.3])
    p = Pose.from_rotvec(np.array([0.5, 0.6, 0.7]), v)
    np.testing.assert_allclose(p.rotvec(), v, atol=1e-12)
    np.testing.assert_allclose(p.as_vector(), [0.5, 0.6, 0.7, 0.1, -0.2, 0.3],
                               atol=1e-12)


def test_pose_step_integrates_linear_and_angular():
    p = pose_step(IDENTITY, np.array([1.0, 0, 0]), np.array([0, 0, np.pi]), 0.5)
    np.testing.assert_allclose(p.position, [0.5, 0, 0], atol=1e-12)
    assert abs(np.linalg.norm(p.rotvec()) - np.pi / 2) < 1e-9


def test_normalize_rejects_zero():
    with pytest.raises(ValueError):
        normalize(np.zeros(3))


def test_distance_components():
    a = Pose(np.zeros(3))
    b = Pose.from_rotvec(np.array([0.3, 0.4, 0.0]), np.array([0.0, 0.0, 0.2]))
    d, ang = a.distance(b)
    assert d == pytest.approx(0.5)
    assert ang == pytest.approx(0.2)
