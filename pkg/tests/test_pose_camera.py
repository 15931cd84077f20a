import numpy as np
import pytest

from alprobe.core import quaternion as q
from alprobe.core.camera import PinholeCamera
from alprobe.core.pose import PoseScale
from alprobe.errors import BehindCamera, InvalidResolution


def test_identity_pose_fixes_points(rng):
    pose = PoseScale(rotation=q.identity(), translation=np.zeros(3), scale=1.0)
    x = rng.normal(size=(5, 3))
    assert np.allclose(pose.transform_point(x), x)


def test_pure_scale():
    pose = PoseScale(rotation=q.identity(), translation=np.zeros(3), scale=2.0)
    assert np.allclose(pose.transform_point(np.array([1.0, 0, 0])), [2.0, 0, 0])


def test_pose_matches_homogeneous_matrix_oracle(rng):
    quat = q.normalize(rng.normal(size=4))
    t = rng.normal(size=3)
    s = float(rng.uniform(0.5, 2.0))
    pose = PoseScale(rotation=quat, translation=t, scale=s)
    m = np.eye(4)
    m[:3, :3] = s * q.to_matrix(quat)
    m[:3, 3] = t
    for _ in range(20):
        x = rng.normal(size=3)
        oracle = (m @ np.append(x, 1.0))[:3]
        assert np.allclose(pose.transform_point(x), oracle, atol=1e-12)


def test_perturbed_identity_is_noop(rng):
    quat = q.normalize(rng.normal(size=4))
    pose = PoseScale(rotation=quat, translation=rng.normal(size=3), scale=1.3)
    p2 = pose.perturbed(np.zeros(3), np.zeros(3), 0.0)
    assert np.allclose(p2.rotation, pose.rotation)
    assert np.allclose(p2.translation, pose.translation)
    assert np.isclose(p2.scale, pose.scale)


def test_perturbed_log_scale():
    pose = PoseScale(rotation=q.identity(), translation=np.zeros(3), scale=2.0)
    p2 = pose.perturbed(np.zeros(3), np.zeros(3), np.log(3.0))
    assert np.isclose(p2.scale, 6.0)


def test_axis_point_projects_to_principal_point():
    cam = PinholeCamera.look_at(eye=np.array([0.0, 0, 5.0]), target=np.zeros(3),
                                focal=100.0, width=64, height=48)
    u, v, depth = cam.project(np.zeros(3))
    assert np.isclose(u, cam.cx)
    assert np.isclose(v, cam.cy)
    assert np.isclose(depth, 5.0)


def test_similar_triangles_offset():
    cam = PinholeCamera.look_at(eye=np.array([0.0, 0, 2.0]), target=np.zeros(3),
                                focal=50.0, width=64, height=64)
    # depth 2, lateral offset 1 -> f * x / depth = 25 px right of center
    u, v, _ = cam.project(np.array([1.0, 0.0, 0.0]))
    assert np.isclose(u, cam.cx + 25.0)
    assert np.isclose(v, cam.cy)
    # y-up: moving the point up moves it toward smaller v
    _, v2, _ = cam.project(np.array([0.0, 1.0, 0.0]))
    assert v2 < cam.cy


def test_project_unproject_round_trip(rng):
    cam = PinholeCamera.look_at(eye=np.array([1.0, -2.0, 4.0]),
                                target=np.array([0.2, 0.1, 0.0]),
                                focal=80.0, width=64, height=64)
    pts = rng.normal(size=(200, 3)) * 0.5
    u, v, depth = cam.project_batch(pts)
    back = np.stack([cam.unproject(u[i], v[i], depth[i])
                     for i in range(len(pts))])
    u2, v2, _ = cam.project_batch(back)
    assert max(np.abs(u2 - u).max(), np.abs(v2 - v).max()) < 1e-6
    assert np.allclose(back, pts, atol=1e-9)


def test_behind_camera_raises():
    cam = PinholeCamera.look_at(eye=np.array([0.0, 0, 2.0]), target=np.zeros(3),
                                focal=50.0, width=32, height=32)
    with pytest.raises(BehindCamera):
        cam.project(np.array([0.0, 0.0, 5.0]))


def test_invalid_resolution():
    with pytest.raises(InvalidResolution):
        PinholeCamera.look_at(eye=np.array([0.0, 0, 2.0]), target=np.zeros(3),
                              focal=50.0, width=0, height=32)


def test_pixel_rays_unit_and_through_centers():
    cam = PinholeCamera.look_at(eye=np.array([0.0, 0, 3.0]), target=np.zeros(3),
                                focal=40.0, width=8, height=6)
    origin, dirs = cam.pixel_rays()
    assert dirs.shape == (6 * 8, 3)
    assert np.allclose(np.linalg.norm(dirs, axis=-1), 1.0)
    assert np.allclose(origin, cam.center)
    # every ray points toward the scene (negative camera z)
    fwd = np.array([0.0, 0.0, -1.0])
    assert (dirs @ fwd > 0.9).all()
    # ray through pixel (i=2, j=3) hits its own pixel center when projected
    d = dirs[2 * 8 + 3]
    u, v, _ = cam.project(origin + 2.0 * d)
    assert np.isclose(u, 3.5, atol=1e-9)
    assert np.isclose(v, 2.5, atol=1e-9)
