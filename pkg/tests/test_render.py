import math

import numpy as np
import pytest
from oracles import brute_force_depth
from scipy.signal import convolve2d

from copilot.render import (BACKGROUND, Camera, annotate_heatmap, camera_basis, gaussian_kernel,
                            mount_cameras, project, render)
from copilot.sim import DEFAULT_BODY, Box, Scene, generate_scene, standing_state


def _cam(pos=(0, 0, 1), yaw=0.0, pitch=0.0, res=(32, 32), fov=90.0):
    f, r, u = camera_basis(yaw, pitch)
    return Camera(np.array(pos, float), f, r, u, fov, res)


def test_head_camera_identity_pose():
    st = standing_state(0, 0, 0)
    head = mount_cameras(st, views=[0])[0]
    z = DEFAULT_BODY.root_height + DEFAULT_BODY.offsets[0][2] + DEFAULT_BODY.mounts[0].offset[2]
    assert np.allclose(head.position, [0, 0, z])
    assert np.allclose(head.forward, [1, 0, 0])


def test_cameras_rotate_with_yaw():
    a = mount_cameras(standing_state(0, 0, 0))
    b = mount_cameras(standing_state(0, 0, math.pi / 2))
    rot = np.array([[0, -1, 0], [1, 0, 0], [0, 0, 1.0]])
    for ca, cb in zip(a, b):
        assert np.allclose(rot @ ca.forward, cb.forward)
        assert np.allclose(rot @ ca.position, cb.position)


def test_gait_moves_wrists_not_head():
    a = mount_cameras(standing_state(0, 0, 0, gait_phase=0.0))
    b = mount_cameras(standing_state(0, 0, 0, gait_phase=1.0))
    assert np.allclose(a[0].position, b[0].position)
    assert not np.allclose(a[2].position, b[2].position)
    assert not np.allclose(a[3].position, b[3].position)
    # forward kinematics recomputation for the left wrist
    pts = DEFAULT_BODY.local_joints(1.0)
    want = pts[4] + np.array(DEFAULT_BODY.mounts[2].offset) + [0, 0, DEFAULT_BODY.root_height]
    assert np.allclose(b[2].position, want)


def test_facing_away_is_background():
    sc = Scene((Box((2, -1, 0), (3, 1, 2)),), (-5, -5, 5, 5))
    fr = render(sc, _cam(yaw=math.pi))
    assert np.all(fr.depth == 0)
    assert np.allclose(fr.rgb, BACKGROUND)


def test_box_face_on_depth():
    sc = Scene((Box((2.0, -0.5, 0.5), (3.0, 0.5, 1.5)),), (-5, -5, 5, 5))
    fr = render(sc, _cam(res=(33, 33)))
    assert fr.depth[16, 16] == pytest.approx(2.0, abs=1e-6)


@pytest.mark.parametrize("seed", range(5))
def test_depth_matches_brute_force(seed):
    sc = generate_scene(seed)
    st = standing_state(4.0, 4.0, seed * 1.3)
    for cam in mount_cameras(st, resolution=(24, 24)):
        assert np.abs(render(sc, cam).depth - brute_force_depth(sc, cam)).max() < 1e-5


def test_project_axis_and_behind():
    cam = _cam(res=(32, 32))
    assert project([5.0, 0, 1], cam) == (16.0, 16.0)
    assert project([-1.0, 0, 1], cam) is None


def test_project_pinhole(rng):
    cam = _cam(pos=(0.3, -0.2, 1.1), yaw=0.4, pitch=-0.2, res=(48, 64), fov=70)
    f = 0.5 * 48 / math.tan(math.radians(35))
    n = 0
    while n < 100:
        p = rng.uniform(-4, 4, 3) + [4, 0, 1]
        d = p - cam.position
        xc, yc, zc = d @ cam.right, d @ cam.up, d @ cam.forward
        if zc <= 0:
            continue
        want = (32 + f * xc / zc, 24 - f * yc / zc)
        got = project(p, cam)
        if not (0 <= want[0] < 64 and 0 <= want[1] < 48):
            assert got is None
            continue
        assert abs(got[0] - want[0]) < 0.5 and abs(got[1] - want[1]) < 0.5
        n += 1


def test_heatmap_center():
    cam = _cam(res=(33, 33))
    hm = annotate_heatmap([[3.0, 0, 1]], cam)
    assert hm.valid
    assert np.unravel_index(hm.values.argmax(), hm.values.shape) == (16, 16)
    assert hm.values.sum() == pytest.approx(1, abs=1e-5)


def test_heatmap_outside_frustum():
    hm = annotate_heatmap([[-3.0, 0, 1]], _cam())
    assert not hm.valid and not hm.values.any()


def test_heatmap_symmetric_pair():
    cam = _cam(res=(32, 32))
    hm = annotate_heatmap([[3.0, 1.0, 1.0], [3.0, -1.0, 1.0]], cam).values
    assert np.abs(hm - hm[:, ::-1]).max() < 1e-6
    # direct 2-D convolution oracle
    img = np.zeros((32, 32))
    for p in ([3.0, 1.0, 1.0], [3.0, -1.0, 1.0]):
        x, y = project(p, cam)
        img[int(y), int(x)] = 1
    k = gaussian_kernel(0.05 * 32)
    ref = convolve2d(img, np.outer(k, k), mode="same")
    assert np.abs(hm - ref / ref.sum()).max() < 1e-6
