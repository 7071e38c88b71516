"""Body-mounted pinhole cameras, a vectorized raycaster, and heatmap annotation.

Camera convention: ``forward``, ``right`` and ``up`` are orthonormal world
vectors. Pixel ``(row, col)`` has its center at image coordinates
``(col + 0.5, row + 0.5)``; the optical axis passes through ``(W/2, H/2)``.
Rendered depth is planar (distance along ``forward``), and pixels whose ray
hits nothing get depth 0 and the background color. The floor is not drawn.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from numba import njit
from scipy.ndimage import correlate1d

from .sim.body import BodyModel, BodyState
from .sim.scene import Box, Scene

BACKGROUND = np.array([0.55, 0.70, 0.90])
LIGHT_DIR = np.array([0.4, 0.3, 0.866])  # toward the light
LIGHT_DIR = LIGHT_DIR / np.linalg.norm(LIGHT_DIR)
AMBIENT = 0.3
DEFAULT_FOV = 90.0


@dataclass(frozen=True, eq=False)
class Camera:
    position: np.ndarray
    forward: np.ndarray
    right: np.ndarray
    up: np.ndarray
    vertical_fov: float = DEFAULT_FOV
    resolution: tuple[int, int] = (64, 64)  # (H, W)

    def __post_init__(self):
        if not 0 < self.vertical_fov < 180:
            raise ValueError("vertical_fov must lie in (0, 180)")

    @property
    def focal(self) -> float:
        return 0.5 * self.resolution[0] / np.tan(np.radians(self.vertical_fov) / 2)

    def ray_directions(self) -> np.ndarray:
        """(H, W, 3) ray directions with unit component along ``forward``."""
        h, w = self.resolution
        f = self.focal
        xs = (np.arange(w) + 0.5 - w / 2) / f
        ys = (np.arange(h) + 0.5 - h / 2) / f
        return (self.forward[None, None, :] + xs[None, :, None] * self.right[None, None, :]
                - ys[:, None, None] * self.up[None, None, :])


@dataclass(eq=False)
class EgoFrame:
    rgb: np.ndarray  # (H, W, 3) in [0, 1]
    depth: np.ndarray  # (H, W), 0 where nothing was hit
    view_index: int = 0
    frame_index: int = 0


@dataclass(eq=False)
class Heatmap:
    values: np.ndarray  # (H, W)
    valid: bool


def camera_basis(yaw: float, pitch: float):
    cy, sy, cp, sp = np.cos(yaw), np.sin(yaw), np.cos(pitch), np.sin(pitch)
    forward = np.array([cy * cp, sy * cp, sp])
    right = np.array([sy, -cy, 0.0])
    up = np.cross(right, forward)
    return forward, right, up


def mount_cameras(state: BodyState, model: BodyModel | None = None, views=None,
                  vertical_fov: float = DEFAULT_FOV, resolution=(64, 64)) -> list[Camera]:
    """Cameras at the body's mount points, facing the walking direction.

    ``views`` selects mounts by index (default: all six). Each camera sits at
    its joint plus a root-local offset; pitch is per mount (knees look down).
    """
    model = model or state.model
    views = range(len(model.mounts)) if views is None else views
    joints = model.local_joints(state.gait_phase)
    names = model.joint_names
    cams = []
    for v in views:
        m = model.mounts[v]
        base = np.zeros(3) if m.joint is None else joints[names.index(m.joint)]
        pos = state.to_world(base + np.asarray(m.offset))
        fwd, right, up = camera_basis(state.root_yaw, np.radians(m.pitch_deg))
        cams.append(Camera(pos, fwd, right, up, vertical_fov, tuple(resolution)))
    return cams


@njit(cache=True)
def _raycast_kernel(o, dirs, boxes, box_ids, cyls, cyl_ids):
    n = dirs.shape[0]
    best = np.full(n, np.inf)
    idx = np.full(n, -1, np.int64)
    normal = np.zeros((n, 3))
    for i in range(n):
        d = dirs[i]
        for b in range(boxes.shape[0]):
            tnear, tfar = -np.inf, np.inf
            near_ax, far_ax = 0, 0
            miss = False
            for a in range(3):
                lo, hi = boxes[b, a], boxes[b, a + 3]
                if d[a] == 0.0:
                    if o[a] < lo or o[a] > hi:
                        miss = True
                        break
                    continue
                t1 = (lo - o[a]) / d[a]
                t2 = (hi - o[a]) / d[a]
                if t1 > t2:
                    t1, t2 = t2, t1
                if t1 > tnear:
                    tnear, near_ax = t1, a
                if t2 < tfar:
                    tfar, far_ax = t2, a
            if miss or tnear > tfar or tfar <= 0.0:
                continue
            if tnear > 0.0:
                t, ax, sgn = tnear, near_ax, -1.0
            else:
                t, ax, sgn = tfar, far_ax, 1.0
            if t < best[i]:
                best[i] = t
                idx[i] = box_ids[b]
                normal[i, 0] = 0.0
                normal[i, 1] = 0.0
                normal[i, 2] = 0.0
                normal[i, ax] = sgn * np.sign(d[ax])
        for c in range(cyls.shape[0]):
            cx, cy, r, z0, z1 = cyls[c, 0], cyls[c, 1], cyls[c, 2], cyls[c, 3], cyls[c, 4]
            ox, oy = o[0] - cx, o[1] - cy
            a = d[0] * d[0] + d[1] * d[1]
            bq = 2.0 * (ox * d[0] + oy * d[1])
            cq = ox * ox + oy * oy - r * r
            if a > 0.0:
                disc = bq * bq - 4.0 * a * cq
                if disc >= 0.0:
                    sq = np.sqrt(disc)
                    for sgn in (-1.0, 1.0):
                        t = (-bq + sgn * sq) / (2.0 * a)
                        z = o[2] + t * d[2]
                        if t > 0.0 and z >= z0 and z <= z1 and t < best[i]:
                            best[i] = t
                            idx[i] = cyl_ids[c]
                            normal[i, 0] = (ox + t * d[0]) / r
                            normal[i, 1] = (oy + t * d[1]) / r
                            normal[i, 2] = 0.0
            if d[2] != 0.0:
                for zc, nz in ((z0, -1.0), (z1, 1.0)):
                    t = (zc - o[2]) / d[2]
                    px, py = ox + t * d[0], oy + t * d[1]
                    if t > 0.0 and px * px + py * py <= r * r and t < best[i]:
                        best[i] = t
                        idx[i] = cyl_ids[c]
                        normal[i, 0] = 0.0
                        normal[i, 1] = 0.0
                        normal[i, 2] = nz
    return best, idx, normal


def pack_scene(scene: Scene):
    """Obstacle parameter arrays for the raycast kernel (cached per scene)."""
    packed = _PACKED.get(id(scene))
    if packed is not None and packed[0] is scene:
        return packed[1]
    boxes, box_ids, cyls, cyl_ids = [], [], [], []
    for k, ob in enumerate(scene.obstacles):
        if isinstance(ob, Box):
            boxes.append(tuple(ob.min) + tuple(ob.max))
            box_ids.append(k)
        else:
            cyls.append(tuple(ob.center) + (ob.radius, ob.z_min, ob.z_max))
            cyl_ids.append(k)
    arrays = (np.array(boxes, float).reshape(-1, 6), np.array(box_ids, np.int64),
              np.array(cyls, float).reshape(-1, 5), np.array(cyl_ids, np.int64))
    if len(_PACKED) > 64:
        _PACKED.clear()
    _PACKED[id(scene)] = (scene, arrays)
    return arrays


_PACKED: dict = {}


def raycast(scene: Scene, origin: np.ndarray, dirs: np.ndarray):
    """Nearest hit parameter ``t`` (inf for miss), obstacle index (-1) and normal for each ray.

    ``t`` is measured in units of the direction vectors. Hits at ``t <= 0``
    are ignored, so a ray starting inside an obstacle reports its exit.
    """
    dirs = np.ascontiguousarray(np.asarray(dirs, float).reshape(-1, 3))
    o = np.asarray(origin, float).reshape(3)
    return _raycast_kernel(o, dirs, *pack_scene(scene))


def render(scene: Scene, camera: Camera, view_index: int = 0, frame_index: int = 0) -> EgoFrame:
    """Raycast one frame: planar depth and Lambert-shaded per-obstacle albedo."""
    h, w = camera.resolution
    dirs = camera.ray_directions().reshape(-1, 3)
    t, idx, normal = raycast(scene, camera.position, dirs)
    hit = np.isfinite(t)
    depth = np.where(hit, t, 0.0)
    albedo = np.array([ob.albedo for ob in scene.obstacles] + [tuple(BACKGROUND)])
    shade = AMBIENT + (1 - AMBIENT) * np.clip(normal @ LIGHT_DIR, 0.0, None)
    rgb = np.where(hit[:, None], albedo[idx] * shade[:, None], BACKGROUND)
    return EgoFrame(np.clip(rgb, 0, 1).reshape(h, w, 3), depth.reshape(h, w), view_index, frame_index)


def project(point, camera: Camera):
    """Pinhole projection to continuous image coordinates ``(x, y)``.

    Returns None when the point is behind the camera or outside the frustum.
    Integer pixel is ``(row, col) = (floor(y), floor(x))``.
    """
    d = np.asarray(point, float) - camera.position
    z = d @ camera.forward
    if z <= 1e-9:
        return None
    h, w = camera.resolution
    f = camera.focal
    x = w / 2 + f * (d @ camera.right) / z
    y = h / 2 - f * (d @ camera.up) / z
    if not (0 <= x < w and 0 <= y < h):
        return None
    return float(x), float(y)


def gaussian_kernel(sigma: float) -> np.ndarray:
    radius = int(np.ceil(3 * sigma))
    x = np.arange(-radius, radius + 1, dtype=float)
    k = np.exp(-0.5 * (x / sigma) ** 2)
    return k / k.sum()


def annotate_heatmap(contacts, camera: Camera, sigma_px: float | None = None) -> Heatmap:
    """Gaussian-smoothed, normalized image of the projected contact points."""
    h, w = camera.resolution
    if sigma_px is None:
        sigma_px = 0.05 * w
    if sigma_px <= 0:
        raise ValueError("sigma_px must be positive")
    img = np.zeros((h, w))
    for p in np.asarray(contacts, float).reshape(-1, 3):
        xy = project(p, camera)
        if xy is not None:
            img[int(xy[1]), int(xy[0])] = 1.0
    if not img.any():
        return Heatmap(np.zeros((h, w)), False)
    k = gaussian_kernel(sigma_px)
    img = correlate1d(correlate1d(img, k, axis=0, mode="constant"), k, axis=1, mode="constant")
    return Heatmap(img / img.sum(), True)
