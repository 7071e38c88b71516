"""Sphere-vs-primitive collision checks and per-joint contact assignment."""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .body import NUM_JOINTS, BodyState
from .scene import Box, Obstacle, Scene


@dataclass(frozen=True, eq=False)
class CollisionEvent:
    timestep: int
    contact_points: np.ndarray  # (K, 3)
    colliding_joints: tuple[int, ...]

    def to_dict(self):
        return {"timestep": int(self.timestep),
                "contact_points": np.asarray(self.contact_points).tolist(),
                "colliding_joints": list(self.colliding_joints)}


def closest_point(ob: Obstacle, p: np.ndarray) -> np.ndarray:
    """Point of the solid obstacle closest to ``p`` (``p`` itself when inside)."""
    p = np.asarray(p, float)
    if isinstance(ob, Box):
        return np.clip(p, ob.min, ob.max)
    c = np.asarray(ob.center, float)
    h = p[:2] - c
    r = np.hypot(h[0], h[1])
    xy = p[:2] if r <= ob.radius else c + h * (ob.radius / r)
    return np.array([xy[0], xy[1], min(max(p[2], ob.z_min), ob.z_max)])


def signed_gap(ob: Obstacle, center: np.ndarray, radius: float) -> float:
    """Distance from the sphere surface to the obstacle; <= 0 means contact.

    Only exact outside the obstacle; any center inside returns ``-radius``.
    """
    q = closest_point(ob, center)
    return float(np.linalg.norm(np.asarray(center, float) - q)) - radius


def check_collision(scene: Scene, state: BodyState, timestep: int = 0) -> CollisionEvent | None:
    """Body-scene collision test using the body's joint spheres.

    A sphere touching an obstacle exactly (gap == 0) counts as contact. The
    witness point of each intersecting (sphere, obstacle) pair is the
    obstacle point deepest toward the sphere center, i.e. the closest
    obstacle point, or the center itself when it lies inside. The floor is
    not an obstacle, so feet on the ground never collide.
    """
    joints = state.joint_world_positions
    radii = state.model.radii_array
    points, hit = [], set()
    for j in range(NUM_JOINTS):
        c = joints[j]
        for ob in scene.obstacles:
            q = closest_point(ob, c)
            if np.dot(c - q, c - q) <= radii[j] * radii[j]:
                points.append(q)
                hit.add(j)
    if not points:
        return None
    return CollisionEvent(int(timestep), np.array(points), tuple(sorted(hit)))


class ContractViolation(ValueError):
    pass


def assign_joints(contacts, state: BodyState) -> np.ndarray:
    """Boolean vector (10,) marking joints that own at least one contact.

    Each contact goes to the joint with the nearest world position; exact
    ties go to the lower joint index.
    """
    contacts = np.asarray(contacts, float).reshape(-1, 3)
    if len(contacts) == 0:
        raise ContractViolation("assign_joints needs at least one contact point")
    joints = state.joint_world_positions
    d2 = ((contacts[:, None, :] - joints[None, :, :]) ** 2).sum(-1)
    owner = np.argmin(d2, axis=1)  # first minimum wins
    out = np.zeros(NUM_JOINTS, bool)
    out[owner] = True
    return out
