"""Procedural indoor scenes built from axis-aligned boxes and vertical cylinders.

All lengths are in meters, ``z`` is up, and the floor is the plane
``z = floor_height``. A scene is fully determined by ``(seed, params)``.

JSON schema (``Scene.to_json``)::

    {
      "scene_id": str,
      "seed": int,
      "floor_height": float,
      "bounds": [xmin, ymin, xmax, ymax],
      "obstacles": [
        {"kind": "box", "min": [x, y, z], "max": [x, y, z], "albedo": [r, g, b]},
        {"kind": "cylinder", "center": [x, y], "radius": float,
         "z_min": float, "z_max": float, "albedo": [r, g, b]}
      ]
    }
"""
from __future__ import annotations

import json
from dataclasses import dataclass
from typing import Union

import numpy as np


class SceneGenerationError(ValueError):
    """Raised when scene parameters cannot produce a valid scene."""


@dataclass(frozen=True)
class Box:
    min: tuple[float, float, float]
    max: tuple[float, float, float]
    albedo: tuple[float, float, float] = (0.7, 0.7, 0.7)

    kind = "box"

    def to_dict(self):
        return {"kind": "box", "min": list(self.min), "max": list(self.max),
                "albedo": list(self.albedo)}


@dataclass(frozen=True)
class Cylinder:
    center: tuple[float, float]
    radius: float
    z_min: float
    z_max: float
    albedo: tuple[float, float, float] = (0.7, 0.7, 0.7)

    kind = "cylinder"

    def to_dict(self):
        return {"kind": "cylinder", "center": list(self.center), "radius": self.radius,
                "z_min": self.z_min, "z_max": self.z_max, "albedo": list(self.albedo)}


Obstacle = Union[Box, Cylinder]


def obstacle_from_dict(d: dict) -> Obstacle:
    kind = d["kind"]
    if kind == "box":
        return Box(tuple(map(float, d["min"])), tuple(map(float, d["max"])),
                   tuple(map(float, d["albedo"])))
    if kind == "cylinder":
        return Cylinder(tuple(map(float, d["center"])), float(d["radius"]),
                        float(d["z_min"]), float(d["z_max"]), tuple(map(float, d["albedo"])))
    raise ValueError(f"unknown obstacle kind {kind!r}")


def obstacle_extent(ob: Obstacle) -> tuple[np.ndarray, np.ndarray]:
    """Axis-aligned bounding box ``(lo, hi)`` of an obstacle."""
    if isinstance(ob, Box):
        return np.asarray(ob.min, float), np.asarray(ob.max, float)
    c = np.asarray(ob.center, float)
    lo = np.array([c[0] - ob.radius, c[1] - ob.radius, ob.z_min])
    hi = np.array([c[0] + ob.radius, c[1] + ob.radius, ob.z_max])
    return lo, hi


@dataclass(frozen=True)
class Scene:
    obstacles: tuple[Obstacle, ...]
    bounds: tuple[float, float, float, float]
    floor_height: float = 0.0
    scene_id: str = "scene"
    seed: int = 0

    def to_dict(self):
        return {
            "scene_id": self.scene_id,
            "seed": int(self.seed),
            "floor_height": float(self.floor_height),
            "bounds": [float(b) for b in self.bounds],
            "obstacles": [ob.to_dict() for ob in self.obstacles],
        }

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), sort_keys=True)

    @classmethod
    def from_dict(cls, d: dict) -> "Scene":
        return cls(
            obstacles=tuple(obstacle_from_dict(o) for o in d["obstacles"]),
            bounds=tuple(float(b) for b in d["bounds"]),
            floor_height=float(d["floor_height"]),
            scene_id=str(d["scene_id"]),
            seed=int(d["seed"]),
        )

    @classmethod
    def from_json(cls, s: str) -> "Scene":
        return cls.from_dict(json.loads(s))

    def validate(self):
        """Check the scene invariants, raising ``SceneGenerationError`` on failure."""
        if len(self.obstacles) < 1:
            raise SceneGenerationError("scene must contain at least one obstacle")
        xmin, ymin, xmax, ymax = self.bounds
        if not (xmax > xmin and ymax > ymin):
            raise SceneGenerationError("degenerate bounds")
        for ob in self.obstacles:
            lo, hi = obstacle_extent(ob)
            if np.any(hi <= lo):
                raise SceneGenerationError(f"degenerate obstacle {ob}")
            if lo[0] < xmin - 1e-9 or lo[1] < ymin - 1e-9 or hi[0] > xmax + 1e-9 or hi[1] > ymax + 1e-9:
                raise SceneGenerationError(f"obstacle outside bounds: {ob}")
            if lo[2] < self.floor_height - 1e-9:
                raise SceneGenerationError(f"obstacle penetrates the floor: {ob}")
        return self


@dataclass(frozen=True)
class SceneParams:
    """Parameters for :func:`generate_scene`.

    ``size`` is the room footprint (x, y). Interior obstacles are sampled
    uniformly inside the walls; a fraction of boxes are raised off the floor
    (shelves, counters) so that upper-body collisions occur too.
    """
    size: tuple[float, float] = (8.0, 8.0)
    min_count: int = 6
    max_count: int = 12
    box_size: tuple[float, float] = (0.3, 1.6)
    box_height: tuple[float, float] = (0.4, 2.2)
    cylinder_radius: tuple[float, float] = (0.1, 0.45)
    cylinder_height: tuple[float, float] = (0.5, 2.2)
    p_cylinder: float = 0.3
    p_raised: float = 0.15
    raised_bottom: tuple[float, float] = (0.9, 1.5)
    walls: bool = True
    wall_thickness: float = 0.2
    wall_height: float = 2.5
    floor_height: float = 0.0

    @classmethod
    def from_dict(cls, d: dict) -> "SceneParams":
        d = dict(d)
        for k, v in list(d.items()):
            if isinstance(v, list):
                d[k] = tuple(v)
        return cls(**d)


def _albedo(rng):
    return tuple(float(round(c, 6)) for c in rng.uniform(0.25, 0.95, size=3))


def _check_params(p: SceneParams):
    if p.min_count < 1:
        raise SceneGenerationError("min_count must be >= 1 (a scene needs at least one obstacle)")
    if p.max_count < p.min_count:
        raise SceneGenerationError("max_count < min_count")
    inner = np.asarray(p.size, float) - (2 * p.wall_thickness if p.walls else 0.0)
    if np.any(inner <= 0):
        raise SceneGenerationError("walls leave no interior")
    for lo, hi in (p.box_size, p.box_height, p.cylinder_radius, p.cylinder_height):
        if not 0 < lo <= hi:
            raise SceneGenerationError("size ranges must satisfy 0 < lo <= hi")
    if p.box_size[0] > inner.min() or 2 * p.cylinder_radius[0] > inner.min():
        raise SceneGenerationError("obstacles cannot fit inside the bounds")
    if not 0 <= p.p_cylinder <= 1 or not 0 <= p.p_raised <= 1:
        raise SceneGenerationError("probabilities must lie in [0, 1]")
    return inner


def generate_scene(seed: int, params: SceneParams | None = None, scene_id: str | None = None) -> Scene:
    """Sample a room with perimeter walls and convex furniture-like obstacles."""
    p = params or SceneParams()
    inner = _check_params(p)
    rng = np.random.default_rng(seed)
    sx, sy = map(float, p.size)
    f = float(p.floor_height)
    obstacles: list[Obstacle] = []
    w = float(p.wall_thickness)
    if p.walls:
        top = f + p.wall_height
        wall_color = (0.8, 0.78, 0.74)
        obstacles += [
            Box((0.0, 0.0, f), (sx, w, top), wall_color),
            Box((0.0, sy - w, f), (sx, sy, top), wall_color),
            Box((0.0, w, f), (w, sy - w, top), wall_color),
            Box((sx - w, w, f), (sx, sy - w, top), wall_color),
        ]
    off = w if p.walls else 0.0
    n = int(rng.integers(p.min_count, p.max_count + 1))
    for _ in range(n):
        if rng.random() < p.p_cylinder:
            r = float(rng.uniform(*p.cylinder_radius))
            r = min(r, inner.min() / 2)
            cx = float(rng.uniform(off + r, sx - off - r))
            cy = float(rng.uniform(off + r, sy - off - r))
            h = float(rng.uniform(*p.cylinder_height))
            obstacles.append(Cylinder((cx, cy), r, f, f + h, _albedo(rng)))
        else:
            ex = min(float(rng.uniform(*p.box_size)), inner[0])
            ey = min(float(rng.uniform(*p.box_size)), inner[1])
            x0 = float(rng.uniform(off, sx - off - ex))
            y0 = float(rng.uniform(off, sy - off - ey))
            h = float(rng.uniform(*p.box_height))
            z0 = f
            if rng.random() < p.p_raised:
                z0 = f + float(rng.uniform(*p.raised_bottom))
                h = max(0.1, min(h, 0.6))
            obstacles.append(Box((x0, y0, z0), (x0 + ex, y0 + ey, z0 + h), _albedo(rng)))
    scene = Scene(
        obstacles=tuple(obstacles),
        bounds=(0.0, 0.0, sx, sy),
        floor_height=f,
        scene_id=scene_id if scene_id is not None else f"scene_{seed}",
        seed=int(seed),
    )
    return scene.validate()
