"""Scene-agnostic walking motions: smooth random heading and speed processes.

A motion is split into a *plan* (per-step speed and heading increment, drawn
from the seed) and its integration from a start pose. The closed-loop
controller reuses the same plan and integrator, adding a yaw offset.
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .body import DEFAULT_BODY, BodyModel, BodyState
from .collision import CollisionEvent, check_collision
from .scene import Scene


class PlacementError(RuntimeError):
    """No collision-free start pose was found."""


@dataclass(frozen=True)
class MotionParams:
    speed_range: tuple[float, float] = (0.5, 1.5)
    speed_sigma: float = 0.3  # m/s per sqrt(s)
    max_turn_rate: float = 0.8  # rad/s
    turn_sigma: float = 0.8  # rad/s per sqrt(s)
    start_margin: float = 0.5  # from the bounds, meters
    start_attempts: int = 100

    @property
    def max_speed(self):
        return self.speed_range[1]

    @classmethod
    def from_dict(cls, d):
        d = {k: tuple(v) if isinstance(v, list) else v for k, v in d.items()}
        return cls(**d)


@dataclass(frozen=True, eq=False)
class MotionPlan:
    speeds: np.ndarray  # (n,) m/s for each step
    turns: np.ndarray  # (n,) heading increment per step, radians

    def __len__(self):
        return len(self.speeds)


@dataclass(eq=False)
class MotionSequence:
    states: list
    fps: float
    terminal_event: CollisionEvent | None = None
    seed: int | None = None
    plan: MotionPlan | None = field(default=None, repr=False)

    def __len__(self):
        return len(self.states)


def make_plan(rng: np.random.Generator, n_steps: int, fps: float, params: MotionParams) -> MotionPlan:
    dt = 1.0 / fps
    lo, hi = params.speed_range
    speeds = np.empty(n_steps)
    turns = np.empty(n_steps)
    speed = rng.uniform(lo, hi)
    rate = rng.uniform(-params.max_turn_rate, params.max_turn_rate)
    for k in range(n_steps):
        speed = min(max(speed + params.speed_sigma * np.sqrt(dt) * rng.standard_normal(), lo), hi)
        rate = min(max(rate + params.turn_sigma * np.sqrt(dt) * rng.standard_normal(),
                       -params.max_turn_rate), params.max_turn_rate)
        speeds[k] = speed
        turns[k] = rate * dt
    return MotionPlan(speeds, turns)


def advance(state: BodyState, speed: float, turn: float, fps: float, yaw_offset: float = 0.0) -> BodyState:
    """One integration step: turn, then walk ``speed / fps`` along the new heading."""
    yaw = state.root_yaw + turn + yaw_offset
    step = speed / fps
    pos = state.root_position + step * np.array([np.cos(yaw), np.sin(yaw), 0.0])
    phase = state.gait_phase + 2.0 * np.pi * step / state.model.stride_length
    return BodyState(pos, yaw, phase, state.model)


def sample_start(scene: Scene, rng: np.random.Generator, params: MotionParams,
                 model: BodyModel = DEFAULT_BODY) -> BodyState:
    xmin, ymin, xmax, ymax = scene.bounds
    m = params.start_margin
    for _ in range(params.start_attempts):
        x = rng.uniform(xmin + m, xmax - m)
        y = rng.uniform(ymin + m, ymax - m)
        yaw = rng.uniform(-np.pi, np.pi)
        phase = rng.uniform(0, 2 * np.pi)
        state = BodyState(np.array([x, y, scene.floor_height + model.root_height]), yaw, phase, model)
        if check_collision(scene, state) is None:
            return state
    raise PlacementError(f"no collision-free start in {params.start_attempts} attempts "
                         f"(scene {scene.scene_id})")


def rollout(scene: Scene, start: BodyState, plan: MotionPlan, fps: float, max_frames: int):
    """Integrate ``plan`` from ``start``; stop at ``max_frames`` or the first collision."""
    states = [start]
    event = None
    for k in range(1, max_frames):
        s = advance(states[-1], plan.speeds[k - 1], plan.turns[k - 1], fps)
        states.append(s)
        event = check_collision(scene, s, timestep=k)
        if event is not None:
            break
    return states, event


def sample_motion(scene: Scene, seed: int, fps: float = 10.0, max_frames: int = 60,
                  params: MotionParams | None = None, start: BodyState | None = None,
                  model: BodyModel = DEFAULT_BODY) -> MotionSequence:
    """Random walk from a collision-free start, terminated at the first collision.

    The start pose and the plan come from independent child streams of
    ``seed`` so that a fixed ``start`` does not perturb the plan.
    """
    if fps <= 0:
        raise ValueError("fps must be positive")
    if max_frames < 1:
        raise ValueError("max_frames must be >= 1")
    params = params or MotionParams()
    start_ss, plan_ss = np.random.SeedSequence(seed).spawn(2)
    if start is None:
        start = sample_start(scene, np.random.default_rng(start_ss), params, model)
    elif check_collision(scene, start) is not None:
        raise PlacementError("given start pose is in collision")
    plan = make_plan(np.random.default_rng(plan_ss), max_frames - 1, fps, params)
    states, event = rollout(scene, start, plan, fps, max_frames)
    return MotionSequence(states, fps, event, seed, plan)
