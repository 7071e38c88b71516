"""Closed-loop collision avoidance: yaw the body away from predicted collision regions."""
from __future__ import annotations

import json
from collections import deque
from dataclasses import asdict, dataclass, field

import numpy as np
import torch

from .dataset import DatasetConfig, frames_to_input
from .render import mount_cameras, render
from .sim import ROOT_VIEW, BodyState, MotionParams, MotionPlan, Scene, check_collision, sample_motion
from .sim.motion import advance

NONE, LEFT, RIGHT = "none", "yaw_left_5", "yaw_right_5"
ACTIONS = (NONE, LEFT, RIGHT)


@dataclass(frozen=True)
class ControlConfig:
    threshold: float = 0.5  # trigger on the overall collision probability
    yaw_step_deg: float = 5.0
    deadband: float = 0.05  # minimum |left - right| heatmap mass
    max_frames: int = 60
    replan_interval: int = 1

    def __post_init__(self):
        if not 0 < self.threshold < 1:
            raise ValueError("threshold must lie in (0, 1)")
        if self.yaw_step_deg <= 0:
            raise ValueError("yaw step must be positive")

    def yaw(self, action: str) -> float:
        step = np.radians(self.yaw_step_deg)
        return {NONE: 0.0, LEFT: step, RIGHT: -step}[action]

    def to_dict(self):
        return asdict(self)

    @classmethod
    def from_dict(cls, d):
        return cls(**d)


def decide(col_prob: float, heatmap: np.ndarray | None, cfg: ControlConfig):
    """Action from the overall probability and the last-frame root heatmap.

    Yaws away from the image half holding more heatmap mass; the image's
    left half is the body's left.
    """
    info = {"y_col_hat": float(col_prob), "left": None, "right": None}
    if col_prob < cfg.threshold or heatmap is None:
        return NONE, info
    w = heatmap.shape[-1]
    left = float(heatmap[..., : w // 2].sum())
    right = float(heatmap[..., w // 2:].sum())
    info.update(left=left, right=right)
    if abs(left - right) < cfg.deadband:
        return NONE, info
    return (RIGHT if left > right else LEFT), info


def step_policy(net, obs_history, cfg: ControlConfig):
    """One control decision from ``T`` root-view frames ``(T, C, H, W)``."""
    obs = torch.as_tensor(np.asarray(obs_history), dtype=torch.float32)
    if obs.ndim != 4 or obs.shape[0] != net.cfg.T:
        raise ValueError(f"expected {net.cfg.T} root-view frames (T, C, H, W), got {tuple(obs.shape)}")
    with torch.no_grad():
        p = net(obs[None, None], with_maps=True)
    heat = p.map_log[0, 0, -1].exp().numpy()
    return decide(float(p.col[0]), heat, cfg)


class ModelPolicy:
    """Learned policy around a single-view checkpoint."""

    def __init__(self, net, cfg: ControlConfig):
        if net.cfg.attention_mode != "single_view":
            raise ValueError("the controller needs a single_view (root-only) model")
        self.net = net
        self.cfg = cfg
        self.modality = net.cfg.modality

    def __call__(self, history, **_):
        obs = np.stack([frames_to_input(d, r, self.modality) for d, r in history])
        return step_policy(self.net, obs, self.cfg)


class NoOpPolicy:
    def __call__(self, history, **_):
        return NONE, {"y_col_hat": None, "left": None, "right": None}


class ConstantPolicy:
    """Always reports the same probability; used to check the trigger logic."""

    def __init__(self, col_prob, cfg: ControlConfig):
        self.col_prob, self.cfg = col_prob, cfg

    def __call__(self, history, **_):
        return decide(self.col_prob, None, self.cfg)


class GeometryOraclePolicy:
    """Scripted policy using ground truth: picks the turn that delays collision the longest."""

    def __init__(self, cfg: ControlConfig, lookahead: int = 10):
        self.cfg, self.lookahead = cfg, lookahead

    def _time_to_collision(self, scene, state, plan, k, fps, action):
        s = state
        for i in range(self.lookahead):
            j = min(k + i, len(plan) - 1)
            s = advance(s, plan.speeds[j], plan.turns[j], fps, self.cfg.yaw(action))
            if check_collision(scene, s) is not None:
                return i
        return self.lookahead

    def __call__(self, history, scene=None, state=None, plan=None, k=0, fps=10.0, **_):
        ttc = {a: self._time_to_collision(scene, state, plan, k, fps, a) for a in ACTIONS}
        info = {"y_col_hat": float(ttc[NONE] < self.lookahead), "left": None, "right": None}
        if ttc[NONE] >= self.lookahead:
            return NONE, info
        best = max((LEFT, RIGHT), key=lambda a: ttc[a])
        return (best if ttc[best] > ttc[NONE] else NONE), info


@dataclass
class Episode:
    scene: Scene
    start: BodyState
    plan: MotionPlan
    seed: int
    collision_frame: int


@dataclass
class EpisodeOutcome:
    collided: bool
    frames_survived: int
    interventions: int
    trajectory: list  # root poses
    log: list = field(default_factory=list)

    def to_dict(self):
        return {"collided": self.collided, "frames_survived": self.frames_survived,
                "interventions": self.interventions}


def _root_frame(scene, state, dcfg: DatasetConfig):
    cam = mount_cameras(state, views=[ROOT_VIEW], vertical_fov=dcfg.vertical_fov,
                        resolution=(dcfg.image_size, dcfg.image_size))[0]
    f = render(scene, cam)
    return f.depth.astype(np.float32), np.round(f.rgb * 255).astype(np.uint8)


def rollout_episode(scene: Scene, start: BodyState, plan: MotionPlan, policy, cfg: ControlConfig,
                    dcfg: DatasetConfig) -> EpisodeOutcome:
    """Autoregressive control loop: observe, decide, yaw, advance, re-render.

    Decisions start once ``T`` frames of history exist. A yaw is added to the
    heading before the step and persists, since later steps integrate from it.
    """
    state = start
    history = deque(maxlen=dcfg.T)
    history.append(_root_frame(scene, state, dcfg))
    traj = [state.to_dict()]
    log = []
    interventions = 0
    collided = check_collision(scene, state) is not None
    k = 0
    while not collided and k + 1 < cfg.max_frames:
        action, info = NONE, {"y_col_hat": None, "left": None, "right": None}
        if len(history) == dcfg.T and k % cfg.replan_interval == 0:
            action, info = policy(list(history), scene=scene, state=state, plan=plan, k=k, fps=dcfg.fps)
        interventions += action != NONE
        log.append({"frame": k, **state.to_dict(), "action": action, **info})
        j = min(k, len(plan) - 1)
        state = advance(state, plan.speeds[j], plan.turns[j], dcfg.fps, cfg.yaw(action))
        k += 1
        traj.append(state.to_dict())
        collided = check_collision(scene, state, k) is not None
        if not collided:
            history.append(_root_frame(scene, state, dcfg))
    log.append({"frame": k, **state.to_dict(), "action": None, "collided": collided})
    return EpisodeOutcome(collided, k, interventions, traj, log)


def make_episodes(scenes, n: int, seed: int, cfg: ControlConfig, dcfg: DatasetConfig,
                  motion: MotionParams | None = None, min_frame: int | None = None,
                  max_attempts: int = 5000) -> list[Episode]:
    """Collision-bound episodes: uncontrolled motions that collide within a frame window.

    The collision must happen no earlier than ``min_frame`` (default: T + H)
    and at least ``H`` frames before ``cfg.max_frames``.
    """
    lo = dcfg.T + dcfg.H_horizon if min_frame is None else min_frame
    hi = cfg.max_frames - dcfg.H_horizon
    rng = np.random.default_rng(seed)
    out = []
    for _ in range(max_attempts):
        if len(out) >= n:
            break
        scene = scenes[int(rng.integers(len(scenes)))]
        s = int(rng.integers(2**31))
        seq = sample_motion(scene, s, dcfg.fps, cfg.max_frames, motion)
        ev = seq.terminal_event
        if ev is not None and lo <= ev.timestep <= hi:
            out.append(Episode(scene, seq.states[0], seq.plan, s, ev.timestep))
    return out


@dataclass
class AvoidanceResult:
    rate: float
    outcomes: list


def evaluate_avoidance(policy, episodes, cfg: ControlConfig, dcfg: DatasetConfig,
                       verify=True) -> AvoidanceResult:
    """Fraction of collision-bound episodes that end without collision under ``policy``."""
    if not episodes:
        raise ValueError("no episodes to evaluate")
    outcomes = []
    for ep in episodes:
        if verify:
            base = rollout_episode(ep.scene, ep.start, ep.plan, NoOpPolicy(), cfg, dcfg)
            if not base.collided:
                raise ValueError(f"episode seed {ep.seed} is not collision-bound")
        outcomes.append(rollout_episode(ep.scene, ep.start, ep.plan, policy, cfg, dcfg))
    rate = sum(not o.collided for o in outcomes) / len(outcomes)
    return AvoidanceResult(rate, outcomes)


def write_episode_log(outcome: EpisodeOutcome, path, episode_id=0, scene_id=None):
    """Append one JSON line per frame."""
    with open(path, "a") as fh:
        for row in outcome.log:
            fh.write(json.dumps({"episode": episode_id, "scene_id": scene_id, **row}) + "\n")
