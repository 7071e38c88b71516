"""Ten-sphere articulated body with procedural gait.

The root is the pelvis. Local frame: ``x`` forward, ``y`` left, ``z`` up.
Arms and legs swing in the sagittal plane as ``sin(gait_phase)``; the
left arm swings with the right leg. Head and torso are rigid w.r.t. the root.

Joint order (index: name) is fixed::

    0 head, 1 torso, 2 left_elbow, 3 right_elbow, 4 left_hand, 5 right_hand,
    6 left_leg, 7 right_leg, 8 left_foot, 9 right_foot

Camera mounts (index: name -> attached joint)::

    0 head -> head, 1 pelvis -> root, 2 left_wrist -> left_hand,
    3 right_wrist -> right_hand, 4 left_knee -> left_leg, 5 right_knee -> right_leg
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

JOINT_NAMES = (
    "head", "torso", "left_elbow", "right_elbow", "left_hand", "right_hand",
    "left_leg", "right_leg", "left_foot", "right_foot",
)
NUM_JOINTS = len(JOINT_NAMES)

MOUNT_NAMES = ("head", "pelvis", "left_wrist", "right_wrist", "left_knee", "right_knee")
ROOT_VIEW = MOUNT_NAMES.index("pelvis")


@dataclass(frozen=True)
class Mount:
    name: str
    joint: str | None  # None: attached to the root
    offset: tuple[float, float, float]  # root-local, meters
    pitch_deg: float  # positive pitches the camera up


@dataclass(frozen=True)
class BodyModel:
    root_height: float = 0.95
    # neutral root-local positions
    offsets: tuple = (
        (0.0, 0.0, 0.62),
        (0.0, 0.0, 0.30),
        (0.0, 0.22, 0.20),
        (0.0, -0.22, 0.20),
        (0.0, 0.25, -0.06),
        (0.0, -0.25, -0.06),
        (0.0, 0.10, -0.48),
        (0.0, -0.10, -0.48),
        (0.0, 0.10, -0.86),
        (0.0, -0.10, -0.86),
    )
    radii: tuple = (0.11, 0.17, 0.06, 0.06, 0.06, 0.06, 0.08, 0.08, 0.06, 0.06)
    shoulder_height: float = 0.42
    arm_swing: float = 0.45  # radians, amplitude
    leg_swing: float = 0.40
    stride_length: float = 1.4  # meters of travel per gait cycle
    mounts: tuple = (
        Mount("head", "head", (0.0, 0.0, 0.10), 0.0),
        Mount("pelvis", None, (0.16, 0.0, 0.0), 0.0),
        Mount("left_wrist", "left_hand", (0.0, 0.05, 0.0), 0.0),
        Mount("right_wrist", "right_hand", (0.0, -0.05, 0.0), 0.0),
        Mount("left_knee", "left_leg", (0.10, 0.0, 0.0), -20.0),
        Mount("right_knee", "right_leg", (0.10, 0.0, 0.0), -20.0),
    )

    def __post_init__(self):
        if len(self.offsets) != NUM_JOINTS or len(self.radii) != NUM_JOINTS:
            raise ValueError("body model needs exactly 10 joints")
        if min(self.radii) <= 0:
            raise ValueError("joint radii must be positive")
        if len(self.mounts) > 6:
            raise ValueError("at most 6 camera mounts")

    @property
    def joint_names(self):
        return JOINT_NAMES

    @property
    def radii_array(self) -> np.ndarray:
        return np.asarray(self.radii, float)

    def local_joints(self, gait_phase: float) -> np.ndarray:
        """Root-local joint positions (10, 3) at the given gait phase."""
        pts = np.array(self.offsets, float)
        s = np.sin(gait_phase)
        # arms: elbows and hands pivot at the shoulder
        for idx, sign in ((2, 1.0), (3, -1.0), (4, 1.0), (5, -1.0)):
            pivot = np.array([0.0, pts[idx, 1], self.shoulder_height])
            pts[idx] = _swing(pts[idx], pivot, sign * self.arm_swing * s)
        # legs: knees and feet pivot at the hip (left leg opposite left arm)
        for idx, sign in ((6, -1.0), (7, 1.0), (8, -1.0), (9, 1.0)):
            pivot = np.array([0.0, pts[idx, 1], 0.0])
            pts[idx] = _swing(pts[idx], pivot, sign * self.leg_swing * s)
        return pts


def _swing(p, pivot, angle):
    rel = p - pivot
    c, s = np.cos(angle), np.sin(angle)
    x = rel[0] * c - rel[2] * s
    z = rel[0] * s + rel[2] * c
    return pivot + np.array([x, rel[1], z])


DEFAULT_BODY = BodyModel()


def yaw_matrix(yaw: float) -> np.ndarray:
    c, s = np.cos(yaw), np.sin(yaw)
    return np.array([[c, -s, 0.0], [s, c, 0.0], [0.0, 0.0, 1.0]])


@dataclass(frozen=True, eq=False)
class BodyState:
    root_position: np.ndarray
    root_yaw: float
    gait_phase: float = 0.0
    model: BodyModel = field(default=DEFAULT_BODY, repr=False)

    def __post_init__(self):
        object.__setattr__(self, "root_position", np.asarray(self.root_position, float).reshape(3))
        object.__setattr__(self, "root_yaw", float(self.root_yaw))
        object.__setattr__(self, "gait_phase", float(self.gait_phase))

    @property
    def joint_world_positions(self) -> np.ndarray:
        local = self.model.local_joints(self.gait_phase)
        return local @ yaw_matrix(self.root_yaw).T + self.root_position

    def to_world(self, local: np.ndarray) -> np.ndarray:
        return np.asarray(local, float) @ yaw_matrix(self.root_yaw).T + self.root_position

    def replace(self, **kw) -> "BodyState":
        d = dict(root_position=self.root_position, root_yaw=self.root_yaw,
                 gait_phase=self.gait_phase, model=self.model)
        d.update(kw)
        return BodyState(**d)

    def __eq__(self, other):
        if not isinstance(other, BodyState):
            return NotImplemented
        return (np.array_equal(self.root_position, other.root_position)
                and self.root_yaw == other.root_yaw and self.gait_phase == other.gait_phase
                and self.model == other.model)

    def to_dict(self):
        return {"root_position": [float(v) for v in self.root_position],
                "root_yaw": self.root_yaw, "gait_phase": self.gait_phase}


def standing_state(x: float, y: float, yaw: float = 0.0, gait_phase: float = 0.0,
                   floor_height: float = 0.0, model: BodyModel = DEFAULT_BODY) -> BodyState:
    return BodyState(np.array([x, y, floor_height + model.root_height]), yaw, gait_phase, model)
