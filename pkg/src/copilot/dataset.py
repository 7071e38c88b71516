"""Supervised windows over motion sequences, scene-level splits, and shard I/O."""
from __future__ import annotations

import logging
from dataclasses import asdict, dataclass

import numpy as np

from .render import annotate_heatmap, mount_cameras, render
from .shards import read_container, write_container
from .sim import NUM_JOINTS, Scene, assign_joints
from .sim.motion import MotionSequence

log = logging.getLogger(__name__)

MODALITIES = ("rgb", "depth", "rgbd")
DEPTH_SCALE = 5.0  # meters; depth is divided by this before entering the model


@dataclass(frozen=True)
class DatasetConfig:
    T: int = 10
    H_horizon: int = 10
    fps: float = 10.0
    stride: int = 10
    V: int = 3
    image_size: int = 64
    modality: str = "rgbd"
    sigma_px: float | None = None  # default: 5% of the image width
    vertical_fov: float = 90.0

    def __post_init__(self):
        if min(self.T, self.H_horizon, self.stride) < 1:
            raise ValueError("T, H_horizon and stride must be >= 1")
        if not 1 <= self.V <= 6:
            raise ValueError("V must be in [1, 6]")
        if self.modality not in MODALITIES:
            raise ValueError(f"modality must be one of {MODALITIES}")

    @property
    def views(self) -> tuple[int, ...]:
        return tuple(range(self.V))

    @property
    def sigma(self) -> float:
        return self.sigma_px if self.sigma_px is not None else 0.05 * self.image_size

    def to_dict(self):
        return asdict(self)

    @classmethod
    def from_dict(cls, d):
        return cls(**d)


@dataclass(eq=False)
class Window:
    heatmaps: np.ndarray  # (V, T, H, W) float32
    heatmap_valid: np.ndarray  # (V, T) bool
    y_col: bool
    y_joint: np.ndarray  # (10,) bool
    scene_id: str
    window_id: str
    modality: str
    depth: np.ndarray | None = None  # (V, T, H, W) float32 meters, 0 = no hit
    rgb: np.ndarray | None = None  # (V, T, H, W, 3) uint8
    seq_id: int = 0
    start: int = 0
    split: str = "train"
    views: tuple = (0, 1, 2)

    def frames(self, modality: str | None = None) -> np.ndarray:
        """Model input (V, T, C, H, W) float32 for ``modality``."""
        return frames_to_input(self.depth, self.rgb, modality or self.modality)

    def index_entry(self):
        return {"window_id": self.window_id, "scene_id": self.scene_id, "seq_id": int(self.seq_id),
                "start": int(self.start), "split": self.split, "modality": self.modality,
                "y_col": bool(self.y_col), "y_joint": [bool(b) for b in self.y_joint],
                "views": list(self.views)}


def frames_to_input(depth, rgb, modality):
    parts = []
    if modality in ("rgb", "rgbd"):
        if rgb is None:
            raise ValueError("window carries no RGB frames")
        parts.append(np.moveaxis(np.asarray(rgb, np.float32) / 255.0, -1, -3))
    if modality in ("depth", "rgbd"):
        if depth is None:
            raise ValueError("window carries no depth frames")
        parts.append(np.asarray(depth, np.float32)[..., None, :, :] / DEPTH_SCALE)
    if not parts:
        raise ValueError(f"unknown modality {modality!r}")
    return np.concatenate(parts, axis=-3)


def window_labels(n_frames: int, terminal: int | None, cfg: DatasetConfig):
    """``[(start, y_col)]`` for every window kept from a sequence.

    Windows whose observation span reaches the terminal frame are dropped;
    without a terminal event the whole horizon must lie inside the sequence.
    """
    out = []
    s = 0
    while s + cfg.T <= n_frames:
        if terminal is None:
            if s + cfg.T + cfg.H_horizon > n_frames:
                break
            out.append((s, False))
        else:
            if s + cfg.T > terminal:
                break
            out.append((s, terminal < s + cfg.T + cfg.H_horizon))
        s += cfg.stride
    return out


def render_sequence_frames(seq: MotionSequence, scene: Scene, frame_ids, cfg: DatasetConfig):
    """Render depth and RGB for the requested frames; returns {frame: (cams, depth, rgb)}."""
    res = (cfg.image_size, cfg.image_size)
    out = {}
    for k in frame_ids:
        cams = mount_cameras(seq.states[k], views=cfg.views, vertical_fov=cfg.vertical_fov,
                             resolution=res)
        frames = [render(scene, c, v, k) for v, c in enumerate(cams)]
        depth = np.stack([f.depth for f in frames]).astype(np.float32)
        rgb = np.stack([np.round(f.rgb * 255) for f in frames]).astype(np.uint8)
        out[k] = (cams, depth, rgb)
    return out


def slice_windows(seq: MotionSequence, scene: Scene, cfg: DatasetConfig, seq_id: int = 0,
                  split: str = "train") -> list[Window]:
    """Cut a sequence into labeled windows of ``T`` frames stepping by ``stride``."""
    n = len(seq)
    if n < cfg.T:
        return []
    ev = seq.terminal_event
    labels = window_labels(n, ev.timestep if ev is not None else None, cfg)
    if not labels:
        return []
    needed = sorted({s + t for s, _ in labels for t in range(cfg.T)})
    rendered = render_sequence_frames(seq, scene, needed, cfg)
    if ev is not None:
        y_joint_terminal = assign_joints(ev.contact_points, seq.states[ev.timestep])
    hw = (cfg.image_size, cfg.image_size)
    windows = []
    for s, y_col in labels:
        V, T = cfg.V, cfg.T
        heat = np.zeros((V, T) + hw, np.float32)
        valid = np.zeros((V, T), bool)
        if y_col:
            for t in range(T):
                for v, cam in enumerate(rendered[s + t][0]):
                    hm = annotate_heatmap(ev.contact_points, cam, cfg.sigma)
                    heat[v, t] = hm.values
                    valid[v, t] = hm.valid
            y_joint = y_joint_terminal.copy()
        else:
            y_joint = np.zeros(NUM_JOINTS, bool)
        depth = rgb = None
        if cfg.modality in ("depth", "rgbd"):
            depth = np.stack([rendered[s + t][1] for t in range(T)], axis=1)
        if cfg.modality in ("rgb", "rgbd"):
            rgb = np.stack([rendered[s + t][2] for t in range(T)], axis=1)
        windows.append(Window(
            heatmaps=heat, heatmap_valid=valid, y_col=bool(y_col), y_joint=y_joint,
            scene_id=scene.scene_id, window_id=f"{scene.scene_id}/{seq_id}/{s}",
            modality=cfg.modality, depth=depth, rgb=rgb, seq_id=seq_id, start=s, split=split,
            views=cfg.views,
        ))
    return windows


# -- shards -----------------------------------------------------------------

def write_shard(windows, path, config: dict | None = None) -> dict:
    """Serialize windows into a container directory; returns the manifest."""
    windows = list(windows)

    def tensors():
        for i, w in enumerate(windows):
            if w.depth is not None:
                yield f"{i}/depth", w.depth
            if w.rgb is not None:
                yield f"{i}/rgb", w.rgb
            yield f"{i}/heatmaps", w.heatmaps
            yield f"{i}/heatmap_valid", w.heatmap_valid
            yield f"{i}/y_col", np.array([w.y_col], bool)
            yield f"{i}/y_joint", w.y_joint

    n_pos = sum(bool(w.y_col) for w in windows)
    meta = {
        "config": config or {},
        "windows": [w.index_entry() for w in windows],
        "class_balance": {"windows": len(windows), "colliding": n_pos,
                          "fraction": n_pos / len(windows) if windows else 0.0},
    }
    log.info("shard %s: %d windows, %.1f%% colliding", path, len(windows),
             100 * meta["class_balance"]["fraction"])
    return write_container(path, tensors(), meta)


def read_shard(path, verify=True, mmap=False) -> list[Window]:
    manifest, t = read_container(path, verify=verify, mmap=mmap)
    windows = []
    for i, e in enumerate(manifest["meta"]["windows"]):
        windows.append(Window(
            heatmaps=t[f"{i}/heatmaps"], heatmap_valid=t[f"{i}/heatmap_valid"],
            y_col=bool(t[f"{i}/y_col"][0]), y_joint=t[f"{i}/y_joint"],
            scene_id=e["scene_id"], window_id=e["window_id"], modality=e["modality"],
            depth=t.get(f"{i}/depth"), rgb=t.get(f"{i}/rgb"), seq_id=e["seq_id"],
            start=e["start"], split=e["split"], views=tuple(e["views"]),
        ))
    return windows


# -- splits -----------------------------------------------------------------

@dataclass(frozen=True)
class Splits:
    train_scenes: tuple[str, ...]
    unseen_scenes: tuple[str, ...]

    def split_of(self, window: Window) -> str:
        if window.scene_id in self.unseen_scenes:
            return "unseen_scene"
        if window.scene_id not in self.train_scenes:
            raise KeyError(f"scene {window.scene_id!r} is in neither split")
        return "unseen_motion" if window.split == "unseen_motion" else "train"

    def partition(self, windows) -> dict[str, list[Window]]:
        """Group windows into ``train``, ``unseen_motion`` and ``unseen_scene``."""
        out = {"train": [], "unseen_motion": [], "unseen_scene": []}
        for w in windows:
            out[self.split_of(w)].append(w)
        return out

    def to_dict(self):
        return {"train_scenes": list(self.train_scenes), "unseen_scenes": list(self.unseen_scenes)}


def make_splits(scene_ids, seed: int, n_unseen: int) -> Splits:
    """Hold out ``n_unseen`` scenes chosen by ``seed``; the rest are training scenes."""
    scene_ids = sorted(set(scene_ids))
    if not 0 <= n_unseen < len(scene_ids):
        raise ValueError(f"n_unseen={n_unseen} must be < number of scenes ({len(scene_ids)})")
    order = np.random.default_rng(seed).permutation(len(scene_ids))
    held = sorted(scene_ids[i] for i in order[:n_unseen])
    train = tuple(s for s in scene_ids if s not in held)
    return Splits(train, tuple(held))


def class_balance(windows) -> float:
    windows = list(windows)
    return sum(bool(w.y_col) for w in windows) / len(windows) if windows else 0.0
