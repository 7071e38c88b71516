"""End-to-end dataset generation: scenes, motions, windows, one shard per scene."""
from __future__ import annotations

import json
import logging
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field
from pathlib import Path

import numpy as np

from .dataset import DatasetConfig, Splits, make_splits, read_shard, slice_windows, write_shard
from .sim import MotionParams, PlacementError, SceneGenerationError, SceneParams, generate_scene, sample_motion

log = logging.getLogger(__name__)


class DatagenError(RuntimeError):
    pass


@dataclass(frozen=True)
class DatagenConfig:
    seed: int = 0
    n_scenes: int = 25
    n_unseen: int = 5
    seqs_per_scene: int = 40
    eval_seqs_per_scene: int = 8  # extra sequences in training scenes (unseen motions)
    unseen_seqs_per_scene: int = 20
    max_frames: int = 50
    workers: int = 1
    scene: SceneParams = field(default_factory=SceneParams)
    motion: MotionParams = field(default_factory=MotionParams)
    dataset: DatasetConfig = field(default_factory=DatasetConfig)

    def to_dict(self):
        return asdict(self)

    @classmethod
    def from_dict(cls, d):
        d = dict(d)
        d["scene"] = SceneParams.from_dict(d.get("scene", {}))
        d["motion"] = MotionParams.from_dict(d.get("motion", {}))
        d["dataset"] = DatasetConfig.from_dict(d.get("dataset", {}))
        return cls(**d)


def derive_seed(*keys) -> int:
    return int(np.random.SeedSequence([int(k) for k in keys]).generate_state(1)[0])


def scene_ids(cfg: DatagenConfig):
    return [f"scene_{i:03d}" for i in range(cfg.n_scenes)]


def _generate_scene_shard(args):
    cfg, idx, held_out, out = args
    sid = f"scene_{idx:03d}"
    try:
        scene = generate_scene(derive_seed(cfg.seed, 1, idx), cfg.scene, scene_id=sid)
    except SceneGenerationError as e:
        raise DatagenError(f"{sid}: {e}") from e
    if held_out:
        plan = [(k, "unseen_scene") for k in range(cfg.unseen_seqs_per_scene)]
    else:
        plan = [(k, "train") for k in range(cfg.seqs_per_scene)]
        plan += [(cfg.seqs_per_scene + k, "unseen_motion") for k in range(cfg.eval_seqs_per_scene)]
    windows = []
    for k, split in plan:
        try:
            seq = sample_motion(scene, derive_seed(cfg.seed, 2, idx, k), cfg.dataset.fps,
                                cfg.max_frames, cfg.motion)
        except PlacementError as e:
            raise DatagenError(f"{sid}, sequence {k}: {e}") from e
        windows += slice_windows(seq, scene, cfg.dataset, seq_id=k, split=split)
    shard = Path(out) / "shards" / sid
    write_shard(windows, shard, config={"datagen": cfg.to_dict(), "scene": scene.to_dict()})
    (Path(out) / "scenes").mkdir(parents=True, exist_ok=True)
    (Path(out) / "scenes" / f"{sid}.json").write_text(scene.to_json())
    n_pos = sum(w.y_col for w in windows)
    return sid, len(windows), int(n_pos), split_counts(windows)


def split_counts(windows):
    out = {}
    for w in windows:
        out[w.split] = out.get(w.split, 0) + 1
    return out


def generate_dataset(cfg: DatagenConfig, out) -> dict:
    """Generate all scenes into ``out``; returns the dataset index document."""
    if cfg.n_scenes < 1:
        raise DatagenError("n_scenes must be >= 1")
    out = Path(out)
    out.mkdir(parents=True, exist_ok=True)
    ids = scene_ids(cfg)
    splits = make_splits(ids, cfg.seed, cfg.n_unseen)
    jobs = [(cfg, i, sid in splits.unseen_scenes, str(out)) for i, sid in enumerate(ids)]
    if cfg.workers > 1:
        with ProcessPoolExecutor(cfg.workers) as ex:
            results = list(ex.map(_generate_scene_shard, jobs))
    else:
        results = [_generate_scene_shard(j) for j in jobs]
    shards = []
    for sid, n, n_pos, counts in results:
        shards.append({"scene_id": sid, "path": f"shards/{sid}", "windows": n,
                       "colliding": n_pos, "splits": counts})
    total = sum(s["windows"] for s in shards)
    pos = sum(s["colliding"] for s in shards)
    index = {
        "config": cfg.to_dict(),
        "splits": splits.to_dict(),
        "shards": shards,
        "windows": total,
        "colliding": pos,
        "colliding_fraction": pos / total if total else 0.0,
    }
    (out / "dataset.json").write_text(json.dumps(index, sort_keys=True, indent=1))
    return index


def load_dataset(root, mmap=True, verify=True):
    """Read a generated dataset; returns ``(index, splits, {split: [Window]})``."""
    root = Path(root)
    try:
        index = json.loads((root / "dataset.json").read_text())
    except FileNotFoundError:
        raise FileNotFoundError(f"no dataset.json under {root}") from None
    sp = index["splits"]
    splits = Splits(tuple(sp["train_scenes"]), tuple(sp["unseen_scenes"]))
    windows = []
    for s in index["shards"]:
        windows += read_shard(root / s["path"], verify=verify, mmap=mmap)
    return index, splits, splits.partition(windows)
