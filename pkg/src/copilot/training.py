"""Optimization loop, checkpoints, and split evaluation."""
from __future__ import annotations

import logging
import math
import time
from dataclasses import asdict, dataclass, field
from pathlib import Path

import numpy as np
import torch

from .losses import LossWeights, total_loss
from .metrics import MetricsReport, compute_metrics
from .model import CopilotNet, ModelConfig
from .shards import read_container, write_container

log = logging.getLogger(__name__)


class TrainingDiverged(RuntimeError):
    pass


@dataclass(frozen=True)
class TrainConfig:
    lambda_map: float = 1.0
    lambda_col: float = 1.0
    lambda_joint: float = 1.0
    lr: float = 3e-4
    weight_decay: float = 0.0
    betas: tuple[float, float] = (0.9, 0.999)
    batch_size: int = 16
    epochs: int = 10
    seed: int = 0
    kl_direction: str = "pred_target"
    val_fraction: float = 0.1
    threads: int = 1
    deterministic: bool = True

    def __post_init__(self):
        if min(self.lambda_map, self.lambda_col, self.lambda_joint) < 0:
            raise ValueError("loss weights must be non-negative")
        if self.kl_direction not in ("pred_target", "target_pred"):
            raise ValueError("kl_direction must be 'pred_target' or 'target_pred'")

    @property
    def weights(self):
        return LossWeights(self.lambda_map, self.lambda_col, self.lambda_joint)

    def to_dict(self):
        return asdict(self)

    @classmethod
    def from_dict(cls, d):
        d = dict(d)
        if "betas" in d:
            d["betas"] = tuple(d["betas"])
        return cls(**d)


def view_positions(window_views, cfg: ModelConfig):
    """Positions in a window's view axis that feed the model."""
    views = list(window_views)
    try:
        return [views.index(v) for v in cfg.view_ids]
    except ValueError:
        raise ValueError(f"window views {views} lack mounts {cfg.view_ids}") from None


def collate(windows, cfg: ModelConfig, dtype=torch.float32):
    """Stack windows into a batch of tensors for ``cfg``."""
    pos = view_positions(windows[0].views, cfg)
    frames = np.stack([w.frames(cfg.modality)[pos] for w in windows])
    heat = np.stack([np.asarray(w.heatmaps)[pos] for w in windows])
    valid = np.stack([np.asarray(w.heatmap_valid)[pos] for w in windows])
    return {
        "frames": torch.as_tensor(frames, dtype=dtype),
        "heatmaps": torch.as_tensor(heat, dtype=dtype),
        "heatmap_valid": torch.as_tensor(valid, dtype=torch.bool),
        "y_col": torch.as_tensor(np.array([bool(w.y_col) for w in windows]), dtype=dtype),
        "y_joint": torch.as_tensor(np.stack([np.asarray(w.y_joint, bool) for w in windows]), dtype=dtype),
    }


def forward_batch(net: CopilotNet, batch, weights: LossWeights, direction="pred_target"):
    """Loss for one batch; the heatmap head only runs on frames with a valid annotation."""
    mask = batch["heatmap_valid"]
    with_maps = weights.map > 0 and bool(mask.any())
    preds = net(batch["frames"], with_maps=with_maps, map_mask=mask if with_maps else None)
    return total_loss(preds, batch, weights, direction)


def split_validation(windows, fraction, seed):
    """Hold out whole sequences (``fraction`` of them) for model selection."""
    if fraction <= 0:
        return list(windows), []
    keys = sorted({(w.scene_id, w.seq_id) for w in windows})
    rng = np.random.default_rng(seed)
    n_val = max(1, int(round(fraction * len(keys)))) if len(keys) > 1 else 0
    held = {keys[i] for i in rng.permutation(len(keys))[:n_val]}
    train = [w for w in windows if (w.scene_id, w.seq_id) not in held]
    val = [w for w in windows if (w.scene_id, w.seq_id) in held]
    return train, val


@dataclass
class TrainResult:
    net: CopilotNet
    history: list = field(default_factory=list)
    step_losses: list = field(default_factory=list)
    best_epoch: int = -1
    checkpoint: Path | None = None


def set_determinism(cfg: TrainConfig):
    torch.manual_seed(cfg.seed)
    if cfg.threads:
        torch.set_num_threads(cfg.threads)
    torch.use_deterministic_algorithms(cfg.deterministic)


def evaluate_loss(net, windows, cfg: ModelConfig, tcfg: TrainConfig):
    net.eval()
    tot, n = 0.0, 0
    with torch.no_grad():
        for i in range(0, len(windows), tcfg.batch_size):
            chunk = windows[i:i + tcfg.batch_size]
            loss, _ = forward_batch(net, collate(chunk, cfg), tcfg.weights, tcfg.kl_direction)
            tot += float(loss) * len(chunk)
            n += len(chunk)
    return tot / max(n, 1)


def train(model_cfg: ModelConfig, tcfg: TrainConfig, windows, val_windows=None, out=None,
          progress=None) -> TrainResult:
    """Train a fresh network; keeps the best-by-validation-loss weights."""
    windows = list(windows)
    if not windows:
        raise ValueError("no training windows")
    set_determinism(tcfg)
    if val_windows is None:
        windows, val_windows = split_validation(windows, tcfg.val_fraction, tcfg.seed)
    net = CopilotNet(model_cfg)
    opt = torch.optim.Adam(net.parameters(), lr=tcfg.lr, betas=tcfg.betas,
                           weight_decay=tcfg.weight_decay)
    steps_per_epoch = math.ceil(len(windows) / tcfg.batch_size)
    sched = torch.optim.lr_scheduler.CosineAnnealingLR(opt, T_max=max(1, tcfg.epochs * steps_per_epoch))
    rng = np.random.default_rng(tcfg.seed)
    result = TrainResult(net)
    best, best_state = math.inf, None
    for epoch in range(tcfg.epochs):
        net.train()
        order = rng.permutation(len(windows))
        t0, run = time.time(), 0.0
        for s in range(steps_per_epoch):
            chunk = [windows[i] for i in order[s * tcfg.batch_size:(s + 1) * tcfg.batch_size]]
            batch = collate(chunk, model_cfg)
            loss, parts = forward_batch(net, batch, tcfg.weights, tcfg.kl_direction)
            if not torch.isfinite(loss):
                raise TrainingDiverged(
                    f"non-finite loss at epoch {epoch} step {s}: "
                    + ", ".join(f"{k}={float(v.detach()):.4g}" for k, v in parts.items()))
            opt.zero_grad()
            loss.backward()
            opt.step()
            sched.step()
            run += float(loss.detach())
            result.step_losses.append(float(loss.detach()))
        train_loss = run / steps_per_epoch
        val_loss = evaluate_loss(net, val_windows, model_cfg, tcfg) if val_windows else train_loss
        result.history.append({"epoch": epoch, "train_loss": train_loss, "val_loss": val_loss,
                               "seconds": time.time() - t0})
        log.info("epoch %d train %.4f val %.4f (%.0fs)", epoch, train_loss, val_loss, time.time() - t0)
        if progress:
            progress(result.history[-1])
        if val_loss < best:
            best = val_loss
            best_state = {k: v.detach().clone() for k, v in net.state_dict().items()}
            result.best_epoch = epoch
    net.load_state_dict(best_state)
    net.eval()
    if out is not None:
        result.checkpoint = save_checkpoint(net, out, {"train": tcfg.to_dict(), "history": result.history,
                                                       "best_epoch": result.best_epoch})
    return result


# -- checkpoints --------------------------------------------------------------

def save_checkpoint(net: CopilotNet, path, extra=None) -> Path:
    path = Path(path)
    state = net.state_dict()
    meta = {"model": net.cfg.to_dict(), "tensors": list(state)}
    meta.update(extra or {})
    write_container(path, ((k, v.detach().cpu().float().numpy()) for k, v in state.items()), meta)
    return path


def load_checkpoint(path):
    """Return ``(net, meta)`` from a checkpoint directory."""
    path = Path(path)
    if not (path / "manifest.json").exists():
        raise FileNotFoundError(f"no checkpoint at {path}")
    manifest, tensors = read_container(path)
    meta = manifest["meta"]
    net = CopilotNet(ModelConfig.from_dict(meta["model"]))
    net.load_state_dict({k: torch.from_numpy(np.array(tensors[k])) for k in meta["tensors"]})
    net.eval()
    return net, meta


# -- evaluation ---------------------------------------------------------------

def predict_windows(net: CopilotNet, windows, batch_size=32):
    """Sigmoid outputs for windows: ``(col (n,), joint (n, J))``."""
    net.eval()
    cols, joints = [], []
    with torch.no_grad():
        for i in range(0, len(windows), batch_size):
            b = collate(windows[i:i + batch_size], net.cfg)
            p = net(b["frames"], with_maps=False)
            cols.append(p.col.numpy())
            joints.append(p.joint.numpy())
    return np.concatenate(cols), np.concatenate(joints)


def evaluate(net_or_path, splits: dict, threshold=0.5, method="COPILOT", col_map=True) -> MetricsReport:
    """Metrics for each named split of windows."""
    net = net_or_path
    if not isinstance(net, CopilotNet):
        net, meta = load_checkpoint(net_or_path)
        col_map = meta.get("train", {}).get("lambda_map", 1.0) > 0
    out = {}
    for name, windows in splits.items():
        windows = list(windows)
        if not windows:
            raise ValueError(f"split {name!r} is empty")
        col, joint = predict_windows(net, windows)
        out[name] = compute_metrics([w.y_col for w in windows], col,
                                    np.stack([w.y_joint for w in windows]), joint, threshold)
    cfg = net.cfg
    views = "Root" if cfg.attention_mode == "single_view" else ("All" if cfg.V == 6 else f"{cfg.V}")
    return MetricsReport(method, views, cfg.modality, col_map, out)
