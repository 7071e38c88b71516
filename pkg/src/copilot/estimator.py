"""scikit-learn style wrapper around the collision network.

``X`` is a sequence of :class:`~copilot.dataset.Window`; labels live on the
windows, so ``y`` may be omitted from ``fit`` and ``score``.
"""
from __future__ import annotations

import numpy as np
import torch
from sklearn.base import BaseEstimator, ClassifierMixin
from sklearn.utils.validation import check_is_fitted

from .dataset import Window
from .model import ModelConfig
from .training import TrainConfig, collate, load_checkpoint, predict_windows, save_checkpoint, train

_MODEL_KEYS = ("V", "T", "image_size", "patch_size", "embed_dim", "heads", "depth",
               "attention_mode", "modality")
_TRAIN_KEYS = ("lambda_map", "lambda_col", "lambda_joint", "lr", "batch_size", "epochs",
               "seed", "kl_direction", "val_fraction")


def check_windows(X, T=None, views=None):
    """Validate a window collection and return it as a list."""
    if isinstance(X, Window):
        X = [X]
    X = list(X)
    if not X:
        raise ValueError("expected at least one window")
    bad = [type(w).__name__ for w in X if not isinstance(w, Window)]
    if bad:
        raise TypeError(f"expected Window objects, got {bad[0]}")
    shapes = {np.shape(w.heatmaps) for w in X}
    if len(shapes) > 1:
        raise ValueError(f"windows have mixed shapes {sorted(shapes)}")
    if T is not None and X[0].heatmaps.shape[1] != T:
        raise ValueError(f"windows have T={X[0].heatmaps.shape[1]}, model expects {T}")
    if views is not None:
        missing = set(views) - set(X[0].views)
        if missing:
            raise ValueError(f"windows lack camera mounts {sorted(missing)}")
    return X


def check_labels(X, y=None):
    """Overall labels from ``y`` or, if absent, from the windows themselves."""
    if y is None:
        return np.array([bool(w.y_col) for w in X])
    y = np.asarray(y).astype(bool).ravel()
    if len(y) != len(X):
        raise ValueError(f"{len(X)} windows but {len(y)} labels")
    return y


class CollisionPredictor(ClassifierMixin, BaseEstimator):
    """Predicts whether a collision happens within the horizon of a window."""

    def __init__(self, V=3, T=10, image_size=64, patch_size=16, embed_dim=32, heads=2, depth=2,
                 attention_mode="joint_stv", modality="depth", lambda_map=1.0, lambda_col=1.0,
                 lambda_joint=1.0, lr=2e-3, batch_size=16, epochs=10, seed=0,
                 kl_direction="pred_target", val_fraction=0.1, threshold=0.5):
        self.V = V
        self.T = T
        self.image_size = image_size
        self.patch_size = patch_size
        self.embed_dim = embed_dim
        self.heads = heads
        self.depth = depth
        self.attention_mode = attention_mode
        self.modality = modality
        self.lambda_map = lambda_map
        self.lambda_col = lambda_col
        self.lambda_joint = lambda_joint
        self.lr = lr
        self.batch_size = batch_size
        self.epochs = epochs
        self.seed = seed
        self.kl_direction = kl_direction
        self.val_fraction = val_fraction
        self.threshold = threshold

    def model_config(self) -> ModelConfig:
        return ModelConfig(**{k: getattr(self, k) for k in _MODEL_KEYS})

    def train_config(self) -> TrainConfig:
        return TrainConfig(**{k: getattr(self, k) for k in _TRAIN_KEYS})

    def fit(self, X, y=None, val=None, out=None):
        mcfg = self.model_config()
        X = check_windows(X, mcfg.T, mcfg.view_ids)
        if y is not None and not np.array_equal(check_labels(X, y), check_labels(X)):
            raise ValueError("y disagrees with the window labels")
        res = train(mcfg, self.train_config(), X, val_windows=val, out=out)
        self.net_ = res.net
        self.history_ = res.history
        self.best_epoch_ = res.best_epoch
        self.classes_ = np.array([False, True])
        return self

    @classmethod
    def from_checkpoint(cls, path):
        net, meta = load_checkpoint(path)
        params = {k: v for k, v in meta["model"].items() if k in _MODEL_KEYS}
        params.update({k: v for k, v in meta.get("train", {}).items() if k in _TRAIN_KEYS})
        est = cls(**params)
        est.net_ = net
        est.history_ = meta.get("history", [])
        est.best_epoch_ = meta.get("best_epoch", -1)
        est.classes_ = np.array([False, True])
        return est

    def save(self, path):
        check_is_fitted(self, "net_")
        return save_checkpoint(self.net_, path, {"train": self.train_config().to_dict(),
                                                 "history": self.history_, "best_epoch": self.best_epoch_})

    def _check(self, X):
        check_is_fitted(self, "net_")
        return check_windows(X, self.net_.cfg.T, self.net_.cfg.view_ids)

    def predict_proba(self, X):
        X = self._check(X)
        col, _ = predict_windows(self.net_, X, self.batch_size)
        return np.stack([1 - col, col], axis=1)

    def predict(self, X):
        return self.predict_proba(X)[:, 1] >= self.threshold

    def predict_joints(self, X):
        """Per-joint involvement probabilities ``(n, J)``."""
        X = self._check(X)
        return predict_windows(self.net_, X, self.batch_size)[1]

    def predict_heatmaps(self, X):
        """Per-frame collision-region maps ``(n, V_out, T, H, W)``, each summing to one."""
        X = self._check(X)
        out = []
        self.net_.eval()
        with torch.no_grad():
            for i in range(0, len(X), self.batch_size):
                b = collate(X[i:i + self.batch_size], self.net_.cfg)
                out.append(self.net_(b["frames"], with_maps=True).maps.numpy())
        return np.concatenate(out)

    def score(self, X, y=None, sample_weight=None):
        X = check_windows(X)
        y = check_labels(X, y)
        w = None if sample_weight is None else np.asarray(sample_weight, float)
        return float(np.average(self.predict(X) == y, weights=w))
