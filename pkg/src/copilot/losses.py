"""Multi-task losses: masked heatmap KL divergence and binary cross-entropies."""
from __future__ import annotations

import math
from dataclasses import dataclass

import torch

KL_EPS = 1e-8
BCE_EPS = 1e-7


@dataclass
class MapLoss:
    value: torch.Tensor
    n_valid: int

    @property
    def empty(self) -> bool:
        return self.n_valid == 0


def _safe_log(p):
    return torch.log(torch.where(p > 0, p, torch.full_like(p, KL_EPS)))


def loss_map(pred, target, valid, pred_log=None, direction="pred_target") -> MapLoss:
    """Mean KL divergence over valid frames; invalid frames contribute nothing.

    ``pred`` and ``target`` are ``(..., H, W)`` distributions and ``valid`` is
    the matching ``(...)`` boolean mask. With ``direction="pred_target"``
    (default) the divergence is ``sum p_hat * log(p_hat / p)``; with
    ``"target_pred"`` it is ``sum p * log(p / p_hat)``. A zero probability in
    the denominator is replaced by ``eps``; adding ``eps`` everywhere instead
    would bias the loss by about ``-H * W * eps`` and break ``KL(p || p) = 0``
    on large maps. Passing ``pred_log`` (log of ``pred``) avoids ``log(0)``
    for saturated softmaxes.
    An all-invalid batch returns a zero loss with ``n_valid == 0``.
    """
    valid = torch.as_tensor(valid, dtype=torch.bool, device=target.device)
    n = int(valid.sum())
    if n == 0:
        ref = pred if pred is not None else pred_log
        return MapLoss((ref * 0).sum(), 0)
    if pred_log is None:
        pred_log = torch.log(pred.clamp_min(1e-30))
        pred_log = torch.where(pred > 0, pred_log, torch.zeros_like(pred_log))
    p_hat = pred_log.exp() if pred is None else pred
    if direction == "pred_target":
        terms = p_hat * (pred_log - _safe_log(target))
        per = torch.where(p_hat > 0, terms, torch.zeros_like(terms)).flatten(-2).sum(-1)
    elif direction == "target_pred":
        q_log = torch.where(p_hat > 0, pred_log, torch.full_like(pred_log, math.log(KL_EPS)))
        per = (torch.special.xlogy(target, target) - target * q_log).flatten(-2).sum(-1)
    else:
        raise ValueError(f"unknown KL direction {direction!r}")
    return MapLoss(per[valid].sum() / n, n)


def bce(pred, target):
    p = pred.clamp(BCE_EPS, 1 - BCE_EPS)
    t = target.to(p.dtype)
    return -(t * torch.log(p) + (1 - t) * torch.log(1 - p))


def loss_cls(col_pred, col_target, joint_pred, joint_target):
    """``(L_col, L_joint)``: BCE averaged over the batch; the joint term sums over joints first."""
    l_col = bce(col_pred, col_target).mean()
    l_joint = bce(joint_pred, joint_target).sum(-1).mean()
    return l_col, l_joint


@dataclass
class LossWeights:
    map: float = 1.0
    col: float = 1.0
    joint: float = 1.0

    def __post_init__(self):
        if min(self.map, self.col, self.joint) < 0:
            raise ValueError("loss weights must be non-negative")


def total_loss(preds, batch, weights: LossWeights, direction="pred_target"):
    """Weighted sum of the three terms; returns ``(total, parts)``."""
    l_col, l_joint = loss_cls(preds.col, batch["y_col"], preds.joint, batch["y_joint"])
    if weights.map > 0 and preds.map_log is not None:
        target, valid = batch["heatmaps"], batch["heatmap_valid"]
        if preds.map_log.ndim == 3:  # maps were only computed for the valid frames
            target = target[valid]
            valid = torch.ones(len(target), dtype=torch.bool)
        lm = loss_map(None, target, valid, pred_log=preds.map_log, direction=direction)
        l_map = lm.value
    else:
        l_map = torch.zeros((), dtype=l_col.dtype)
    total = weights.map * l_map + weights.col * l_col + weights.joint * l_joint
    return total, {"map": l_map, "col": l_col, "joint": l_joint}
