"""Collision prediction metrics: overall accuracy and macro per-joint precision/recall/F1."""
from __future__ import annotations

import json
from dataclasses import asdict, dataclass, field

import numpy as np

from .sim.body import JOINT_NAMES


@dataclass
class SplitMetrics:
    n: int
    col: float  # overall accuracy
    prec: float
    rec: float
    f1: float
    per_joint: dict = field(default_factory=dict)  # name -> {prec, rec, f1, positives}
    majority_baseline: float = 0.0


def _safe_div(a, b):
    return a / b if b else 0.0


def compute_metrics(col_true, col_prob, joint_true, joint_prob, threshold=0.5) -> SplitMetrics:
    """Metrics over all windows of one split.

    Precision and recall are ``0`` when their denominator is empty. Joints
    without any positive window are left out of the macro average.
    """
    col_true = np.asarray(col_true, bool).ravel()
    if col_true.size == 0:
        raise ValueError("cannot evaluate an empty split")
    col_pred = np.asarray(col_prob).ravel() >= threshold
    jt = np.asarray(joint_true, bool).reshape(len(col_true), -1)
    jp = np.asarray(joint_prob).reshape(len(col_true), -1) >= threshold
    acc = float(np.mean(col_pred == col_true))
    per = {}
    for j in range(jt.shape[1]):
        tp = int(np.sum(jt[:, j] & jp[:, j]))
        fp = int(np.sum(~jt[:, j] & jp[:, j]))
        fn = int(np.sum(jt[:, j] & ~jp[:, j]))
        p, r = _safe_div(tp, tp + fp), _safe_div(tp, tp + fn)
        name = JOINT_NAMES[j] if j < len(JOINT_NAMES) else str(j)
        per[name] = {"prec": p, "rec": r, "f1": _safe_div(2 * p * r, p + r),
                     "positives": tp + fn}
    counted = [m for m in per.values() if m["positives"] > 0]
    macro = {k: float(np.mean([m[k] for m in counted])) if counted else 0.0
             for k in ("prec", "rec", "f1")}
    pos = float(col_true.mean())
    return SplitMetrics(len(col_true), acc, macro["prec"], macro["rec"], macro["f1"], per,
                        max(pos, 1 - pos))


@dataclass
class MetricsReport:
    method: str
    views: str
    modality: str
    col_map: bool
    splits: dict  # split name -> SplitMetrics

    def to_dict(self):
        return {"method": self.method, "views": self.views, "modality": self.modality,
                "col_map": self.col_map,
                "splits": {k: asdict(v) for k, v in self.splits.items()}}

    def to_json(self):
        return json.dumps(self.to_dict(), indent=1, sort_keys=True)

    def table(self) -> str:
        """Plain-text table with the Method/Views/Modality/Col Map? and per-split columns."""
        names = list(self.splits)
        head = f"{'Method':<24} {'Views':<6} {'Modality':<8} {'Col Map?':<8}"
        sub = " " * len(head)
        for n in names:
            head += f" | {n:^31}"
            sub += f" | {'Col':>7}{'Prec':>8}{'Rec':>8}{'F1':>8}"
        row = f"{self.method:<24} {self.views:<6} {self.modality:<8} {'yes' if self.col_map else '':<8}"
        for n in names:
            m = self.splits[n]
            row += " | " + "".join(f"{100 * v:>{w}.1f}" for v, w in
                                   ((m.col, 7), (m.prec, 8), (m.rec, 8), (m.f1, 8)))
        return "\n".join([head, sub, "-" * len(row), row])
