"""Heatmap overlays and top-down trajectory plots.

Overlays blend a gray version of the frame toward red: with
``a = alpha * h / max(h)`` a pixel becomes ``G = B = gray * (1 - a)`` and
``R = G + 255 * a``, so ``R - G`` is proportional to the heatmap and its
argmax can be read back from the PNG.
"""
from __future__ import annotations

import json
import logging
from pathlib import Path

import numpy as np
from PIL import Image

from .dataset import DEPTH_SCALE
from .sim.scene import Box, Cylinder, Scene

log = logging.getLogger(__name__)


class LogParseError(ValueError):
    pass


def base_gray(depth=None, rgb=None) -> np.ndarray:
    """Gray background in [0, 255] from RGB if present, else from depth (near = bright)."""
    if rgb is not None:
        rgb = np.asarray(rgb, np.float64)
        return rgb @ np.array([0.299, 0.587, 0.114])
    if depth is None:
        raise ValueError("need depth or rgb to draw a frame")
    d = np.asarray(depth, np.float64)
    return np.where(d > 0, 255 * (1 - np.clip(d / (2 * DEPTH_SCALE), 0, 1)), 0.0)


def overlay(gray, heat, alpha=0.6) -> np.ndarray:
    """``(H, W, 3)`` uint8 overlay of ``heat`` on ``gray``."""
    heat = np.asarray(heat, np.float64)
    peak = heat.max()
    a = alpha * heat / peak if peak > 0 else np.zeros_like(heat)
    g = np.round(np.asarray(gray, np.float64) * (1 - a))
    r = np.minimum(g + np.round(255 * a), 255)
    return np.stack([r, g, g], axis=-1).astype(np.uint8)


def overlay_strength(img) -> np.ndarray:
    """Recover ``R - G`` from an overlay image."""
    img = np.asarray(img).astype(np.int32)
    return img[..., 0] - img[..., 1]


def window_overlays(window, out, heatmaps=None, valid=None, alpha=0.6, scale=1, prefix=None):
    """Write one PNG per view per frame; frames without a valid map are skipped.

    ``heatmaps`` defaults to the window's annotation; pass model predictions
    ``(V, T, H, W)`` to draw those instead. Returns the written paths.
    """
    out = Path(out)
    out.mkdir(parents=True, exist_ok=True)
    heat = np.asarray(window.heatmaps if heatmaps is None else heatmaps)
    valid = np.asarray(window.heatmap_valid if valid is None else valid, bool)
    prefix = prefix or window.window_id.replace("/", "_")
    paths = []
    for v in range(heat.shape[0]):
        for t in range(heat.shape[1]):
            if not valid[v, t]:
                log.warning("%s view %d frame %d: no valid heatmap, overlay skipped", prefix, v, t)
                continue
            depth = None if window.depth is None else window.depth[v, t]
            rgb = None if window.rgb is None else window.rgb[v, t]
            img = Image.fromarray(overlay(base_gray(depth, rgb), heat[v, t], alpha))
            if scale > 1:
                img = img.resize((img.width * scale, img.height * scale), Image.NEAREST)
            p = out / f"{prefix}_v{window.views[v]}_t{t:02d}.png"
            img.save(p)
            paths.append(p)
    return paths


def read_episode_log(path) -> dict:
    """Parse a JSON-lines episode log into ``{episode: [rows]}``."""
    episodes = {}
    with open(path) as fh:
        for n, line in enumerate(fh, 1):
            if not line.strip():
                continue
            try:
                row = json.loads(line)
                key = row["episode"]
                pos = row["root_position"]
                if len(pos) < 2:
                    raise ValueError("root_position too short")
            except (ValueError, KeyError, TypeError) as e:
                raise LogParseError(f"{path}:{n}: {e}") from None
            episodes.setdefault(key, []).append(row)
    if not episodes:
        raise LogParseError(f"{path}: empty episode log")
    return episodes


def plot_trajectories(episodes: dict, path, scene: Scene | None = None):
    """Top-down plot of root paths; interventions are marked."""
    import matplotlib
    matplotlib.use("Agg")
    import matplotlib.pyplot as plt
    from matplotlib.patches import Circle, Rectangle

    fig, ax = plt.subplots(figsize=(6, 6))
    if scene is not None:
        for ob in scene.obstacles:
            if isinstance(ob, Box):
                ax.add_patch(Rectangle(ob.min[:2], *(np.asarray(ob.max[:2]) - ob.min[:2]),
                                       color="0.6"))
            elif isinstance(ob, Cylinder):
                ax.add_patch(Circle(ob.center[:2], ob.radius, color="0.6"))
        x0, y0, x1, y1 = scene.bounds
        ax.set_xlim(x0 - 0.5, x1 + 0.5)
        ax.set_ylim(y0 - 0.5, y1 + 0.5)
    for key, rows in episodes.items():
        xy = np.array([r["root_position"][:2] for r in rows])
        line, = ax.plot(xy[:, 0], xy[:, 1], lw=1, label=f"episode {key}")
        acts = [i for i, r in enumerate(rows) if r.get("action") not in (None, "none")]
        if acts:
            ax.scatter(xy[acts, 0], xy[acts, 1], s=8, color=line.get_color())
        if rows[-1].get("collided"):
            ax.scatter(*xy[-1], marker="x", color="red", s=40)
    ax.set_aspect("equal")
    ax.set_xlabel("x [m]")
    ax.set_ylabel("y [m]")
    fig.tight_layout()
    fig.savefig(path, dpi=100)
    plt.close(fig)
    return Path(path)
