import numpy as np
import pytest
from PIL import Image

from copilot.cli import main
from copilot.viz import LogParseError, overlay, overlay_strength, read_episode_log, window_overlays


def test_viz_malformed_log(tmp_path):
    bad = tmp_path / "bad.jsonl"
    bad.write_text('{"episode": 0, "root_position": [0, 0, 1]}\nnot json\n')
    with pytest.raises(LogParseError):
        read_episode_log(bad)
    assert main(["viz", "--log", str(bad), "--out", str(tmp_path / "o")]) != 0


def test_overlay_argmax_survives_png(tmp_path, tiny_dataset):
    _, (_, _, parts) = tiny_dataset
    w = next(w for p in parts.values() for w in p if w.heatmap_valid.any())
    paths = window_overlays(w, tmp_path)
    assert len(paths) == int(w.heatmap_valid.sum())
    for p in paths:
        v = w.views.index(int(p.stem.split("_v")[-1].split("_")[0]))
        t = int(p.stem.split("_t")[-1])
        img = np.asarray(Image.open(p))
        assert np.unravel_index(overlay_strength(img).argmax(), img.shape[:2]) == \
            np.unravel_index(w.heatmaps[v, t].argmax(), w.heatmaps.shape[-2:])


def test_overlay_skips_invalid(tmp_path, tiny_dataset, caplog):
    _, (_, _, parts) = tiny_dataset
    w = next(w for p in parts.values() for w in p if not w.heatmap_valid.all())
    with caplog.at_level("WARNING"):
        paths = window_overlays(w, tmp_path)
    assert len(paths) == int(w.heatmap_valid.sum())
    assert "overlay skipped" in caplog.text


def test_overlay_encoding():
    heat = np.zeros((5, 5))
    heat[1, 3] = 2.0
    heat[2, 2] = 1.0
    img = overlay(np.full((5, 5), 200.0), heat, alpha=0.5)
    s = overlay_strength(img)
    assert s[1, 3] == 128 and s[2, 2] == 64 and s[0, 0] == 0


def test_trajectory_plot_with_scene(tmp_path, corner_scene):
    from copilot.viz import plot_trajectories
    rows = [{"episode": 0, "root_position": [1 + 0.1 * i, 1, 0.95], "action": "none"} for i in range(10)]
    rows[-1]["collided"] = True
    p = plot_trajectories({0: rows}, tmp_path / "t.png", corner_scene)
    assert Image.open(p).size[0] > 0
