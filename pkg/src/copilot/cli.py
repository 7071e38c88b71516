"""Command line entry point: ``copilot {datagen,train,eval,control,viz}``.

Every command builds a JSON run config from, in increasing precedence, the
built-in defaults, ``--config FILE``, ``COPILOT_*`` environment variables
and explicit flags. Environment keys nest with double underscores, so
``COPILOT_TRAIN__LR=1e-3`` sets ``{"train": {"lr": 1e-3}}``; values are parsed
as JSON when possible. The resolved config is written to
``<out>/run_config.json``.
"""
from __future__ import annotations

import argparse
import dataclasses
import json
import logging
import os
import sys
from pathlib import Path

import numpy as np

ENV_PREFIX = "COPILOT_"
log = logging.getLogger("copilot")


class UsageError(ValueError):
    pass


def deep_update(base: dict, other: dict) -> dict:
    for k, v in other.items():
        if isinstance(v, dict) and isinstance(base.get(k), dict):
            deep_update(base[k], v)
        else:
            base[k] = v
    return base


def env_overrides(environ=None) -> dict:
    out = {}
    for key, raw in (os.environ if environ is None else environ).items():
        if not key.startswith(ENV_PREFIX) or len(key) == len(ENV_PREFIX):
            continue
        path = [p.lower() for p in key[len(ENV_PREFIX):].split("__")]
        try:
            val = json.loads(raw)
        except ValueError:
            val = raw
        node = out
        for p in path[:-1]:
            node = node.setdefault(p, {})
        node[path[-1]] = val
    return out


def set_path(doc, dotted, value):
    node = doc
    keys = dotted.split(".")
    for k in keys[:-1]:
        node = node.setdefault(k, {})
    node[keys[-1]] = value


def resolve_config(defaults: dict, args, flag_map: dict, environ=None) -> dict:
    doc = json.loads(json.dumps(defaults))
    if getattr(args, "config", None):
        try:
            deep_update(doc, json.loads(Path(args.config).read_text()))
        except FileNotFoundError:
            raise FileNotFoundError(f"config file {args.config} not found") from None
        except json.JSONDecodeError as e:
            raise UsageError(f"config file {args.config}: {e}") from None
    deep_update(doc, env_overrides(environ))
    for attr, dotted in flag_map.items():
        val = getattr(args, attr, None)
        if val is not None:
            for d in ([dotted] if isinstance(dotted, str) else dotted):
                set_path(doc, d, val)
    if not doc.get("out"):
        raise UsageError("an output directory is required (--out)")
    return doc


def write_run_config(doc, command):
    out = Path(doc["out"])
    out.mkdir(parents=True, exist_ok=True)
    (out / "run_config.json").write_text(json.dumps({"command": command, **doc}, indent=1, sort_keys=True))
    return out


# -- commands -----------------------------------------------------------------

def _datagen_defaults():
    from .datagen import DatagenConfig
    return {"out": None, "datagen": DatagenConfig().to_dict()}


def cmd_datagen(doc):
    from .datagen import DatagenConfig, generate_dataset
    cfg = DatagenConfig.from_dict(doc["datagen"])
    if cfg.n_scenes < 1:
        raise UsageError("n_scenes must be at least 1")
    out = write_run_config(doc, "datagen")
    index = generate_dataset(cfg, out)
    print(f"{index['windows']} windows, {index['colliding']} colliding "
          f"({100 * index['colliding_fraction']:.1f}%)")
    totals = {}
    for s in index["shards"]:
        for k, n in s["splits"].items():
            totals[k] = totals.get(k, 0) + n
    for k in sorted(totals):
        print(f"  {k}: {totals[k]} windows")
    return 0


def _train_defaults():
    from .model import ModelConfig
    from .training import TrainConfig
    return {"out": None, "data": None, "model": ModelConfig().to_dict(), "train": TrainConfig().to_dict()}


def _load(data):
    from .datagen import load_dataset
    if not data:
        raise UsageError("a dataset directory is required (--data)")
    return load_dataset(data)


def cmd_train(doc):
    from .model import ModelConfig
    from .training import TrainConfig, train
    mcfg = ModelConfig.from_dict(doc["model"])
    tcfg = TrainConfig.from_dict(doc["train"])
    _, _, parts = _load(doc["data"])
    out = write_run_config(doc, "train")
    res = train(mcfg, tcfg, parts["train"], out=out / "checkpoint",
                progress=lambda h: print(f"epoch {h['epoch']}: train {h['train_loss']:.4f} "
                                         f"val {h['val_loss']:.4f}"))
    (out / "history.json").write_text(json.dumps(res.history, indent=1))
    print(f"checkpoint: {res.checkpoint} (best epoch {res.best_epoch})")
    return 0


def cmd_eval(doc):
    from .training import evaluate
    ckpt = Path(doc["checkpoint"] or "")
    if not (ckpt / "manifest.json").exists():
        raise FileNotFoundError(f"no checkpoint at {ckpt}")
    _, _, parts = _load(doc["data"])
    out = write_run_config(doc, "eval")
    report = evaluate(ckpt, {k: parts[k] for k in doc["splits"]}, doc["threshold"], doc["method"])
    (out / "report.json").write_text(report.to_json())
    (out / "report.txt").write_text(report.table() + "\n")
    print(report.table())
    return 0


def _control_defaults():
    from .controller import ControlConfig
    return {"out": None, "data": None, "checkpoint": None, "policy": "model", "episodes": 50,
            "seed": 0, "split": "unseen_scene", "control": ControlConfig().to_dict()}


def cmd_control(doc):
    from .controller import (ControlConfig, GeometryOraclePolicy, ModelPolicy, NoOpPolicy,
                             evaluate_avoidance, make_episodes, write_episode_log)
    from .datagen import DatagenConfig
    from .sim import Scene
    from .training import load_checkpoint
    ccfg = ControlConfig.from_dict(doc["control"])
    data = Path(doc["data"] or "")
    try:
        index = json.loads((data / "dataset.json").read_text())
    except FileNotFoundError:
        raise FileNotFoundError(f"no dataset.json under {data}") from None
    dcfg = DatagenConfig.from_dict(index["config"])
    key = {"unseen_scene": "unseen_scenes", "train": "train_scenes"}.get(doc["split"])
    if key is None:
        raise UsageError("split must be 'unseen_scene' or 'train'")
    scenes = [Scene.from_json((data / "scenes" / f"{sid}.json").read_text())
              for sid in index["splits"][key]]
    kind = doc["policy"]
    if kind == "model":
        ckpt = Path(doc["checkpoint"] or "")
        if not (ckpt / "manifest.json").exists():
            raise FileNotFoundError(f"no checkpoint at {ckpt}")
        policy = ModelPolicy(load_checkpoint(ckpt)[0], ccfg)
    elif kind == "noop":
        policy = NoOpPolicy()
    elif kind == "oracle":
        policy = GeometryOraclePolicy(ccfg)
    else:
        raise UsageError(f"unknown policy {kind!r}")
    out = write_run_config(doc, "control")
    episodes = make_episodes(scenes, doc["episodes"], doc["seed"], ccfg, dcfg.dataset, dcfg.motion)
    if len(episodes) < doc["episodes"]:
        raise RuntimeError(f"only found {len(episodes)} collision-bound episodes")
    res = evaluate_avoidance(policy, episodes, ccfg, dcfg.dataset)
    log_path = out / "episodes.jsonl"
    log_path.unlink(missing_ok=True)
    for i, (ep, o) in enumerate(zip(episodes, res.outcomes)):
        write_episode_log(o, log_path, i, ep.scene.scene_id)
    summary = {"policy": kind, "episodes": len(episodes), "avoidance_rate": res.rate,
               "outcomes": [o.to_dict() for o in res.outcomes]}
    (out / "summary.json").write_text(json.dumps(summary, indent=1))
    print(f"avoidance rate {100 * res.rate:.1f}% over {len(episodes)} episodes")
    return 0


def cmd_viz(doc):
    from .sim import Scene
    from .viz import plot_trajectories, read_episode_log, window_overlays
    if not doc.get("data") and not doc.get("log"):
        raise UsageError("nothing to draw: pass --data (overlays) and/or --log (trajectories)")
    out = write_run_config(doc, "viz")
    written = []
    if doc.get("data"):
        _, _, parts = _load(doc["data"])
        windows = [w for ws in parts.values() for w in ws]
        if doc.get("window"):
            wanted = set(doc["window"])
            windows = [w for w in windows if w.window_id in wanted]
            missing = wanted - {w.window_id for w in windows}
            if missing:
                raise KeyError(f"windows not found: {sorted(missing)}")
        else:
            # default: first colliding window with something to draw
            windows = [w for w in windows if w.y_col and w.heatmap_valid.any()][:1]
        preds = None
        if doc.get("checkpoint"):
            from .estimator import CollisionPredictor
            est = CollisionPredictor.from_checkpoint(doc["checkpoint"])
            preds = est.predict_heatmaps(windows)
        for i, w in enumerate(windows):
            if preds is None:
                written += window_overlays(w, out, scale=doc["scale"])
            else:
                views = est.net_.cfg.view_ids
                pos = [list(w.views).index(v) for v in views]
                pw = dataclasses.replace(
                    w, views=views, heatmaps=preds[i],
                    heatmap_valid=np.ones((len(views), preds.shape[2]), bool),
                    depth=None if w.depth is None else w.depth[pos],
                    rgb=None if w.rgb is None else w.rgb[pos])
                written += window_overlays(pw, out, scale=doc["scale"],
                                           prefix=w.window_id.replace("/", "_") + "_pred")
    if doc.get("log"):
        scene = Scene.from_json(Path(doc["scene"]).read_text()) if doc.get("scene") else None
        written.append(plot_trajectories(read_episode_log(doc["log"]), out / "trajectories.png", scene))
    print(f"wrote {len(written)} images to {out}")
    return 0


# -- parser -------------------------------------------------------------------

COMMANDS = {
    "datagen": (cmd_datagen, _datagen_defaults,
                {"seed": "datagen.seed", "out": "out", "n_scenes": "datagen.n_scenes",
                 "seqs_per_scene": "datagen.seqs_per_scene", "workers": "datagen.workers",
                 "image_size": "datagen.dataset.image_size", "views": "datagen.dataset.V",
                 "modality": "datagen.dataset.modality"}),
    "train": (cmd_train, _train_defaults,
              {"seed": "train.seed", "out": "out", "data": "data", "attention": "model.attention_mode",
               "lambda_map": "train.lambda_map", "modality": "model.modality", "views": "model.V",
               "epochs": "train.epochs", "lr": "train.lr", "batch_size": "train.batch_size",
               "embed_dim": "model.embed_dim", "depth": "model.depth", "heads": "model.heads",
               "patch_size": "model.patch_size", "kl_direction": "train.kl_direction"}),
    "eval": (cmd_eval, lambda: {"out": None, "data": None, "checkpoint": None, "threshold": 0.5,
                                "method": "COPILOT", "splits": ["unseen_motion", "unseen_scene"]},
             {"seed": "seed", "out": "out", "data": "data", "checkpoint": "checkpoint",
              "threshold": "threshold", "method": "method"}),
    "control": (cmd_control, _control_defaults,
                {"seed": "seed", "out": "out", "data": "data", "checkpoint": "checkpoint",
                 "policy": "policy", "episodes": "episodes", "threshold": "control.threshold",
                 "split": "split"}),
    "viz": (cmd_viz, lambda: {"out": None, "data": None, "checkpoint": None, "window": None,
                              "log": None, "scene": None, "scale": 4},
            {"seed": "seed", "out": "out", "data": "data", "checkpoint": "checkpoint", "window": "window",
             "log": "log", "scene": "scene", "scale": "scale"}),
}


def build_parser():
    p = argparse.ArgumentParser(prog="copilot", description=__doc__.splitlines()[0])
    p.add_argument("-v", "--verbose", action="store_true")
    sub = p.add_subparsers(dest="command", required=True)

    def common(sp):
        sp.add_argument("--config", help="JSON run config file")
        sp.add_argument("--seed", type=int)
        sp.add_argument("--out", help="output directory")
        return sp

    sp = common(sub.add_parser("datagen", help="generate scenes, motions and window shards"))
    sp.add_argument("--n-scenes", type=int)
    sp.add_argument("--seqs-per-scene", type=int)
    sp.add_argument("--workers", type=int)
    sp.add_argument("--image-size", type=int)
    sp.add_argument("--views", type=int)
    sp.add_argument("--modality", choices=("rgb", "depth", "rgbd"))

    sp = common(sub.add_parser("train", help="train a model on a generated dataset"))
    sp.add_argument("--data")
    sp.add_argument("--attention", choices=("joint_stv", "divided_stv", "st_concat", "single_view"))
    sp.add_argument("--lambda-map", type=float)
    sp.add_argument("--modality", choices=("rgb", "depth", "rgbd"))
    sp.add_argument("--views", type=int)
    sp.add_argument("--epochs", type=int)
    sp.add_argument("--lr", type=float)
    sp.add_argument("--batch-size", type=int)
    sp.add_argument("--embed-dim", type=int)
    sp.add_argument("--depth", type=int)
    sp.add_argument("--heads", type=int)
    sp.add_argument("--patch-size", type=int)
    sp.add_argument("--kl-direction", choices=("pred_target", "target_pred"))

    sp = common(sub.add_parser("eval", help="evaluate a checkpoint on the held-out splits"))
    sp.add_argument("--data")
    sp.add_argument("--checkpoint")
    sp.add_argument("--threshold", type=float)
    sp.add_argument("--method")

    sp = common(sub.add_parser("control", help="closed-loop avoidance on collision-bound episodes"))
    sp.add_argument("--data")
    sp.add_argument("--checkpoint")
    sp.add_argument("--policy", choices=("model", "noop", "oracle"))
    sp.add_argument("--episodes", type=int)
    sp.add_argument("--threshold", type=float)
    sp.add_argument("--split", choices=("unseen_scene", "train"))

    sp = common(sub.add_parser("viz", help="heatmap overlays and trajectory plots"))
    sp.add_argument("--data")
    sp.add_argument("--checkpoint", help="draw predicted instead of annotated maps")
    sp.add_argument("--window", action="append", help="window id (repeatable)")
    sp.add_argument("--log", help="episode log (JSON lines) from `control`")
    sp.add_argument("--scene", help="scene JSON for the trajectory plot")
    sp.add_argument("--scale", type=int)
    return p


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    fn, defaults, flags = COMMANDS[args.command]
    try:
        doc = resolve_config(defaults(), args, flags)
        return fn(doc)
    except KeyboardInterrupt:
        print("interrupted", file=sys.stderr)
        return 130
    except UsageError as e:
        print(f"copilot {args.command}: usage error: {e}", file=sys.stderr)
        return 2
    except Exception as e:  # noqa: BLE001 - every failure must end in a nonzero exit
        if args.verbose:
            log.exception("command failed")
        print(f"copilot {args.command}: error: {type(e).__name__}: {e}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
