"""Command-line entry points: simulate, train, predict, eval.

Exit codes: 0 success, 1 runtime failure, 2 input-format error.
"""
from __future__ import annotations

import argparse
import hashlib
import json
import sys
import time
from pathlib import Path
from typing import List, Optional

import yaml

from .core.formats import (
    FormatError,
    read_label_file,
    read_skeleton_file,
    write_label_file,
    write_skeleton_file,
)
from .eval import align_identities, mean_joint_error, mean_map, relabel
from .pipeline import evaluate_scenes, run_pipeline
from .simkit import load_scenario, random_scenario, read_heatmaps, save_scenario, simulate, simulate_dataset, write_heatmaps
from .train import TrainConfig, fit, load_model, load_train_config, save_state

EXIT_OK, EXIT_RUNTIME, EXIT_FORMAT = 0, 1, 2


class ConfigError(Exception):
    pass


def config_hash(cfg: dict) -> str:
    return hashlib.sha256(json.dumps(cfg, sort_keys=True, default=list).encode()).hexdigest()[:12]


def manifest(command: str, cfg: dict, seed: Optional[int], **counts) -> str:
    parts = [f"command={command}", f"config_hash={config_hash(cfg)}", f"seed={seed}"]
    parts += [f"{k}={v}" for k, v in counts.items()]
    return "manifest " + " ".join(parts)


def _thetas(text: str) -> List[float]:
    try:
        out = [float(t) for t in text.split(",") if t.strip()]
    except ValueError:
        raise argparse.ArgumentTypeError(f"bad IoU list {text!r}") from None
    if not out or any(not 0 < t <= 1 for t in out):
        raise argparse.ArgumentTypeError("IoU thresholds must lie in (0, 1]")
    return out


def _on_off(text: str) -> bool:
    if text not in ("on", "off"):
        raise argparse.ArgumentTypeError("expected on or off")
    return text == "on"


def cmd_simulate(args) -> int:
    if args.config:
        try:
            scenario = load_scenario(args.config)
        except (yaml.YAMLError, KeyError, TypeError, ValueError) as exc:
            raise ConfigError(f"{args.config}: {exc}") from None
        if args.seed is not None:
            scenario.seed = args.seed
    else:
        scenario = random_scenario(0 if args.seed is None else args.seed)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    scene = simulate(scenario)
    write_heatmaps(out / "heatmaps.rfhm", scene.heatmaps)
    write_skeleton_file(out / "skeleton.txt", scene.frames)
    write_label_file(out / "labels.txt", scene.segments)
    save_scenario(out / "scenario.yaml", scenario)
    print(manifest("simulate", scenario.to_dict(), scenario.seed, frames=len(scene),
                   persons=len(scenario.persons), segments=len(scene.segments)))
    return EXIT_OK


def resolve_train_config(args) -> TrainConfig:
    try:
        d = load_train_config(args.config).to_dict() if args.config else TrainConfig().to_dict()
    except (yaml.YAMLError, TypeError, ValueError) as exc:
        raise ConfigError(f"{args.config}: {exc}") from None
    if args.seed is not None:
        d["seed"] = args.seed
    if args.mode is not None:
        d["mode"] = args.mode
    if args.steps is not None:
        d["steps"] = args.steps
    if args.proposals is not None:
        d["model"]["proposals"] = args.proposals
    if args.attention is not None:
        d["model"]["attention"] = args.attention
    try:
        return TrainConfig.from_dict(d)
    except (TypeError, ValueError) as exc:
        raise ConfigError(str(exc)) from None


def cmd_train(args) -> int:
    cfg = resolve_train_config(args)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    ckpt = out / "checkpoint.rfa"
    sim = dict(n_persons=cfg.n_persons, duration=cfg.duration)
    train = simulate_dataset(cfg.train_seeds, **sim)
    skel = simulate_dataset(cfg.skeleton_seeds, **sim) if cfg.skeleton_seeds else None
    val = simulate_dataset(cfg.val_seeds, **sim) if cfg.val_seeds else []
    print(manifest("train", cfg.to_dict(), cfg.seed, steps=cfg.steps, train_scenes=len(train)), flush=True)
    with open(out / "train.log", "a") as log:
        def write(line: str):
            log.write(line + "\n")
            log.flush()

        def on_step(state, values):
            if cfg.checkpoint_every and state.step % cfg.checkpoint_every == 0:
                save_state(ckpt, state, {"train": cfg.to_dict()})
            if val and cfg.eval_every and state.step % cfg.eval_every == 0:
                rep = evaluate_scenes(state.model, val)
                write(f"step {state.step} " + " ".join(f"val_mAP@{t:g}={v:.4f}" for t, v in rep.map.items()))
                state.model.train()

        t0 = time.time()
        state = fit(cfg, train, skel, log=write, on_step=on_step)
        save_state(ckpt, state, {"train": cfg.to_dict()})
        write(f"done steps={state.step} seconds={time.time() - t0:.1f}")
    print(f"checkpoint {ckpt}")
    return EXIT_OK


def cmd_predict(args) -> int:
    model, meta = load_model(args.checkpoint)
    stream = read_heatmaps(args.heatmaps)
    res = run_pipeline(model, stream)
    out = Path(args.out)
    out.parent.mkdir(parents=True, exist_ok=True)
    write_label_file(out, res.segments, scores=True)
    write_skeleton_file(out.with_suffix(".skeleton.txt"), res.frames)
    print(manifest("predict", meta, meta.get("train", {}).get("seed"), frames=len(stream),
                   tracks=len(res.tracks), detections=len(res.segments)))
    return EXIT_OK


def cmd_eval(args) -> int:
    preds = read_label_file(args.pred)
    gts = read_label_file(args.gt)
    err = None
    if args.pred_skeleton and args.gt_skeleton:
        pf, gf = read_skeleton_file(args.pred_skeleton), read_skeleton_file(args.gt_skeleton)
        preds = relabel(preds, align_identities(pf, gf))
        err = mean_joint_error(pf, gf)
    report = mean_map(preds, gts, args.iou, joint_error_cm=err)
    sys.stdout.write(report.to_text())
    if args.out:
        Path(args.out).write_text(report.to_table())
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="rfaction", description=__doc__.splitlines()[0])
    sub = p.add_subparsers(dest="command", required=True)

    s = sub.add_parser("simulate", help="render a scenario to heatmap, skeleton and label files")
    s.add_argument("--config", help="scenario YAML; a random scenario is drawn when omitted")
    s.add_argument("--seed", type=int)
    s.add_argument("--out", required=True)
    s.set_defaults(func=cmd_simulate)

    t = sub.add_parser("train", help="train on simulated scenes")
    t.add_argument("--config")
    t.add_argument("--seed", type=int)
    t.add_argument("--out", required=True)
    t.add_argument("--steps", type=int)
    t.add_argument("--mode", choices=["end_to_end", "separate"])
    t.add_argument("--proposals", choices=["multi", "single"])
    t.add_argument("--attention", type=_on_off, metavar="on|off")
    t.set_defaults(func=cmd_train)

    r = sub.add_parser("predict", help="detect actions in a heatmap file")
    r.add_argument("--checkpoint", required=True)
    r.add_argument("--heatmaps", required=True)
    r.add_argument("--out", required=True)
    r.set_defaults(func=cmd_predict)

    e = sub.add_parser("eval", help="score a prediction label file against ground truth")
    e.add_argument("--pred", required=True)
    e.add_argument("--gt", required=True)
    e.add_argument("--iou", type=_thetas, default=[0.1, 0.5])
    e.add_argument("--pred-skeleton", help="predicted skeletons, for identity alignment and joint error")
    e.add_argument("--gt-skeleton")
    e.add_argument("--out", help="write the per-class table (TSV) here")
    e.set_defaults(func=cmd_eval)
    return p


def main(argv: Optional[List[str]] = None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except (FormatError, ConfigError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_FORMAT
    except Exception as exc:  # noqa: BLE001 - any other failure is a runtime error
        print(f"error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return EXIT_RUNTIME


if __name__ == "__main__":
    sys.exit(main())
