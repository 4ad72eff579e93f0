"""Command-line entry point: train / eval / ablate / augstudy / saliency / plot / gradcheck."""

from __future__ import annotations

import argparse
import dataclasses
import json
import sys
from pathlib import Path

from .config import (
    ABLATION_VARIANTS,
    AugmentationSpec,
    RunConfig,
    background_from_name,
)

# CLI shorthand -> canonical augmentation kind
_AUG_NAMES = {"overlay": "overlay", "conv": "random_conv", "shift": "random_shift", "none": "none"}


def _load_config(path: str | None) -> RunConfig:
    if path is None:
        return RunConfig()
    return RunConfig.load(path)


def _apply_overrides(config: RunConfig, args: argparse.Namespace) -> RunConfig:
    changes = {}
    if getattr(args, "seed", None) is not None:
        changes["seed"] = args.seed
    if getattr(args, "ablation", None) is not None:
        changes["ablation"] = args.ablation
    if getattr(args, "steps", None) is not None:
        changes["total_env_steps"] = args.steps
    if getattr(args, "detach_pseudo_action", False):
        changes["detach_pseudo_action"] = True
    aug_changes = {}
    if getattr(args, "aug", None) is not None:
        aug_changes["kind"] = _AUG_NAMES[args.aug]
    if getattr(args, "aug_alpha", None) is not None:
        aug_changes["alpha"] = args.aug_alpha
    if getattr(args, "aug_pad", None) is not None:
        aug_changes["pad"] = args.aug_pad
    if aug_changes:
        changes["aug"] = dataclasses.replace(config.aug, **aug_changes)
    return config.replace(**changes) if changes else config


def _parse_backgrounds(spec: str):
    return [background_from_name(name.strip()) for name in spec.split(",") if name.strip()]


def _parse_int_list(spec: str) -> list[int]:
    return [int(v) for v in spec.split(",") if v.strip()]


def _add_train_overrides(p: argparse.ArgumentParser):
    p.add_argument("--config", help="JSON file with RunConfig fields")
    p.add_argument("--seed", type=int)
    p.add_argument("--ablation", choices=ABLATION_VARIANTS)
    p.add_argument("--aug", choices=sorted(_AUG_NAMES), help="representation-path augmentation")
    p.add_argument("--aug-alpha", type=float, help="overlay blend weight")
    p.add_argument("--aug-pad", type=int, help="shift padding in pixels")
    p.add_argument("--steps", type=int, help="override total_env_steps")
    p.add_argument("--detach-pseudo-action", action="store_true")


def _cmd_train(args) -> int:
    from .trainer import train

    config = _apply_overrides(_load_config(args.config), args)
    run_dir = train(config, args.out, dump_frames=args.dump_frames)
    print(f"run directory: {run_dir}")
    return 0


def _cmd_eval(args) -> int:
    from .trainer import evaluate

    dump_dir = Path(args.out) / "frames" if (args.dump_frames and args.out) else ("frames" if args.dump_frames else None)
    report = evaluate(
        args.ckpt,
        _parse_backgrounds(args.backgrounds),
        episodes=args.episodes,
        seeds=_parse_int_list(args.seeds),
        dump_dir=dump_dir,
    )
    for r in report.results:
        print(
            f"{r.tier:<8} mean_return={r.mean_return:.3f} std={r.std_return:.3f} "
            f"episodes={r.episode_count} seeds={r.seeds}"
        )
    if args.out:
        out = Path(args.out)
        out.mkdir(parents=True, exist_ok=True)
        (out / "eval_report.json").write_text(json.dumps(report.to_dict(), indent=2, sort_keys=True) + "\n")
    return 0


def _print_rows(rows: list[dict]) -> None:
    tiers = [k for k in rows[0] if k not in ("variant", "seeds")]
    header = f"{'variant':<22}" + "".join(f"{t:>16}" for t in tiers)
    print(header)
    for row in rows:
        print(f"{row['variant']:<22}" + "".join(f"{row[t]['median']:>16.3f}" for t in tiers))


def _cmd_ablate(args) -> int:
    from .experiments import run_ablation_suite

    config = _apply_overrides(_load_config(args.config), args)
    rows = run_ablation_suite(
        config,
        args.out,
        seeds=tuple(_parse_int_list(args.seeds)),
        workers=args.workers,
    )
    _print_rows(rows)
    return 0


def _cmd_augstudy(args) -> int:
    from .experiments import run_augmentation_study

    config = _apply_overrides(_load_config(args.config), args)
    rows = run_augmentation_study(
        config,
        args.out,
        seeds=tuple(_parse_int_list(args.seeds)),
        workers=args.workers,
    )
    _print_rows(rows)
    return 0


def _cmd_saliency(args) -> int:
    from .checkpoint import restore
    from .analysis import saliency_from_extractor, write_saliency
    from .env import PointReachEnv
    from PIL import Image
    import numpy as np

    config, extractor, _, _ = restore(args.ckpt)
    env = PointReachEnv(
        image_size=config.image_size,
        frame_stack=config.frame_stack,
        background=background_from_name(args.background),
        dt=config.dt,
        force_scale=config.force_scale,
        max_speed=config.max_speed,
        horizon=config.horizon,
    )
    obs = env.reset(seed=args.seed)
    heatmap = saliency_from_extractor(extractor, obs)
    png_path, npy_path = write_saliency(heatmap, args.out, stem=f"saliency_{args.background}")
    frame = (np.moveaxis(obs[-3:], 0, -1) * 255.0).round().astype(np.uint8)
    Image.fromarray(frame).save(Path(args.out) / f"observation_{args.background}.png")
    print(f"wrote {png_path} and {npy_path}")
    return 0


def _cmd_plot(args) -> int:
    from .analysis import plot_curves

    image, table = plot_curves(args.runs, args.metric, args.out)
    print(f"wrote {image} and {table}")
    return 0


def _cmd_gradcheck(args) -> int:
    from .gradcheck import format_report, run_gradcheck

    report = run_gradcheck(step=args.step, threshold=args.threshold, seed=args.seed)
    print(format_report(report))
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="bit", description=__doc__)
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("train", help="run one training job")
    _add_train_overrides(p)
    p.add_argument("--out", help="run directory (default: runs/<variant>_<aug>_seed<seed>)")
    p.add_argument("--dump-frames", action="store_true", help="save every rendered frame as PNG")
    p.set_defaults(func=_cmd_train)

    p = sub.add_parser("eval", help="evaluate a checkpoint across backgrounds")
    p.add_argument("--ckpt", required=True)
    p.add_argument("--backgrounds", default="clean,easy,hard")
    p.add_argument("--episodes", type=int, default=10)
    p.add_argument("--seeds", default="0,1,2")
    p.add_argument("--dump-frames", action="store_true")
    p.add_argument("--out")
    p.set_defaults(func=_cmd_eval)

    p = sub.add_parser("ablate", help="run the six-variant ablation suite")
    _add_train_overrides(p)
    p.add_argument("--out", required=True)
    p.add_argument("--seeds", default="0,1,2")
    p.add_argument("--workers", type=int, default=1)
    p.set_defaults(func=_cmd_ablate)

    p = sub.add_parser("augstudy", help="run the augmentation study")
    _add_train_overrides(p)
    p.add_argument("--out", required=True)
    p.add_argument("--seeds", default="0,1,2")
    p.add_argument("--workers", type=int, default=1)
    p.set_defaults(func=_cmd_augstudy)

    p = sub.add_parser("saliency", help="input-gradient saliency map for a checkpoint")
    p.add_argument("--ckpt", required=True)
    p.add_argument("--background", choices=("clean", "easy", "hard"), default="clean")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", required=True)
    p.set_defaults(func=_cmd_saliency)

    p = sub.add_parser("plot", help="median/min-max curves for a logged metric")
    p.add_argument("--runs", nargs="+", required=True)
    p.add_argument("--metric", required=True)
    p.add_argument("--out", required=True)
    p.set_defaults(func=_cmd_plot)

    p = sub.add_parser("gradcheck", help="finite-difference gradient audit")
    p.add_argument("--step", type=float, default=1e-5)
    p.add_argument("--threshold", type=float, default=1e-4)
    p.add_argument("--seed", type=int, default=0)
    p.set_defaults(func=_cmd_gradcheck)

    return parser


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    return args.func(args)


if __name__ == "__main__":
    sys.exit(main())
