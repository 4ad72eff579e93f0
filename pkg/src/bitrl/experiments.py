"""Experiment protocols: the ablation suite and the augmentation study.

Every protocol trains each variant across shared seeds, evaluates the final
checkpoint on all configured backgrounds, and emits one comparison table.
Independent runs may execute in parallel worker processes; results are
deterministic either way.
"""

from __future__ import annotations

import json
import multiprocessing
from concurrent.futures import ProcessPoolExecutor
from dataclasses import replace
from pathlib import Path

from .config import ABLATION_VARIANTS, AugmentationSpec, RunConfig
from .trainer import evaluate, latest_checkpoint, train

STUDY_AUG_KINDS = ("overlay", "random_conv", "none")


def _run_one(args: tuple) -> dict:
    config_dict, run_dir, eval_episodes, eval_seeds = args
    config = RunConfig.from_dict(config_dict)
    out = train(config, run_dir)
    report = evaluate(
        latest_checkpoint(out), config.eval_backgrounds, episodes=eval_episodes, seeds=list(eval_seeds)
    )
    return {
        "run_dir": str(out),
        "variant": config.ablation,
        "aug": config.aug.kind,
        "seed": config.seed,
        "returns": {r.tier: r.mean_return for r in report.results},
    }


def _execute(jobs: list[tuple], workers: int) -> list[dict]:
    if workers <= 1:
        return [_run_one(job) for job in jobs]
    # fork keeps heredoc/REPL callers working; children run single-threaded torch
    method = "fork" if "fork" in multiprocessing.get_all_start_methods() else "spawn"
    context = multiprocessing.get_context(method)
    with ProcessPoolExecutor(max_workers=workers, mp_context=context) as pool:
        return list(pool.map(_run_one, jobs))


def _aggregate(results: list[dict], tiers: list[str], label_key: str) -> list[dict]:
    rows = []
    labels = []
    for r in results:
        if r[label_key] not in labels:
            labels.append(r[label_key])
    for label in labels:
        group = [r for r in results if r[label_key] == label]
        row = {"variant": label, "seeds": [r["seed"] for r in group]}
        for tier in tiers:
            values = [r["returns"][tier] for r in group]
            values_sorted = sorted(values)
            row[tier] = {
                "mean": sum(values) / len(values),
                "median": values_sorted[len(values) // 2] if len(values) % 2 else
                          (values_sorted[len(values) // 2 - 1] + values_sorted[len(values) // 2]) / 2,
                "per_seed": values,
            }
        rows.append(row)
    return rows


def _write_table(rows: list[dict], tiers: list[str], out_dir: Path, name: str):
    lines = [f"{'variant':<22}" + "".join(f"{tier + ' (median)':>20}" for tier in tiers)]
    for row in rows:
        lines.append(f"{row['variant']:<22}" + "".join(f"{row[tier]['median']:>20.3f}" for tier in tiers))
    (out_dir / f"{name}.txt").write_text("\n".join(lines) + "\n")
    (out_dir / f"{name}.json").write_text(json.dumps(rows, indent=2, sort_keys=True) + "\n")


def run_ablation_suite(
    base: RunConfig,
    out_dir: str | Path,
    variants: tuple[str, ...] = ABLATION_VARIANTS,
    seeds: tuple[int, ...] = (0, 1, 2),
    eval_episodes: int = 10,
    eval_seeds: tuple[int, ...] = (0, 1, 2),
    workers: int = 1,
) -> list[dict]:
    """Train every ablation variant across shared seeds; one table row per variant."""
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    jobs = [
        (
            replace(base, ablation=variant, seed=seed).to_dict(),
            str(out_dir / f"abl_{variant}_seed{seed}"),
            eval_episodes,
            eval_seeds,
        )
        for variant in variants
        for seed in seeds
    ]
    results = _execute(jobs, workers)
    tiers = [bg.tier for bg in base.eval_backgrounds]
    rows = _aggregate(results, tiers, "variant")
    _write_table(rows, tiers, out_dir, "ablation_table")
    return rows


def run_augmentation_study(
    base: RunConfig,
    out_dir: str | Path,
    aug_kinds: tuple[str, ...] = STUDY_AUG_KINDS,
    seeds: tuple[int, ...] = (0, 1, 2),
    eval_episodes: int = 10,
    eval_seeds: tuple[int, ...] = (0, 1, 2),
    workers: int = 1,
) -> list[dict]:
    """Full model and baseline under each augmentation; one row per (model, aug)."""
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    jobs = []
    for variant in ("full", "baseline"):
        for kind in aug_kinds:
            for seed in seeds:
                aug = replace(base.aug, kind=kind)
                config = replace(base, ablation=variant, aug=aug, seed=seed)
                jobs.append(
                    (
                        config.to_dict(),
                        str(out_dir / f"aug_{variant}_{kind}_seed{seed}"),
                        eval_episodes,
                        eval_seeds,
                    )
                )
    results = _execute(jobs, workers)
    for r in results:
        r["label"] = f"{r['variant']}+{r['aug']}"
    tiers = [bg.tier for bg in base.eval_backgrounds]
    rows = _aggregate(results, tiers, "label")
    _write_table(rows, tiers, out_dir, "augmentation_table")
    return rows
