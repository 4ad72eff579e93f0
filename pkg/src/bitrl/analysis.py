"""Analysis utilities: input-gradient saliency, curve plots, invariance metrics."""

from __future__ import annotations

import json
from pathlib import Path

import numpy as np
import torch

from .augment import apply_augmentation
from .checkpoint import restore
from .config import AugmentationSpec, BackgroundMode
from .encoder import FeatureExtractor
from .errors import UsageError
from .networks import to_tensor
from .trainer import EVAL_LOG, TRAIN_LOG


def saliency_from_extractor(extractor: FeatureExtractor, obs: np.ndarray) -> np.ndarray:
    """|d ||f(o)||^2 / d o| summed over channels and stack, min-max scaled to [0, 1]."""
    x = to_tensor(obs)[None].requires_grad_(True)
    energy = extractor.online_encoder(x).pow(2).sum()
    (grad,) = torch.autograd.grad(energy, x)
    heat = grad.abs().sum(dim=1)[0].numpy()
    lo, hi = heat.min(), heat.max()
    if hi - lo <= 0.0:
        return np.zeros_like(heat)
    return ((heat - lo) / (hi - lo)).astype(np.float32)


def saliency_map(checkpoint: str | Path, obs: np.ndarray) -> np.ndarray:
    _, extractor, _, _ = restore(checkpoint)
    return saliency_from_extractor(extractor, obs)


def write_saliency(heatmap: np.ndarray, out_dir: str | Path, stem: str = "saliency") -> tuple[Path, Path]:
    from PIL import Image

    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    npy_path = out_dir / f"{stem}.npy"
    png_path = out_dir / f"{stem}.png"
    np.save(npy_path, heatmap)
    Image.fromarray((heatmap * 255.0).round().astype(np.uint8), mode="L").save(png_path)
    return png_path, npy_path


def augmentation_cosine(
    extractor: FeatureExtractor, obs_batch: np.ndarray, spec: AugmentationSpec, rng=None
) -> float:
    """Mean cosine similarity between encodings of raw and augmented observations."""
    aug = apply_augmentation(obs_batch, spec, rng)
    with torch.no_grad():
        z_raw = extractor.encode(to_tensor(obs_batch))
        z_aug = extractor.encode(to_tensor(aug))
    return torch.nn.functional.cosine_similarity(z_raw, z_aug, dim=-1).mean().item()


def _load_records(run_dir: Path) -> list[dict]:
    records = []
    for name in (TRAIN_LOG, EVAL_LOG):
        path = run_dir / name
        if path.exists():
            with open(path) as f:
                records.extend(json.loads(line) for line in f if line.strip())
    return records


def _series(records: list[dict], metric: str) -> list[tuple[int, float]]:
    if metric.startswith("return_"):
        tier = metric[len("return_"):]
        points = [
            (r["step"], r["mean_return"])
            for r in records
            if r.get("kind") == "eval" and r.get("background") == tier
        ]
    else:
        points = [(r["step"], r[metric]) for r in records if r.get("kind") != "eval" and metric in r]
    return sorted(points)


def _available_metrics(records: list[dict]) -> list[str]:
    skip = {"kind", "iter", "step", "variant", "background", "bg_seed", "episodes"}
    names: set[str] = set()
    for r in records:
        if r.get("kind") == "eval":
            names.add(f"return_{r['background']}")
        else:
            names.update(k for k in r if k not in skip)
    return sorted(names)


def plot_curves(run_dirs: list[str | Path], metric: str, out_path: str | Path) -> tuple[Path, Path]:
    """Across-run median and min-max band of a logged metric versus env steps.

    Writes the plot image at `out_path` and the aggregated numbers next to it
    as a plain-text table.
    """
    if not run_dirs:
        raise UsageError("no run directories given")
    per_run = []
    available: set[str] = set()
    for run_dir in run_dirs:
        records = _load_records(Path(run_dir))
        available.update(_available_metrics(records))
        series = _series(records, metric)
        if not series:
            raise UsageError(f"metric {metric!r} not found; available: {sorted(available)}")
        per_run.append(series)

    length = min(len(s) for s in per_run)
    steps = [p[0] for p in per_run[0][:length]]
    values = np.array([[p[1] for p in s[:length]] for s in per_run])
    med = np.median(values, axis=0)
    lo = values.min(axis=0)
    hi = values.max(axis=0)

    import matplotlib

    matplotlib.use("Agg")
    import matplotlib.pyplot as plt

    out_path = Path(out_path)
    out_path.parent.mkdir(parents=True, exist_ok=True)
    fig, ax = plt.subplots(figsize=(7, 4))
    ax.fill_between(steps, lo, hi, alpha=0.25, label="min-max")
    ax.plot(steps, med, label=f"median ({len(per_run)} runs)")
    ax.set_xlabel("env steps")
    ax.set_ylabel(metric)
    ax.legend()
    fig.tight_layout()
    fig.savefig(out_path, dpi=120)
    plt.close(fig)

    table_path = out_path.with_suffix(".txt")
    lines = [f"{'step':>10} {'median':>14} {'min':>14} {'max':>14}"]
    lines += [f"{s:>10} {m:>14.6f} {a:>14.6f} {b:>14.6f}" for s, m, a, b in zip(steps, med, lo, hi)]
    table_path.write_text("\n".join(lines) + "\n")
    return out_path, table_path
