"""Image-space perturbations applied to observations on the representation path.

All ops are pure: same (input, seed, parameters) gives the same output and
inputs are never mutated. Observations are (3k, H, W) or batched
(N, 3k, H, W) arrays with values in [0, 1]; outputs keep shape and range.
"""

from __future__ import annotations

from functools import lru_cache

import numpy as np
import torch
import torch.nn.functional as F

from .config import AugmentationSpec

_POOL_SEED = 0xD15C  # identity of the bundled distractor pool


def _as_rng(seed_or_rng) -> np.random.Generator:
    if isinstance(seed_or_rng, np.random.Generator):
        return seed_or_rng
    return np.random.default_rng(seed_or_rng)


def _split_frames(obs: np.ndarray) -> tuple[np.ndarray, bool]:
    """View (N, 3k, H, W) as (N, k, 3, H, W); also accepts a single observation."""
    if obs.ndim == 3:
        obs = obs[None]
        single = True
    elif obs.ndim == 4:
        single = False
    else:
        raise ValueError(f"expected (3k, H, W) or (N, 3k, H, W), got shape {obs.shape}")
    n, channels, h, w = obs.shape
    if channels % 3 != 0:
        raise ValueError(f"channel count {channels} is not a multiple of 3")
    return obs.reshape(n, channels // 3, 3, h, w), single


def _merge_frames(frames: np.ndarray, single: bool) -> np.ndarray:
    n, k, _, h, w = frames.shape
    out = frames.reshape(n, 3 * k, h, w)
    return out[0] if single else out


@lru_cache(maxsize=8)
def distractor_pool(image_size: int, count: int = 64) -> np.ndarray:
    """The bundled overlay pool: (count, 3, H, W) procedural textures in [0, 1]."""
    images = np.empty((count, 3, image_size, image_size), dtype=np.float32)
    grid = np.linspace(0.0, 1.0, image_size)
    rows, cols = np.meshgrid(grid, grid, indexing="ij")
    for i in range(count):
        rng = np.random.default_rng([_POOL_SEED, i])
        style = i % 4
        if style == 0:  # sinusoidal plasma
            for c in range(3):
                fr, fc = rng.uniform(1.0, 4.0, size=2)
                ph = rng.uniform(0.0, 2.0 * np.pi)
                images[i, c] = 0.5 + 0.5 * np.sin(2.0 * np.pi * (fr * rows + fc * cols) + ph)
        elif style == 1:  # checkerboard
            cells = int(rng.integers(3, 9))
            board = ((rows * cells).astype(int) + (cols * cells).astype(int)) % 2
            color_a, color_b = rng.uniform(0.0, 1.0, size=(2, 3))
            images[i] = np.where(board[None], color_a[:, None, None], color_b[:, None, None])
        elif style == 2:  # diagonal stripes
            cycles = rng.uniform(2.0, 8.0)
            angle = rng.uniform(0.0, np.pi)
            coord = rows * np.cos(angle) + cols * np.sin(angle)
            stripe = 0.5 + 0.5 * np.sign(np.sin(2.0 * np.pi * cycles * coord))
            tint = rng.uniform(0.2, 1.0, size=3)
            images[i] = stripe[None] * tint[:, None, None]
        else:  # smooth value noise
            for c in range(3):
                coarse = rng.uniform(0.0, 1.0, size=(6, 6))
                y = np.clip((rows * 5).astype(int), 0, 4)
                x = np.clip((cols * 5).astype(int), 0, 4)
                fy, fx = rows * 5 - y, cols * 5 - x
                top = coarse[y, x] * (1 - fx) + coarse[y, x + 1] * fx
                bot = coarse[y + 1, x] * (1 - fx) + coarse[y + 1, x + 1] * fx
                images[i, c] = top * (1 - fy) + bot * fy
    np.clip(images, 0.0, 1.0, out=images)
    images.setflags(write=False)
    return images


def random_overlay(obs: np.ndarray, distractors: np.ndarray, alpha: float, rng=0) -> np.ndarray:
    """Convex blend of each stacked frame with a distractor sampled per frame."""
    if not 0.0 <= alpha <= 1.0:
        raise ValueError(f"alpha must be in [0, 1], got {alpha}")
    rng = _as_rng(rng)
    frames, single = _split_frames(obs)
    n, k = frames.shape[:2]
    idx = rng.integers(0, len(distractors), size=(n, k))
    blended = (1.0 - alpha) * frames + alpha * distractors[idx].astype(frames.dtype)
    out = np.clip(blended, 0.0, 1.0).astype(obs.dtype)
    return _merge_frames(out, single)


def random_convolution(obs: np.ndarray, seed=0) -> np.ndarray:
    """Pass each 3-channel frame through a freshly sampled 3x3 convolution.

    Kernel weights are standard normal, padding reflects at the border, and
    each output frame is min-max renormalized to [0, 1] (constant frames map
    to zeros).
    """
    rng = _as_rng(seed)
    frames, single = _split_frames(obs)
    n, k, _, h, w = frames.shape
    m = n * k
    kernels = rng.standard_normal(size=(m, 3, 3, 3, 3)).astype(np.float64)

    x = torch.from_numpy(np.ascontiguousarray(frames.reshape(1, m * 3, h, w), dtype=np.float64))
    x = F.pad(x, (1, 1, 1, 1), mode="reflect")
    weight = torch.from_numpy(kernels.reshape(m * 3, 3, 3, 3))
    y = F.conv2d(x, weight, groups=m).numpy().reshape(n, k, 3, h, w)

    lo = y.min(axis=(2, 3, 4), keepdims=True)
    hi = y.max(axis=(2, 3, 4), keepdims=True)
    span = hi - lo
    out = np.where(span > 0, (y - lo) / np.where(span > 0, span, 1.0), 0.0)
    return _merge_frames(out.astype(obs.dtype), single)


def random_shift(obs: np.ndarray, pad: int, rng=0) -> np.ndarray:
    """Replicate-pad by `pad` and crop a random window, same offset for all stacked frames."""
    h, w = obs.shape[-2:]
    if pad >= min(h, w) / 2:
        raise ValueError(f"pad {pad} too large for {h}x{w} frames")
    if pad == 0:
        return obs.copy()
    rng = _as_rng(rng)
    frames, single = _split_frames(obs)
    n = frames.shape[0]
    padded = np.pad(frames, ((0, 0), (0, 0), (0, 0), (pad, pad), (pad, pad)), mode="edge")
    out = np.empty_like(frames)
    offsets = rng.integers(0, 2 * pad + 1, size=(n, 2))
    for i, (dy, dx) in enumerate(offsets):
        out[i] = padded[i, :, :, dy : dy + h, dx : dx + w]
    return _merge_frames(out, single)


def apply_augmentation(obs: np.ndarray, spec: AugmentationSpec, rng=None) -> np.ndarray:
    """Dispatch on spec.kind; `none` is the identity (copy) under any seed."""
    rng = _as_rng(spec.seed if rng is None else rng)
    if spec.kind == "none":
        return obs.copy()
    if spec.kind == "overlay":
        pool = distractor_pool(obs.shape[-1])
        return random_overlay(obs, pool, spec.alpha, rng)
    if spec.kind == "random_conv":
        return random_convolution(obs, rng)
    if spec.kind == "random_shift":
        return random_shift(obs, spec.pad, rng)
    raise ValueError(f"unknown augmentation kind {spec.kind!r}")
