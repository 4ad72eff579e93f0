"""Checkpoint archive: every named parameter array, the run config, and the step."""

from __future__ import annotations

import hashlib
from pathlib import Path

import torch

from .config import RunConfig
from .encoder import FeatureExtractor
from .networks import TransitionHeads
from .sac import SACPolicy

CHECKPOINT_VERSION = 1


def save_checkpoint(
    path: str | Path,
    step: int,
    config: RunConfig,
    extractor: FeatureExtractor,
    heads: TransitionHeads,
    policy: SACPolicy,
):
    payload = {
        "format_version": CHECKPOINT_VERSION,
        "step": step,
        "config": config.to_dict(),
        "extractor": extractor.state_dict(),
        "heads": heads.state_dict(),
        "policy": {name: module.state_dict() for name, module in policy.modules().items()},
        "log_alpha": policy.log_alpha.detach().clone(),
    }
    torch.save(payload, path)


def load_checkpoint(path: str | Path) -> dict:
    payload = torch.load(path, map_location="cpu", weights_only=True)
    version = payload.get("format_version")
    if version != CHECKPOINT_VERSION:
        raise ValueError(f"unsupported checkpoint version {version!r}")
    return payload


def restore(path: str | Path) -> tuple[RunConfig, FeatureExtractor, TransitionHeads, SACPolicy]:
    """Rebuild models from a checkpoint; parameters load strictly."""
    payload = load_checkpoint(path)
    config = RunConfig.from_dict(payload["config"])
    extractor = FeatureExtractor(config)
    extractor.load_state_dict(payload["extractor"])
    heads = TransitionHeads(config.projection_dim, config.action_dim, config.hidden_dim)
    heads.load_state_dict(payload["heads"])
    policy = SACPolicy(extractor, config)
    for name, module in policy.modules().items():
        module.load_state_dict(payload["policy"][name])
    with torch.no_grad():
        policy.log_alpha.copy_(payload["log_alpha"])
    return config, extractor, heads, policy


def checkpoint_hash(path: str | Path) -> str:
    """Content hash over step plus all named arrays, independent of file encoding."""
    payload = load_checkpoint(path)
    digest = hashlib.sha256()
    digest.update(str(payload["step"]).encode())
    flat: list[tuple[str, torch.Tensor]] = []
    for group in ("extractor", "heads"):
        flat.extend((f"{group}.{k}", v) for k, v in payload[group].items())
    for name, state in payload["policy"].items():
        flat.extend((f"policy.{name}.{k}", v) for k, v in state.items())
    flat.append(("log_alpha", payload["log_alpha"]))
    for name, tensor in sorted(flat, key=lambda kv: kv[0]):
        digest.update(name.encode())
        digest.update(tensor.numpy().tobytes())
    return digest.hexdigest()


def module_hash(module: torch.nn.Module) -> str:
    """Hash of a live module's parameters, for change-tracking in tests."""
    digest = hashlib.sha256()
    for name, param in sorted(module.named_parameters(), key=lambda kv: kv[0]):
        digest.update(name.encode())
        digest.update(param.detach().numpy().tobytes())
    return digest.hexdigest()
