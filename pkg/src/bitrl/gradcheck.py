"""Finite-difference verification of the two training losses.

Analytic gradients are compared against central differences for every
trainable parameter block, on toy dimensions in double precision: the
transition loss over the online branch and all heads, and the (frozen-target)
critic loss over the shared encoder and both critics.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import torch

from .augment import apply_augmentation
from .config import AugmentationSpec, RunConfig
from .encoder import FeatureExtractor
from .networks import TransitionHeads
from .sac import SACPolicy
from .transition import BidirectionalTransitionLearner

DEFAULT_STEP = 1e-5
DEFAULT_THRESHOLD = 1e-4
_REL_FLOOR = 1e-6  # absolute differences below the floor count as noise


@dataclass
class BlockCheck:
    loss_name: str
    block: str
    max_rel_error: float
    passed: bool


@dataclass
class GradCheckReport:
    threshold: float
    checks: list[BlockCheck]

    @property
    def passed(self) -> bool:
        return all(c.passed for c in self.checks)

    @property
    def max_rel_error(self) -> float:
        return max(c.max_rel_error for c in self.checks)

    def failures(self) -> list[BlockCheck]:
        return [c for c in self.checks if not c.passed]


def toy_gradcheck_config() -> RunConfig:
    return RunConfig(
        image_size=16,
        frame_stack=1,
        encoder_filters=4,
        latent_dim=4,
        projection_dim=4,
        hidden_dim=8,
        aug=AugmentationSpec(kind="overlay", alpha=0.5, seed=3),
        horizon=10,
    )


def _max_rel_error(analytic: torch.Tensor, numeric: torch.Tensor) -> float:
    denom = torch.clamp(torch.maximum(analytic.abs(), numeric.abs()), min=_REL_FLOOR)
    return ((analytic - numeric).abs() / denom).max().item()


def _fd_gradient(loss_fn, param: torch.nn.Parameter, step: float) -> torch.Tensor:
    flat = param.data.view(-1)
    grad = torch.zeros_like(flat)
    with torch.no_grad():
        for j in range(flat.numel()):
            orig = flat[j].item()
            flat[j] = orig + step
            up = loss_fn().item()
            flat[j] = orig - step
            down = loss_fn().item()
            flat[j] = orig
            grad[j] = (up - down) / (2.0 * step)
    return grad.view(param.shape)


def _check_blocks(
    loss_name: str,
    analytic_loss_fn,
    fd_loss_fn,
    blocks: dict[str, torch.nn.Parameter],
    step: float,
    threshold: float,
) -> list[BlockCheck]:
    params = list(blocks.values())
    grads = torch.autograd.grad(analytic_loss_fn(), params, allow_unused=True)
    checks = []
    for (name, param), grad in zip(blocks.items(), grads):
        analytic = torch.zeros_like(param) if grad is None else grad
        numeric = _fd_gradient(fd_loss_fn, param, step)
        err = _max_rel_error(analytic, numeric)
        checks.append(BlockCheck(loss_name, name, err, err < threshold))
    return checks


def run_gradcheck(
    config: RunConfig | None = None,
    batch_size: int = 2,
    step: float = DEFAULT_STEP,
    threshold: float = DEFAULT_THRESHOLD,
    seed: int = 0,
    corrupt_backward_sign: bool = False,
) -> GradCheckReport:
    """Full gradient audit; `corrupt_backward_sign` injects a deliberate analytic
    sign error on the backward-transition term to prove the harness catches it."""
    cfg = config if config is not None else toy_gradcheck_config()
    torch.manual_seed(seed)
    extractor = FeatureExtractor(cfg).double()
    heads = TransitionHeads(cfg.projection_dim, cfg.action_dim, cfg.hidden_dim).double()
    learner = BidirectionalTransitionLearner(extractor, heads, cfg)
    policy = SACPolicy(extractor, cfg)
    for module in policy.modules().values():
        module.double()
    policy.log_alpha.data = policy.log_alpha.data.double()

    rng = np.random.default_rng(seed)
    c, h, w = cfg.obs_shape
    obs = rng.uniform(0.0, 1.0, size=(batch_size, c, h, w))
    next_obs = rng.uniform(0.0, 1.0, size=(batch_size, c, h, w))
    actions = rng.uniform(-1.0, 1.0, size=(batch_size, cfg.action_dim))
    rewards = rng.uniform(-2.0, 0.0, size=batch_size)
    dones = rng.integers(0, 2, size=batch_size).astype(np.float64)
    obs_aug = apply_augmentation(obs, cfg.aug, rng)  # fixed once so the loss is a pure function of parameters

    obs_t = torch.from_numpy(obs)
    next_t = torch.from_numpy(next_obs)
    act_t = torch.from_numpy(actions)
    aug_t = torch.from_numpy(obs_aug)

    def transition_loss(flip: bool):
        parts = learner.loss_components(obs_t, act_t, next_t, aug_t)
        if flip:
            return parts["l_action"] + parts["l_fwd"] - parts["l_bwd"]
        return parts["l_total"]

    bit_blocks = {f"online_{n}": p for n, p in extractor.named_parameters() if p.requires_grad}
    bit_blocks.update({f"heads.{n}": p for n, p in heads.named_parameters()})
    checks = _check_blocks(
        "bit_loss",
        lambda: transition_loss(corrupt_backward_sign),
        lambda: transition_loss(False),
        bit_blocks,
        step,
        threshold,
    )

    with torch.no_grad():
        next_z = extractor.encode(next_t)
        y = policy.critic_target_values(torch.from_numpy(rewards), torch.from_numpy(dones), next_z)

    def critic_loss():
        return policy.critic_loss_given_target(extractor.encode(obs_t), act_t, y)

    critic_blocks = {f"encoder.{n}": p for n, p in extractor.online_encoder.named_parameters()}
    critic_blocks.update({f"q1.{n}": p for n, p in policy.q1.named_parameters()})
    critic_blocks.update({f"q2.{n}": p for n, p in policy.q2.named_parameters()})
    checks += _check_blocks("critic_loss", critic_loss, critic_loss, critic_blocks, step, threshold)

    return GradCheckReport(threshold=threshold, checks=checks)


def format_report(report: GradCheckReport) -> str:
    lines = [
        f"{c.loss_name}/{c.block}: max_rel_err={c.max_rel_error:.3e} {'ok' if c.passed else 'FAIL'}"
        for c in report.checks
    ]
    verdict = "PASS" if report.passed else "FAIL"
    lines.append(
        f"gradcheck: {verdict} ({len(report.checks)} blocks, max rel err {report.max_rel_error:.3e},"
        f" threshold {report.threshold:g})"
    )
    return "\n".join(lines)
