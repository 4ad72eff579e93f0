"""Bidirectional latent-transition learning with pseudo-action prediction.

A pseudo action is decoded from the (augmented-online, next-target) latent
pair, then a forward head predicts the next latent from (online latent,
pseudo action) and a backward head predicts the current latent from
(pseudo action, next latent). The three mean-squared errors are summed with
equal weight and minimized jointly through the online encoder branch and all
heads. Rewards never enter; pixels are never predicted.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import torch
from torch.optim import Adam

from .augment import apply_augmentation
from .config import RunConfig
from .encoder import FeatureExtractor
from .errors import DivergenceError, UsageError
from .networks import TransitionHeads, to_tensor
from .replay import TransitionBatch


@dataclass
class BiTLossReport:
    """Per-update loss terms plus a representation-collapse diagnostic."""

    l_action: float
    l_fwd: float
    l_bwd: float
    l_total: float
    z_batch_variance: float

    def to_record(self) -> dict:
        return {
            "l_action": self.l_action,
            "l_fwd": self.l_fwd,
            "l_bwd": self.l_bwd,
            "l_total": self.l_total,
            "z_batch_variance": self.z_batch_variance,
        }


def prediction_losses(
    a_hat: torch.Tensor,
    z_next_hat: torch.Tensor,
    z_t_hat: torch.Tensor,
    actions: torch.Tensor,
    z_next: torch.Tensor,
    z_t: torch.Tensor,
) -> tuple[torch.Tensor, torch.Tensor, torch.Tensor]:
    """Mean squared errors of the three predictions: (action, forward, backward)."""
    l_action = (a_hat - actions).pow(2).mean()
    l_fwd = (z_next_hat - z_next).pow(2).mean()
    l_bwd = (z_t_hat - z_t).pow(2).mean()
    return l_action, l_fwd, l_bwd


class BidirectionalTransitionLearner:
    """Owns the three heads and the joint optimizer over heads + online branch."""

    def __init__(
        self,
        extractor: FeatureExtractor,
        heads: TransitionHeads,
        config: RunConfig,
        aug_rng: np.random.Generator | None = None,
    ):
        self.extractor = extractor
        self.heads = heads
        self.config = config
        self.optimizer = Adam(
            list(extractor.online_parameters()) + list(heads.parameters()), lr=config.bit_lr
        )
        self._aug_rng = aug_rng if aug_rng is not None else np.random.default_rng(config.aug.seed)

    def augment(self, obs: np.ndarray) -> np.ndarray:
        return apply_augmentation(obs, self.config.aug, self._aug_rng)

    def loss_components(
        self,
        obs: torch.Tensor,
        actions: torch.Tensor,
        next_obs: torch.Tensor,
        obs_aug: torch.Tensor,
    ) -> dict[str, torch.Tensor]:
        """Loss terms for the configured ablation; dropped terms are exact zeros.

        Target-branch latents are gradient-blocked; gradients reach the online
        branch (through the augmented view) and whichever heads are active.
        """
        variant = self.config.ablation
        if variant == "baseline":
            raise UsageError("baseline ablation has no transition objective")
        if len(obs) == 0:
            raise ValueError("empty batch")

        z_prime = self.extractor.online_project(obs_aug)
        z_t = self.extractor.target_project(obs)
        z_next = self.extractor.target_project(next_obs)
        zero = obs.new_zeros(())

        use_action = variant in ("full", "no_fwd", "no_bwd", "only_action")
        use_fwd = variant in ("full", "no_bwd", "no_action")
        use_bwd = variant in ("full", "no_fwd", "no_action")

        l_action = zero
        if use_action:
            a_hat = self.heads.predict_action(z_prime, z_next)
            l_action = (a_hat - actions).pow(2).mean()
            a_used = a_hat.detach() if self.config.detach_pseudo_action else a_hat
        else:
            a_used = actions  # no_action: the true action stands in for the pseudo action

        l_fwd = zero
        if use_fwd:
            l_fwd = (self.heads.forward_predict(z_prime, a_used) - z_next).pow(2).mean()
        l_bwd = zero
        if use_bwd:
            l_bwd = (self.heads.backward_predict(a_used, z_next) - z_t).pow(2).mean()

        return {
            "l_action": l_action,
            "l_fwd": l_fwd,
            "l_bwd": l_bwd,
            "l_total": l_action + l_fwd + l_bwd,
            "z_batch_variance": z_prime.detach().var(dim=0, unbiased=False).mean(),
        }

    def compute_loss(
        self,
        obs: torch.Tensor,
        actions: torch.Tensor,
        next_obs: torch.Tensor,
        obs_aug: torch.Tensor,
    ) -> tuple[torch.Tensor, BiTLossReport]:
        parts = self.loss_components(obs, actions, next_obs, obs_aug)
        report = BiTLossReport(
            l_action=parts["l_action"].item(),
            l_fwd=parts["l_fwd"].item(),
            l_bwd=parts["l_bwd"].item(),
            l_total=parts["l_total"].item(),
            z_batch_variance=parts["z_batch_variance"].item(),
        )
        return parts["l_total"], report

    def update(self, batch: TransitionBatch) -> BiTLossReport:
        """One joint gradient step; returns the pre-step loss report."""
        obs_aug = self.augment(batch.obs)
        obs_t = to_tensor(batch.obs)
        loss, report = self.compute_loss(
            obs_t,
            to_tensor(batch.actions),
            to_tensor(batch.next_obs),
            to_tensor(obs_aug),
        )
        if not np.isfinite(report.l_total):
            raise DivergenceError(f"non-finite transition loss: {report}")
        self.optimizer.zero_grad(set_to_none=True)
        loss.backward()
        self.optimizer.step()
        return report
