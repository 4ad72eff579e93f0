"""Soft actor-critic over encoder latents.

The policy consumes raw (unaugmented) observations through the shared
encoder. Critic gradients flow into the encoder; actor and temperature
updates see detached latents. Twin critics bootstrap against their own
EMA targets with a learned temperature.
"""

from __future__ import annotations

import copy
import math

import numpy as np
import torch
import torch.nn as nn
import torch.nn.functional as F
from torch.optim import Adam

from .config import RunConfig
from .encoder import FeatureExtractor
from .errors import DivergenceError
from .networks import Actor, QFunction, to_tensor


class SACPolicy:
    def __init__(self, extractor: FeatureExtractor, config: RunConfig, generator: torch.Generator | None = None):
        self.extractor = extractor
        self.config = config
        d, a = config.latent_dim, config.action_dim
        self.actor = Actor(d, a, config.hidden_dim)
        self.q1 = QFunction(d, a, config.hidden_dim)
        self.q2 = QFunction(d, a, config.hidden_dim)
        self.q1_target = copy.deepcopy(self.q1)
        self.q2_target = copy.deepcopy(self.q2)
        for p in self.target_parameters():
            p.requires_grad_(False)
        self.log_alpha = nn.Parameter(torch.tensor(math.log(config.init_alpha)))
        self.target_entropy = config.resolved_target_entropy

        self.actor_optimizer = Adam(self.actor.parameters(), lr=config.actor_lr)
        self.critic_optimizer = Adam(list(self.q1.parameters()) + list(self.q2.parameters()), lr=config.critic_lr)
        self.alpha_optimizer = Adam([self.log_alpha], lr=config.alpha_lr)
        self.encoder_optimizer = Adam(extractor.encoder_parameters(), lr=config.critic_lr)
        self.generator = generator if generator is not None else torch.Generator().manual_seed(config.seed)

    @property
    def alpha(self) -> float:
        return self.log_alpha.exp().item()

    def target_parameters(self):
        yield from self.q1_target.parameters()
        yield from self.q2_target.parameters()

    def modules(self) -> dict[str, nn.Module]:
        return {
            "actor": self.actor,
            "q1": self.q1,
            "q2": self.q2,
            "q1_target": self.q1_target,
            "q2_target": self.q2_target,
        }

    def select_action(self, z_tilde, deterministic: bool = False) -> np.ndarray:
        """Squashed mean (deterministic) or squashed sample; components in [-1, 1]."""
        z = to_tensor(z_tilde)
        single = z.ndim == 1
        if single:
            z = z[None]
        with torch.no_grad():
            if deterministic:
                action = self.actor.mean_action(z)
            else:
                action, _ = self.actor.sample(z, generator=self.generator)
        out = action.numpy()
        return out[0] if single else out

    @torch.no_grad()
    def critic_target_values(
        self, rewards: torch.Tensor, dones: torch.Tensor, next_z: torch.Tensor
    ) -> torch.Tensor:
        """y = r + gamma * (1 - done) * (min_i Q'_i(z', a') - alpha * log pi(a'|z'))."""
        next_action, next_log_prob = self.actor.sample(next_z, generator=self.generator)
        min_q = torch.min(self.q1_target(next_z, next_action), self.q2_target(next_z, next_action))
        soft_value = min_q - self.log_alpha.exp() * next_log_prob
        return rewards.unsqueeze(-1) + self.config.discount * (1.0 - dones.unsqueeze(-1)) * soft_value

    def critic_loss_given_target(self, z: torch.Tensor, actions: torch.Tensor, y: torch.Tensor) -> torch.Tensor:
        return F.mse_loss(self.q1(z, actions), y) + F.mse_loss(self.q2(z, actions), y)

    def rl_update(self, batch) -> dict:
        """One critic + actor + temperature step; critic gradients also train the encoder."""
        obs = to_tensor(batch.obs)
        actions = to_tensor(batch.actions)
        rewards = to_tensor(batch.rewards)
        next_obs = to_tensor(batch.next_obs)
        dones = to_tensor(batch.dones)

        z = self.extractor.encode(obs)
        with torch.no_grad():
            next_z = self.extractor.encode(next_obs)
        y = self.critic_target_values(rewards, dones, next_z)
        critic_loss = self.critic_loss_given_target(z, actions, y)

        self.critic_optimizer.zero_grad(set_to_none=True)
        self.encoder_optimizer.zero_grad(set_to_none=True)
        critic_loss.backward()
        self.critic_optimizer.step()
        self.encoder_optimizer.step()

        z_detached = z.detach()
        pi_action, log_prob = self.actor.sample(z_detached, generator=self.generator)
        min_q = torch.min(self.q1(z_detached, pi_action), self.q2(z_detached, pi_action))
        actor_loss = (self.log_alpha.exp().detach() * log_prob - min_q).mean()
        self.actor_optimizer.zero_grad(set_to_none=True)
        actor_loss.backward()
        self.actor_optimizer.step()

        alpha_loss = (self.log_alpha.exp() * (-log_prob - self.target_entropy).detach()).mean()
        self.alpha_optimizer.zero_grad(set_to_none=True)
        alpha_loss.backward()
        self.alpha_optimizer.step()

        losses = (critic_loss.item(), actor_loss.item(), alpha_loss.item())
        if not all(np.isfinite(v) for v in losses):
            raise DivergenceError(f"non-finite RL losses: critic={losses[0]}, actor={losses[1]}, alpha={losses[2]}")
        self._update_critic_targets()

        return {
            "critic_loss": losses[0],
            "actor_loss": losses[1],
            "alpha_loss": losses[2],
            "alpha": self.alpha,
            "entropy": -log_prob.mean().item(),
        }

    @torch.no_grad()
    def _update_critic_targets(self):
        tau = self.config.critic_target_momentum
        for online, target in ((self.q1, self.q1_target), (self.q2, self.q2_target)):
            for src, dst in zip(online.parameters(), target.parameters()):
                dst.mul_(1.0 - tau).add_(src, alpha=tau)
