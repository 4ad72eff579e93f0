"""Network building blocks shared by the representation and policy learners."""

from __future__ import annotations

import math

import numpy as np
import torch
import torch.nn as nn
import torch.nn.functional as F

LOG_STD_MIN = -10.0
LOG_STD_MAX = 2.0


def mlp(in_dim: int, hidden_dim: int, out_dim: int) -> nn.Sequential:
    return nn.Sequential(nn.Linear(in_dim, hidden_dim), nn.ReLU(), nn.Linear(hidden_dim, out_dim))


def to_tensor(x, dtype=torch.float32) -> torch.Tensor:
    if isinstance(x, torch.Tensor):
        return x.to(dtype)
    return torch.as_tensor(np.ascontiguousarray(x), dtype=dtype)


class PixelEncoder(nn.Module):
    """Four stride-(2,1,1,1) conv layers, flatten, linear, layer norm."""

    def __init__(self, in_channels: int, image_size: int, filters: int = 32, latent_dim: int = 64):
        super().__init__()
        self.in_channels = in_channels
        self.image_size = image_size
        self.latent_dim = latent_dim
        self.convs = nn.ModuleList(
            [
                nn.Conv2d(in_channels, filters, 3, stride=2),
                nn.Conv2d(filters, filters, 3, stride=1),
                nn.Conv2d(filters, filters, 3, stride=1),
                nn.Conv2d(filters, filters, 3, stride=1),
            ]
        )
        side = (image_size - 3) // 2 + 1
        for _ in range(3):
            side -= 2
        if side < 1:
            raise ValueError(f"image_size {image_size} too small for the conv stack")
        self.fc = nn.Linear(filters * side * side, latent_dim)
        self.norm = nn.LayerNorm(latent_dim)

    def forward(self, obs: torch.Tensor) -> torch.Tensor:
        if obs.ndim != 4 or obs.shape[1:] != (self.in_channels, self.image_size, self.image_size):
            raise ValueError(
                f"expected (N, {self.in_channels}, {self.image_size}, {self.image_size}), got {tuple(obs.shape)}"
            )
        x = obs
        for conv in self.convs:
            x = F.relu(conv(x))
        return self.norm(self.fc(x.flatten(1)))


class TransitionHeads(nn.Module):
    """Pseudo-action, forward-transition, and backward-transition heads.

    The action head squashes to the action box; the transition heads emit
    unbounded latents. All three are independent 2-layer MLPs.
    """

    def __init__(self, projection_dim: int, action_dim: int, hidden_dim: int = 128):
        super().__init__()
        self.projection_dim = projection_dim
        self.action_dim = action_dim
        self.action_head = mlp(2 * projection_dim, hidden_dim, action_dim)
        self.forward_head = mlp(projection_dim + action_dim, hidden_dim, projection_dim)
        self.backward_head = mlp(action_dim + projection_dim, hidden_dim, projection_dim)

    def _check(self, name: str, x: torch.Tensor, dim: int):
        if x.shape[-1] != dim:
            raise ValueError(f"{name} has dimension {x.shape[-1]}, expected {dim}")

    def predict_action(self, z_prime: torch.Tensor, z_next: torch.Tensor) -> torch.Tensor:
        self._check("z_prime", z_prime, self.projection_dim)
        self._check("z_next", z_next, self.projection_dim)
        return torch.tanh(self.action_head(torch.cat([z_prime, z_next], dim=-1)))

    def forward_predict(self, z_prime: torch.Tensor, action: torch.Tensor) -> torch.Tensor:
        self._check("z_prime", z_prime, self.projection_dim)
        self._check("action", action, self.action_dim)
        return self.forward_head(torch.cat([z_prime, action], dim=-1))

    def backward_predict(self, action: torch.Tensor, z_next: torch.Tensor) -> torch.Tensor:
        self._check("action", action, self.action_dim)
        self._check("z_next", z_next, self.projection_dim)
        return self.backward_head(torch.cat([action, z_next], dim=-1))


class Actor(nn.Module):
    """Squashed-Gaussian policy over encoder latents."""

    def __init__(self, latent_dim: int, action_dim: int, hidden_dim: int = 128):
        super().__init__()
        self.latent_dim = latent_dim
        self.action_dim = action_dim
        self.trunk = nn.Sequential(
            nn.Linear(latent_dim, hidden_dim), nn.ReLU(), nn.Linear(hidden_dim, 2 * action_dim)
        )

    def forward(self, z: torch.Tensor) -> tuple[torch.Tensor, torch.Tensor]:
        if z.shape[-1] != self.latent_dim:
            raise ValueError(f"latent has dimension {z.shape[-1]}, expected {self.latent_dim}")
        mu, log_std = self.trunk(z).chunk(2, dim=-1)
        return mu, torch.clamp(log_std, LOG_STD_MIN, LOG_STD_MAX)

    def mean_action(self, z: torch.Tensor) -> torch.Tensor:
        mu, _ = self(z)
        return torch.tanh(mu)

    def sample(self, z: torch.Tensor, generator: torch.Generator | None = None) -> tuple[torch.Tensor, torch.Tensor]:
        """Reparameterized tanh-Gaussian sample and its log-probability."""
        mu, log_std = self(z)
        std = log_std.exp()
        eps = torch.randn(mu.shape, generator=generator, dtype=mu.dtype, device=mu.device)
        pre_tanh = mu + std * eps
        action = torch.tanh(pre_tanh)
        log_prob = (
            -0.5 * (eps.pow(2) + 2.0 * log_std + math.log(2.0 * math.pi))
            - torch.log(1.0 - action.pow(2) + 1e-6)
        ).sum(dim=-1, keepdim=True)
        return action, log_prob


class QFunction(nn.Module):
    """State-action value over (latent, action)."""

    def __init__(self, latent_dim: int, action_dim: int, hidden_dim: int = 128):
        super().__init__()
        self.net = nn.Sequential(
            nn.Linear(latent_dim + action_dim, hidden_dim),
            nn.ReLU(),
            nn.Linear(hidden_dim, hidden_dim),
            nn.ReLU(),
            nn.Linear(hidden_dim, 1),
        )

    def forward(self, z: torch.Tensor, action: torch.Tensor) -> torch.Tensor:
        return self.net(torch.cat([z, action], dim=-1))
