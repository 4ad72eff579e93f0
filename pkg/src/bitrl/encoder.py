"""Online/target encoder pair with projection and prediction heads.

The online branch (encoder, projection, prediction) trains by gradient; the
target branch (encoder, projection) shares the architecture, carries no
gradients, and trails the online branch by an exponential moving average.
"""

from __future__ import annotations

import copy

import torch
import torch.nn as nn

from .config import RunConfig
from .networks import PixelEncoder, mlp, to_tensor


class FeatureExtractor(nn.Module):
    def __init__(self, config: RunConfig):
        super().__init__()
        in_channels = 3 * config.frame_stack
        self.config = config
        self.online_encoder = PixelEncoder(
            in_channels, config.image_size, config.encoder_filters, config.latent_dim
        )
        self.online_projector = mlp(config.latent_dim, config.hidden_dim, config.projection_dim)
        self.online_predictor = mlp(config.projection_dim, config.hidden_dim, config.projection_dim)
        # Target branch starts as an exact copy and never receives gradients.
        self.target_encoder = copy.deepcopy(self.online_encoder)
        self.target_projector = copy.deepcopy(self.online_projector)
        for p in self.target_parameters():
            p.requires_grad_(False)

    def online_parameters(self):
        yield from self.online_encoder.parameters()
        yield from self.online_projector.parameters()
        yield from self.online_predictor.parameters()

    def encoder_parameters(self):
        """Only the shared encoder; the slice of the online branch the policy learner trains."""
        return self.online_encoder.parameters()

    def target_parameters(self):
        yield from self.target_encoder.parameters()
        yield from self.target_projector.parameters()

    def _batched(self, obs) -> tuple[torch.Tensor, bool]:
        x = to_tensor(obs, dtype=next(self.online_encoder.parameters()).dtype)
        if x.ndim == 3:
            return x[None], True
        return x, False

    def encode(self, obs) -> torch.Tensor:
        """Online encoder output fed to the policy learner."""
        x, single = self._batched(obs)
        z = self.online_encoder(x)
        return z[0] if single else z

    def online_project(self, obs_aug) -> torch.Tensor:
        """Encode, project, predict through the online branch; gradients flow."""
        x, single = self._batched(obs_aug)
        z = self.online_predictor(self.online_projector(self.online_encoder(x)))
        return z[0] if single else z

    def target_project(self, obs) -> torch.Tensor:
        """Target-branch projection with gradient propagation severed."""
        x, single = self._batched(obs)
        with torch.no_grad():
            z = self.target_projector(self.target_encoder(x))
        return z[0] if single else z

    @torch.no_grad()
    def ema_update(self, epsilon: float):
        """target <- (1 - epsilon) * target + epsilon * online, elementwise."""
        if not 0.0 <= epsilon <= 1.0:
            raise ValueError(f"epsilon must be in [0, 1], got {epsilon}")
        pairs = [
            (self.online_encoder, self.target_encoder),
            (self.online_projector, self.target_projector),
        ]
        for online, target in pairs:
            online_named = dict(online.named_parameters())
            target_named = dict(target.named_parameters())
            if online_named.keys() != target_named.keys():
                raise RuntimeError("online/target parameter names diverged")
            for name, src in online_named.items():
                dst = target_named[name]
                if dst.shape != src.shape:
                    raise RuntimeError(f"online/target shape mismatch at {name}")
                # accumulate in double so the stored value rounds once
                blended = (1.0 - epsilon) * dst.double() + epsilon * src.double()
                dst.copy_(blended.to(dst.dtype))
