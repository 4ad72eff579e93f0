"""Run configuration: every hyperparameter of a run, serialized verbatim with it."""

from __future__ import annotations

import dataclasses
import json
from dataclasses import dataclass, field
from pathlib import Path

from .errors import ConfigError

AUGMENTATION_KINDS = ("overlay", "random_conv", "random_shift", "none")
BACKGROUND_TIERS = ("clean", "easy", "hard")
ABLATION_VARIANTS = ("full", "no_fwd", "no_bwd", "no_action", "only_action", "baseline")

# Default background seeds used when only a tier name is given (e.g. on the CLI).
DEFAULT_BACKGROUND_SEEDS = {"clean": 0, "easy": 101, "hard": 202}


@dataclass
class BackgroundMode:
    """Background interference tier plus the seed that drives its pattern."""

    tier: str = "clean"
    seed: int = 0

    def __post_init__(self):
        if self.tier not in BACKGROUND_TIERS:
            raise ConfigError(f"unknown background tier {self.tier!r}; expected one of {BACKGROUND_TIERS}")


@dataclass
class AugmentationSpec:
    """Which image perturbation the representation learner sees, and how strong."""

    kind: str = "overlay"
    alpha: float = 0.5
    pad: int = 4
    seed: int = 0

    def __post_init__(self):
        if self.kind not in AUGMENTATION_KINDS:
            raise ConfigError(f"unknown augmentation kind {self.kind!r}; expected one of {AUGMENTATION_KINDS}")
        if not 0.0 <= self.alpha <= 1.0:
            raise ValueError(f"alpha must be in [0, 1], got {self.alpha}")
        if self.pad < 0:
            raise ValueError(f"pad must be >= 0, got {self.pad}")


def background_from_name(name: str, seed: int | None = None) -> BackgroundMode:
    if name not in BACKGROUND_TIERS:
        raise ConfigError(f"unknown background tier {name!r}; expected one of {BACKGROUND_TIERS}")
    return BackgroundMode(name, DEFAULT_BACKGROUND_SEEDS[name] if seed is None else seed)


def _default_eval_backgrounds() -> list[BackgroundMode]:
    return [background_from_name(tier) for tier in BACKGROUND_TIERS]


@dataclass
class RunConfig:
    """All knobs of a training run.

    The instance written to ``config.json`` in the run directory is the
    ground truth for reproducing that run.
    """

    # environment
    image_size: int = 64
    frame_stack: int = 3
    dt: float = 0.1
    force_scale: float = 1.0
    max_speed: float = 1.0
    horizon: int = 100
    action_dim: int = 2

    # feature extractor
    encoder_filters: int = 32
    latent_dim: int = 64          # encoder output fed to the policy
    projection_dim: int = 64      # projected/predicted representation
    hidden_dim: int = 128         # MLP hidden width (projection, prediction, heads)
    ema_momentum: float = 0.05    # weight on the online parameters per target update

    # bidirectional transition learner
    bit_lr: float = 1e-3
    bit_batch_size: int = 128
    ablation: str = "full"
    detach_pseudo_action: bool = False
    aug: AugmentationSpec = field(default_factory=AugmentationSpec)

    # policy learner
    discount: float = 0.99
    critic_target_momentum: float = 0.01
    actor_lr: float = 1e-3
    critic_lr: float = 1e-3
    alpha_lr: float = 1e-3
    init_alpha: float = 0.1
    target_entropy: float | None = None   # None -> -action_dim
    rl_batch_size: int = 128

    # trainer
    omega: int = 2                # RL updates per iteration
    total_env_steps: int = 20_000
    initial_collect: int = 1000
    eval_every: int = 2000
    eval_episodes: int = 10
    buffer_capacity: int = 100_000
    seed: int = 0
    train_background: BackgroundMode = field(default_factory=BackgroundMode)
    eval_backgrounds: list[BackgroundMode] = field(default_factory=_default_eval_backgrounds)
    torch_threads: int = 1

    def __post_init__(self):
        if self.image_size <= 0 or self.frame_stack <= 0:
            raise ConfigError("image_size and frame_stack must be positive")
        if self.omega < 1:
            raise ConfigError(f"omega must be >= 1, got {self.omega}")
        if self.ablation not in ABLATION_VARIANTS:
            raise ConfigError(f"unknown ablation {self.ablation!r}; expected one of {ABLATION_VARIANTS}")
        if not 0.0 <= self.ema_momentum <= 1.0:
            raise ConfigError(f"ema_momentum must be in [0, 1], got {self.ema_momentum}")
        if not 0.0 <= self.discount < 1.0:
            raise ConfigError(f"discount must be in [0, 1), got {self.discount}")

    @property
    def obs_shape(self) -> tuple[int, int, int]:
        return (3 * self.frame_stack, self.image_size, self.image_size)

    @property
    def resolved_target_entropy(self) -> float:
        return -float(self.action_dim) if self.target_entropy is None else self.target_entropy

    def replace(self, **changes) -> "RunConfig":
        return dataclasses.replace(self, **changes)

    def to_dict(self) -> dict:
        return dataclasses.asdict(self)

    @classmethod
    def from_dict(cls, data: dict) -> "RunConfig":
        data = dict(data)
        known = {f.name for f in dataclasses.fields(cls)}
        unknown = set(data) - known
        if unknown:
            raise ConfigError(f"unknown config fields: {sorted(unknown)}")
        if "aug" in data and isinstance(data["aug"], dict):
            data["aug"] = AugmentationSpec(**data["aug"])
        if "train_background" in data and isinstance(data["train_background"], dict):
            data["train_background"] = BackgroundMode(**data["train_background"])
        if "eval_backgrounds" in data:
            data["eval_backgrounds"] = [
                BackgroundMode(**bg) if isinstance(bg, dict) else bg for bg in data["eval_backgrounds"]
            ]
        return cls(**data)

    def save(self, path: str | Path):
        Path(path).write_text(json.dumps(self.to_dict(), indent=2, sort_keys=True) + "\n")

    @classmethod
    def load(cls, path: str | Path) -> "RunConfig":
        return cls.from_dict(json.loads(Path(path).read_text()))
