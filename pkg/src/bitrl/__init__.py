"""Pixel-based point-mass RL with a bidirectional latent-transition auxiliary objective."""

from .config import AugmentationSpec, BackgroundMode, RunConfig
from .encoder import FeatureExtractor
from .env import PointReachEnv
from .networks import TransitionHeads
from .replay import ReplayBuffer, Transition, TransitionBatch
from .sac import SACPolicy
from .transition import BidirectionalTransitionLearner, BiTLossReport

__version__ = "0.1.0"

__all__ = [
    "AugmentationSpec",
    "BackgroundMode",
    "BiTLossReport",
    "BidirectionalTransitionLearner",
    "FeatureExtractor",
    "PointReachEnv",
    "ReplayBuffer",
    "RunConfig",
    "SACPolicy",
    "Transition",
    "TransitionBatch",
    "TransitionHeads",
    "__version__",
]
