"""Training orchestration: alternating RL and transition updates, plus evaluation.

Each iteration after warmup runs exactly omega RL updates, then one
transition update on a fresh batch, then the EMA target update. The
`baseline` ablation skips the transition update and the EMA entirely.
Runs are fully deterministic given their config.
"""

from __future__ import annotations

import json
import statistics
from dataclasses import asdict, dataclass, field
from pathlib import Path

import numpy as np
import torch

from .checkpoint import restore, save_checkpoint
from .config import BackgroundMode, RunConfig
from .encoder import FeatureExtractor
from .env import PointReachEnv
from .errors import DivergenceError
from .networks import TransitionHeads
from .replay import ReplayBuffer, Transition
from .sac import SACPolicy
from .transition import BidirectionalTransitionLearner

TRAIN_LOG = "train_log.jsonl"
EVAL_LOG = "eval_log.jsonl"
CONFIG_FILE = "config.json"


@dataclass
class BackgroundResult:
    tier: str
    bg_seed: int
    mean_return: float
    std_return: float
    episode_count: int
    seeds: list[int]
    per_seed_means: list[float]


@dataclass
class EvalReport:
    results: list[BackgroundResult] = field(default_factory=list)

    def mean_return(self, tier: str) -> float:
        for r in self.results:
            if r.tier == tier:
                return r.mean_return
        raise KeyError(f"no result for background {tier!r}")

    def to_dict(self) -> dict:
        return {"results": [asdict(r) for r in self.results]}


def _episode_seed(base_seed: int, episode: int) -> int:
    # Stable derivation so evaluation episodes are reproducible in isolation.
    return int(np.random.SeedSequence([base_seed, episode]).generate_state(1)[0])


def run_episode(
    env: PointReachEnv,
    extractor: FeatureExtractor,
    policy: SACPolicy,
    seed: int,
    background: BackgroundMode | None = None,
) -> float:
    """One deterministic-action episode; returns the cumulative reward."""
    obs = env.reset(seed=seed, background=background)
    total = 0.0
    done = False
    while not done:
        with torch.no_grad():
            z = extractor.encode(obs)
        action = policy.select_action(z, deterministic=True)
        obs, reward, done = env.step(action)
        total += reward
    return total


def _evaluate_models(
    config: RunConfig,
    extractor: FeatureExtractor,
    policy: SACPolicy,
    backgrounds: list[BackgroundMode],
    episodes: int,
    seeds: list[int],
    dump_dir: str | Path | None = None,
) -> EvalReport:
    report = EvalReport()
    for background in backgrounds:
        per_seed_means = []
        all_returns = []
        for seed in seeds:
            env = PointReachEnv(
                image_size=config.image_size,
                frame_stack=config.frame_stack,
                background=background,
                dt=config.dt,
                force_scale=config.force_scale,
                max_speed=config.max_speed,
                horizon=config.horizon,
                dump_dir=dump_dir,
            )
            returns = [
                run_episode(env, extractor, policy, _episode_seed(seed, ep)) for ep in range(episodes)
            ]
            per_seed_means.append(float(np.mean(returns)))
            all_returns.extend(returns)
        spread = per_seed_means if len(seeds) > 1 else all_returns
        report.results.append(
            BackgroundResult(
                tier=background.tier,
                bg_seed=background.seed,
                mean_return=float(np.mean(all_returns)),
                std_return=float(np.std(spread)),
                episode_count=len(all_returns),
                seeds=list(seeds),
                per_seed_means=per_seed_means,
            )
        )
    return report


def evaluate(
    checkpoint: str | Path,
    backgrounds: list[BackgroundMode],
    episodes: int = 10,
    seeds: list[int] | None = None,
    dump_dir: str | Path | None = None,
) -> EvalReport:
    """Deterministic-action evaluation of a checkpoint; never updates parameters."""
    config, extractor, _, policy = restore(checkpoint)
    for bg in backgrounds:
        if not isinstance(bg, BackgroundMode):
            raise ValueError(f"expected BackgroundMode, got {bg!r}")
    seeds = list(seeds) if seeds is not None else [0, 1, 2]
    extractor.eval()
    return _evaluate_models(config, extractor, policy, backgrounds, episodes, seeds, dump_dir)


class Trainer:
    def __init__(self, config: RunConfig, run_dir: str | Path, dump_frames: bool = False):
        torch.set_num_threads(max(1, config.torch_threads))
        self.config = config
        self.run_dir = Path(run_dir)
        self.run_dir.mkdir(parents=True, exist_ok=True)
        config.save(self.run_dir / CONFIG_FILE)

        root = np.random.SeedSequence(config.seed)
        env_ss, replay_ss, aug_ss, torch_ss, action_ss = root.spawn(5)
        torch.manual_seed(int(torch_ss.generate_state(1)[0]))

        self.env = PointReachEnv(
            image_size=config.image_size,
            frame_stack=config.frame_stack,
            background=config.train_background,
            dt=config.dt,
            force_scale=config.force_scale,
            max_speed=config.max_speed,
            horizon=config.horizon,
            dump_dir=self.run_dir / "frames" if dump_frames else None,
        )
        self.replay = ReplayBuffer(
            config.buffer_capacity,
            config.obs_shape,
            config.action_dim,
            seed=int(replay_ss.generate_state(1)[0]),
        )
        self.extractor = FeatureExtractor(config)
        self.heads = TransitionHeads(config.projection_dim, config.action_dim, config.hidden_dim)
        self.learner = BidirectionalTransitionLearner(
            self.extractor, self.heads, config, aug_rng=np.random.default_rng(aug_ss)
        )
        generator = torch.Generator().manual_seed(int(action_ss.generate_state(1)[0]))
        self.policy = SACPolicy(self.extractor, config, generator=generator)

        self._env_rng = np.random.default_rng(env_ss)
        self._iteration = 0
        self._env_step = 0

    def train(self) -> Path:
        cfg = self.config
        train_log = open(self.run_dir / TRAIN_LOG, "w")
        eval_log = open(self.run_dir / EVAL_LOG, "w")
        self._checkpoint(0)
        try:
            obs = self.env.reset(seed=self._next_episode_seed())
            for step in range(1, cfg.total_env_steps + 1):
                self._env_step = step
                action = self._collect_action(obs)
                next_obs, reward, done = self.env.step(action)
                self.replay.push(Transition(obs, action, reward, next_obs, done))
                obs = self.env.reset(seed=self._next_episode_seed()) if done else next_obs

                if len(self.replay) >= cfg.initial_collect:
                    self._iterate(train_log)

                if step % cfg.eval_every == 0 or step == cfg.total_env_steps:
                    self._periodic_eval(eval_log, step)
                    self._checkpoint(step)
        except DivergenceError:
            self._checkpoint_path("divergence_dump.bin")
            raise
        finally:
            train_log.close()
            eval_log.close()
        return self.run_dir

    def _collect_action(self, obs: np.ndarray) -> np.ndarray:
        if len(self.replay) < self.config.initial_collect:
            return self._env_rng.uniform(-1.0, 1.0, size=self.config.action_dim)
        with torch.no_grad():
            z = self.extractor.encode(obs)
        return self.policy.select_action(z, deterministic=False)

    def _iterate(self, train_log):
        cfg = self.config
        self._iteration += 1
        for _ in range(cfg.omega):
            report = self.policy.rl_update(self.replay.sample(cfg.rl_batch_size))
            self._log(
                train_log,
                kind="rl",
                critic_loss=report["critic_loss"],
                actor_loss=report["actor_loss"],
                alpha=report["alpha"],
                entropy=report["entropy"],
            )
        if cfg.ablation != "baseline":
            report = self.learner.update(self.replay.sample(cfg.bit_batch_size))
            self._log(train_log, kind="bit", **report.to_record())
            self.extractor.ema_update(cfg.ema_momentum)
            self._log(train_log, kind="ema", epsilon=cfg.ema_momentum)

    def _log(self, handle, kind: str, **fields):
        record = {
            "kind": kind,
            "iter": self._iteration,
            "step": self._env_step,
            "variant": self.config.ablation,
            **fields,
        }
        handle.write(json.dumps(record, sort_keys=True) + "\n")

    def _periodic_eval(self, eval_log, step: int):
        cfg = self.config
        report = _evaluate_models(
            cfg,
            self.extractor,
            self.policy,
            cfg.eval_backgrounds,
            cfg.eval_episodes,
            seeds=[cfg.seed],
        )
        for result in report.results:
            record = {
                "kind": "eval",
                "step": step,
                "variant": cfg.ablation,
                "background": result.tier,
                "bg_seed": result.bg_seed,
                "mean_return": result.mean_return,
                "std_return": result.std_return,
                "episodes": result.episode_count,
            }
            eval_log.write(json.dumps(record, sort_keys=True) + "\n")
        eval_log.flush()

    def _next_episode_seed(self) -> int:
        return int(self._env_rng.integers(0, 2**31 - 1))

    def _checkpoint(self, step: int) -> Path:
        return self._checkpoint_path(f"ckpt_{step}.bin", step)

    def _checkpoint_path(self, name: str, step: int | None = None) -> Path:
        path = self.run_dir / name
        save_checkpoint(path, self._env_step if step is None else step, self.config, self.extractor, self.heads, self.policy)
        return path


def train(config: RunConfig, run_dir: str | Path | None = None, dump_frames: bool = False) -> Path:
    """Run one full training job; returns the run directory."""
    if run_dir is None:
        run_dir = Path("runs") / f"{config.ablation}_{config.aug.kind}_seed{config.seed}"
    return Trainer(config, run_dir, dump_frames=dump_frames).train()


def latest_checkpoint(run_dir: str | Path) -> Path:
    """The highest-step ckpt_{step}.bin in a run directory."""
    candidates = []
    for path in Path(run_dir).glob("ckpt_*.bin"):
        try:
            candidates.append((int(path.stem.split("_")[1]), path))
        except (IndexError, ValueError):
            continue
    if not candidates:
        raise FileNotFoundError(f"no checkpoints under {run_dir}")
    return max(candidates)[1]


def median(values: list[float]) -> float:
    return float(statistics.median(values))
