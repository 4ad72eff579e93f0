"""Deterministic 2-D point-mass reaching task rendered to small pixel frames.

The agent (a filled circle) must reach a goal (a filled square) inside the
arena [-1, 1]^2 under clipped double-integrator dynamics. Observations are
stacks of the k most recent RGB renders. Three background tiers (clean /
easy / hard) vary only the pixels behind the sprites, never the physics.
"""

from __future__ import annotations

import copy
from collections import deque
from dataclasses import dataclass
from functools import lru_cache
from pathlib import Path

import numpy as np

from .config import BackgroundMode
from .errors import ConfigError, UsageError

AGENT_COLOR = np.array([0.85, 0.15, 0.10], dtype=np.float32)
GOAL_COLOR = np.array([0.10, 0.80, 0.25], dtype=np.float32)
CLEAN_SHADE = 0.35

MIN_START_GOAL_DISTANCE = 0.5
REWARD_LOWER_BOUND = -2.0 * np.sqrt(2.0)  # arena diameter


@dataclass
class EnvState:
    """Ground-truth simulator state; diagnostics only, never visible to the agent."""

    position: np.ndarray
    velocity: np.ndarray
    goal: np.ndarray
    step_index: int
    rng_state: dict

    def copy(self) -> "EnvState":
        return EnvState(
            position=self.position.copy(),
            velocity=self.velocity.copy(),
            goal=self.goal.copy(),
            step_index=self.step_index,
            rng_state=copy.deepcopy(self.rng_state),
        )


def agent_radius(image_size: int) -> int:
    return max(2, round(4 * image_size / 64))


def goal_side(image_size: int) -> int:
    return max(3, round(8 * image_size / 64))


def _to_pixel(xy: np.ndarray, image_size: int) -> tuple[int, int]:
    """Arena coordinates (x right, y up) to (row, col)."""
    col = int(round((xy[0] + 1.0) / 2.0 * (image_size - 1)))
    row = int(round((1.0 - (xy[1] + 1.0) / 2.0) * (image_size - 1)))
    return row, col


@lru_cache(maxsize=8)
def _pixel_grid(image_size: int) -> tuple[np.ndarray, np.ndarray]:
    rows, cols = np.ogrid[:image_size, :image_size]
    return rows, cols


def sprite_masks(position: np.ndarray, goal: np.ndarray, image_size: int) -> tuple[np.ndarray, np.ndarray]:
    """Boolean (H, W) masks of the agent circle and goal square."""
    rows, cols = _pixel_grid(image_size)
    ar, ac = _to_pixel(np.asarray(position, dtype=np.float64), image_size)
    radius = agent_radius(image_size)
    agent = (rows - ar) ** 2 + (cols - ac) ** 2 <= radius**2

    gr, gc = _to_pixel(np.asarray(goal, dtype=np.float64), image_size)
    half = goal_side(image_size) // 2
    goal_mask = (np.abs(rows - gr) <= half) & (np.abs(cols - gc) <= half)
    return agent, goal_mask


def render_sprites(position: np.ndarray, goal: np.ndarray, image_size: int) -> np.ndarray:
    """Sprites on a black background, (3, H, W); the oracle layer for pixel tests."""
    frame = np.zeros((3, image_size, image_size), dtype=np.float32)
    _draw_sprites(frame, position, goal, image_size)
    return frame


def _draw_sprites(frame: np.ndarray, position: np.ndarray, goal: np.ndarray, image_size: int):
    agent, goal_mask = sprite_masks(position, goal, image_size)
    frame[:, goal_mask] = GOAL_COLOR[:, None]
    frame[:, agent] = AGENT_COLOR[:, None]  # agent drawn last, always visible


def _bilinear_upsample(grid: np.ndarray, image_size: int) -> np.ndarray:
    """(gh, gw) coarse grid -> (H, W) via separable linear interpolation."""
    gh, gw = grid.shape
    ys = np.linspace(0.0, gh - 1.0, image_size)
    xs = np.linspace(0.0, gw - 1.0, image_size)
    y0 = np.clip(ys.astype(int), 0, gh - 2)
    x0 = np.clip(xs.astype(int), 0, gw - 2)
    fy = (ys - y0)[:, None]
    fx = (xs - x0)[None, :]
    top = grid[y0][:, x0] * (1 - fx) + grid[y0][:, x0 + 1] * fx
    bot = grid[y0 + 1][:, x0] * (1 - fx) + grid[y0 + 1][:, x0 + 1] * fx
    return top * (1 - fy) + bot * fy


@lru_cache(maxsize=64)
def _easy_params(seed: int, image_size: int):
    rng = np.random.default_rng([seed, 0xEA5])
    freq = rng.uniform(0.5, 1.5, size=(3, 2))          # cycles across the image, per channel
    phase = rng.uniform(0.0, 2.0 * np.pi, size=3)
    speed = rng.uniform(0.1, 0.3, size=3)
    rows, cols = np.meshgrid(
        np.linspace(0.0, 1.0, image_size), np.linspace(0.0, 1.0, image_size), indexing="ij"
    )
    return freq, phase, speed, rows, cols


@lru_cache(maxsize=64)
def _hard_texture(seed: int, image_size: int) -> tuple[np.ndarray, tuple[int, int]]:
    rng = np.random.default_rng([seed, 0xA4D])
    grid = max(6, image_size // 2)  # near-pixel-scale texture
    channels = []
    for _ in range(3):
        coarse = rng.uniform(0.0, 1.0, size=(grid, grid))
        up = _bilinear_upsample(coarse, image_size)
        span = up.max() - up.min()
        channels.append((up - up.min()) / span if span > 0 else up * 0.0)
    drift = (int(rng.integers(2, 6)), int(rng.integers(2, 6)))
    return np.stack(channels).astype(np.float32), drift


def background_frame(background: BackgroundMode, step_index: int, image_size: int) -> np.ndarray:
    """Pure function of (tier, seed, step): the (3, H, W) backdrop for one render."""
    if background.tier == "clean":
        return np.full((3, image_size, image_size), CLEAN_SHADE, dtype=np.float32)
    if background.tier == "easy":
        freq, phase, speed, rows, cols = _easy_params(background.seed, image_size)
        frame = np.empty((3, image_size, image_size), dtype=np.float32)
        for c in range(3):
            wave = np.sin(
                2.0 * np.pi * (freq[c, 0] * rows + freq[c, 1] * cols) + phase[c] + speed[c] * step_index
            )
            frame[c] = 0.45 + 0.18 * wave  # bounded contrast
        return frame
    texture, (dy, dx) = _hard_texture(background.seed, image_size)
    return np.roll(texture, shift=(dy * step_index, dx * step_index), axis=(1, 2)).copy()


def render_frame(
    position: np.ndarray, goal: np.ndarray, background: BackgroundMode, step_index: int, image_size: int
) -> np.ndarray:
    frame = background_frame(background, step_index, image_size)
    _draw_sprites(frame, position, goal, image_size)
    return np.clip(frame, 0.0, 1.0)


class PointReachEnv:
    """Seeded reaching environment with frame-stacked pixel observations.

    Reward is the negative Euclidean distance to the goal; episodes end only
    at the horizon. A single instance is single-threaded; run independent
    instances for concurrent evaluation.
    """

    def __init__(
        self,
        image_size: int = 64,
        frame_stack: int = 3,
        background: BackgroundMode | None = None,
        dt: float = 0.1,
        force_scale: float = 1.0,
        max_speed: float = 1.0,
        horizon: int = 100,
        dump_dir: str | Path | None = None,
    ):
        if image_size <= 0 or frame_stack <= 0:
            raise ConfigError(f"image_size and frame_stack must be positive, got {image_size}, {frame_stack}")
        if horizon <= 0:
            raise ConfigError(f"horizon must be positive, got {horizon}")
        self.image_size = image_size
        self.frame_stack = frame_stack
        self.background = background or BackgroundMode()
        self.dt = dt
        self.force_scale = force_scale
        self.max_speed = max_speed
        self.horizon = horizon
        self.dump_dir = Path(dump_dir) if dump_dir is not None else None

        self._rng: np.random.Generator | None = None
        self._state: EnvState | None = None
        self._frames: deque[np.ndarray] = deque(maxlen=frame_stack)
        self._done = False
        self._episode = -1

    @property
    def observation_shape(self) -> tuple[int, int, int]:
        return (3 * self.frame_stack, self.image_size, self.image_size)

    def reset(self, seed: int, background: BackgroundMode | None = None) -> np.ndarray:
        if background is not None:
            self.background = background
        self._rng = np.random.default_rng(seed)
        while True:
            position = self._rng.uniform(-1.0, 1.0, size=2)
            goal = self._rng.uniform(-1.0, 1.0, size=2)
            if np.linalg.norm(position - goal) >= MIN_START_GOAL_DISTANCE:
                break
        self._state = EnvState(
            position=position,
            velocity=np.zeros(2),
            goal=goal,
            step_index=0,
            rng_state=copy.deepcopy(self._rng.bit_generator.state),
        )
        self._done = False
        self._episode += 1
        frame = self._render()
        self._frames.clear()
        self._frames.extend([frame] * self.frame_stack)  # first frame repeated after reset
        self._dump(frame)
        return self._observation()

    def step(self, action) -> tuple[np.ndarray, float, bool]:
        if self._state is None:
            raise UsageError("step() before reset()")
        if self._done:
            raise UsageError("episode finished; call reset()")
        action = np.asarray(action, dtype=np.float64).reshape(2)
        if not np.all(np.isfinite(action)):
            raise ValueError(f"action components must be finite, got {action}")
        action = np.clip(action, -1.0, 1.0)

        s = self._state
        s.velocity = np.clip(s.velocity + action * self.dt * self.force_scale, -self.max_speed, self.max_speed)
        s.position = np.clip(s.position + s.velocity * self.dt, -1.0, 1.0)
        s.step_index += 1
        reward = -float(np.linalg.norm(s.position - s.goal))
        self._done = s.step_index >= self.horizon

        frame = self._render()
        self._frames.append(frame)
        self._dump(frame)
        return self._observation(), reward, self._done

    def ground_truth_state(self) -> EnvState:
        if self._state is None:
            raise UsageError("ground_truth_state() before reset()")
        return self._state.copy()

    def agent_sprite_mask(self) -> np.ndarray:
        """(H, W) mask of the agent sprite in the current frame."""
        if self._state is None:
            raise UsageError("agent_sprite_mask() before reset()")
        agent, _ = sprite_masks(self._state.position, self._state.goal, self.image_size)
        return agent

    def _render(self) -> np.ndarray:
        s = self._state
        return render_frame(s.position, s.goal, self.background, s.step_index, self.image_size)

    def _observation(self) -> np.ndarray:
        return np.concatenate(list(self._frames), axis=0)

    def _dump(self, frame: np.ndarray):
        if self.dump_dir is None:
            return
        from PIL import Image

        self.dump_dir.mkdir(parents=True, exist_ok=True)
        rgb = (np.moveaxis(frame, 0, -1) * 255.0).round().astype(np.uint8)
        Image.fromarray(rgb).save(self.dump_dir / f"frame_{self._episode}_{self._state.step_index}.png")
