"""Fixed-capacity FIFO transition store sampled by both learners.

Pixels are held as 8-bit channels and converted back to [0, 1] floats when
sampled. Single-writer: pushing and sampling happen on one thread.
"""

from __future__ import annotations

import struct
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .errors import NotReadyError

_MAGIC = b"BRB1"
_VERSION = 1
_HEADER = struct.Struct("<4sIQQQIIII")


@dataclass
class Transition:
    """One interaction record (o_t, a_t, r_t, o_{t+1}, done)."""

    obs: np.ndarray
    action: np.ndarray
    reward: float
    next_obs: np.ndarray
    done: bool


@dataclass
class TransitionBatch:
    """Stacked transitions; arrays share a leading batch axis."""

    obs: np.ndarray        # (N, C, H, W) float32 in [0, 1]
    actions: np.ndarray    # (N, action_dim) float32
    rewards: np.ndarray    # (N,) float32
    next_obs: np.ndarray   # (N, C, H, W) float32 in [0, 1]
    dones: np.ndarray      # (N,) float32

    def __len__(self) -> int:
        return len(self.obs)


class ReplayBuffer:
    def __init__(self, capacity: int, obs_shape: tuple[int, int, int], action_dim: int = 2, seed: int = 0):
        if capacity < 1:
            raise ValueError(f"capacity must be >= 1, got {capacity}")
        self.capacity = capacity
        self.obs_shape = tuple(obs_shape)
        self.action_dim = action_dim
        self._obs = np.zeros((capacity, *obs_shape), dtype=np.uint8)
        self._next_obs = np.zeros((capacity, *obs_shape), dtype=np.uint8)
        self._actions = np.zeros((capacity, action_dim), dtype=np.float32)
        self._rewards = np.zeros(capacity, dtype=np.float32)
        self._dones = np.zeros(capacity, dtype=np.uint8)
        self._head = 0
        self._size = 0
        self._rng = np.random.default_rng(seed)

    def __len__(self) -> int:
        return self._size

    def push(self, transition: Transition):
        obs = np.asarray(transition.obs, dtype=np.float32)
        next_obs = np.asarray(transition.next_obs, dtype=np.float32)
        action = np.asarray(transition.action, dtype=np.float32)
        if obs.shape != self.obs_shape or next_obs.shape != self.obs_shape:
            raise ValueError(f"observation shape {obs.shape} != buffer shape {self.obs_shape}")
        if action.shape != (self.action_dim,):
            raise ValueError(f"action shape {action.shape} != ({self.action_dim},)")
        if np.any(np.abs(action) > 1.0 + 1e-6):
            raise ValueError(f"action components must be in [-1, 1], got {action}")
        if not np.isfinite(transition.reward):
            raise ValueError(f"reward must be finite, got {transition.reward}")

        i = self._head
        self._obs[i] = np.round(obs * 255.0).astype(np.uint8)
        self._next_obs[i] = np.round(next_obs * 255.0).astype(np.uint8)
        self._actions[i] = action
        self._rewards[i] = transition.reward
        self._dones[i] = 1 if transition.done else 0
        self._head = (i + 1) % self.capacity
        self._size = min(self._size + 1, self.capacity)

    def sample(self, n: int) -> TransitionBatch:
        """Uniform-with-replacement draw of n transitions."""
        if n < 1:
            raise ValueError(f"batch size must be >= 1, got {n}")
        if self._size < n:
            raise NotReadyError(f"buffer holds {self._size} transitions, asked for {n}")
        idx = self._rng.integers(0, self._size, size=n)
        return TransitionBatch(
            obs=self._obs[idx].astype(np.float32) / 255.0,
            actions=self._actions[idx].copy(),
            rewards=self._rewards[idx].copy(),
            next_obs=self._next_obs[idx].astype(np.float32) / 255.0,
            dones=self._dones[idx].astype(np.float32),
        )

    def save(self, path: str | Path):
        """Snapshot to one little-endian binary file: header then raw arrays."""
        c, h, w = self.obs_shape
        header = _HEADER.pack(_MAGIC, _VERSION, self.capacity, self._size, self._head, c, h, w, self.action_dim)
        with open(path, "wb") as f:
            f.write(header)
            n = self._size
            f.write(self._obs[:n].tobytes())
            f.write(self._next_obs[:n].tobytes())
            f.write(self._actions[:n].astype("<f4").tobytes())
            f.write(self._rewards[:n].astype("<f4").tobytes())
            f.write(self._dones[:n].tobytes())

    @classmethod
    def load(cls, path: str | Path, seed: int = 0) -> "ReplayBuffer":
        raw = Path(path).read_bytes()
        magic, version, capacity, size, head, c, h, w, action_dim = _HEADER.unpack_from(raw)
        if magic != _MAGIC or version != _VERSION:
            raise ValueError(f"not a replay snapshot (magic={magic!r}, version={version})")
        buf = cls(capacity, (c, h, w), action_dim, seed=seed)
        offset = _HEADER.size
        obs_bytes = size * c * h * w
        buf._obs[:size] = np.frombuffer(raw, np.uint8, obs_bytes, offset).reshape(size, c, h, w)
        offset += obs_bytes
        buf._next_obs[:size] = np.frombuffer(raw, np.uint8, obs_bytes, offset).reshape(size, c, h, w)
        offset += obs_bytes
        buf._actions[:size] = np.frombuffer(raw, "<f4", size * action_dim, offset).reshape(size, action_dim)
        offset += size * action_dim * 4
        buf._rewards[:size] = np.frombuffer(raw, "<f4", size, offset)
        offset += size * 4
        buf._dones[:size] = np.frombuffer(raw, np.uint8, size, offset)
        buf._size = size
        buf._head = head
        return buf
