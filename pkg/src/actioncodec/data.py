"""Datasets: embodiment registry, chunking, normalization, synthetic trajectories."""

from __future__ import annotations

import json
import warnings
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

__all__ = [
    "EmbodimentSpec",
    "EmbodimentRegistry",
    "Trajectory",
    "ActionChunk",
    "DatasetStats",
    "SynthConfig",
    "SynthMotionModel",
    "compute_stats",
    "normalize",
    "denormalize",
    "chunk_trajectory",
    "synth_dataset",
    "save_trajectories",
    "load_trajectories",
]


@dataclass(frozen=True)
class EmbodimentSpec:
    """One robot platform: control rate, action dimensionality, chunk window."""

    name: str
    index: int
    control_hz: float
    action_dim: int
    chunk_duration: float = 1.0

    def __post_init__(self) -> None:
        if self.index < 0:
            raise ValueError(f"embodiment index must be >= 0, got {self.index}")
        if self.control_hz <= 0:
            raise ValueError(f"control_hz must be positive, got {self.control_hz}")
        if self.action_dim <= 0:
            raise ValueError(f"action_dim must be positive, got {self.action_dim}")
        if self.chunk_duration <= 0:
            raise ValueError(f"chunk_duration must be positive, got {self.chunk_duration}")
        if self.chunk_steps < 1:
            raise ValueError("control_hz * chunk_duration must round to at least 1 step")

    @property
    def chunk_steps(self) -> int:
        """Steps per chunk window: round(control_hz * chunk_duration)."""
        return int(round(self.control_hz * self.chunk_duration))

    def timestamps(self) -> np.ndarray:
        return np.arange(self.chunk_steps, dtype=np.float64) / self.control_hz

    def to_dict(self) -> dict:
        return {
            "name": self.name,
            "index": self.index,
            "control_hz": self.control_hz,
            "action_dim": self.action_dim,
            "chunk_duration": self.chunk_duration,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "EmbodimentSpec":
        return cls(
            name=d["name"],
            index=int(d["index"]),
            control_hz=float(d["control_hz"]),
            action_dim=int(d["action_dim"]),
            chunk_duration=float(d["chunk_duration"]),
        )


class EmbodimentRegistry:
    """Lookup of embodiment specs by name or soft-prompt index."""

    def __init__(self, specs: list[EmbodimentSpec]):
        if not specs:
            raise ValueError("registry needs at least one embodiment")
        indices = [s.index for s in specs]
        if len(set(indices)) != len(indices):
            raise ValueError("embodiment indices must be unique")
        names = [s.name for s in specs]
        if len(set(names)) != len(names):
            raise ValueError("embodiment names must be unique")
        self._by_name = {s.name: s for s in specs}
        self._by_index = {s.index: s for s in specs}
        self.specs = list(specs)

    def __len__(self) -> int:
        return len(self.specs)

    def __iter__(self):
        return iter(self.specs)

    def by_name(self, name: str) -> EmbodimentSpec:
        if name not in self._by_name:
            raise KeyError(f"unregistered embodiment {name!r}")
        return self._by_name[name]

    def by_index(self, index: int) -> EmbodimentSpec:
        if index not in self._by_index:
            raise KeyError(f"unregistered embodiment index {index}")
        return self._by_index[index]

    @property
    def max_index(self) -> int:
        return max(s.index for s in self.specs)

    def save(self, path: str | Path) -> None:
        doc = {"embodiments": [s.to_dict() for s in self.specs]}
        Path(path).write_text(json.dumps(doc, indent=2) + "\n")

    @classmethod
    def load(cls, path: str | Path) -> "EmbodimentRegistry":
        doc = json.loads(Path(path).read_text())
        return cls([EmbodimentSpec.from_dict(d) for d in doc["embodiments"]])


@dataclass
class Trajectory:
    """A full episode for one embodiment: actions, per-step context, labels."""

    embodiment: EmbodimentSpec
    actions: np.ndarray  # (length_steps, D)
    observation: np.ndarray  # (length_steps, obs_dim)
    language_id: int
    task_id: int

    def __post_init__(self) -> None:
        self.actions = np.asarray(self.actions, dtype=np.float64)
        self.observation = np.asarray(self.observation, dtype=np.float64)
        if self.actions.ndim != 2 or self.actions.shape[1] != self.embodiment.action_dim:
            raise ValueError(
                f"actions must be (steps, {self.embodiment.action_dim}), got {self.actions.shape}"
            )
        if not np.all(np.isfinite(self.actions)):
            raise ValueError("actions contain non-finite values")
        if self.observation.ndim != 2 or self.observation.shape[0] != self.actions.shape[0]:
            raise ValueError("observation must have one row per action step")

    @property
    def length_steps(self) -> int:
        return self.actions.shape[0]


@dataclass
class ActionChunk:
    """A fixed-duration action window, the unit every tokenizer consumes."""

    actions: np.ndarray  # (T, D)
    timestamps: np.ndarray  # (T,), seconds from chunk start
    embodiment_index: int
    chunk_id: int = 0
    successor_id: int | None = None

    def __post_init__(self) -> None:
        self.actions = np.asarray(self.actions, dtype=np.float64)
        self.timestamps = np.asarray(self.timestamps, dtype=np.float64)
        if self.actions.ndim != 2:
            raise ValueError(f"chunk actions must be 2-D, got shape {self.actions.shape}")
        if self.timestamps.shape != (self.actions.shape[0],):
            raise ValueError("timestamps must have one entry per step")
        if self.actions.shape[0] > 1 and not np.all(np.diff(self.timestamps) > 0):
            raise ValueError("timestamps must be strictly increasing")

    @property
    def horizon(self) -> int:
        return self.actions.shape[0]

    @property
    def action_dim(self) -> int:
        return self.actions.shape[1]


@dataclass
class DatasetStats:
    """Per-embodiment 1st/99th percentile action bounds used for normalization."""

    bounds: dict[str, tuple[np.ndarray, np.ndarray]]
    index_to_name: dict[int, str] = field(default_factory=dict)

    def for_name(self, name: str) -> tuple[np.ndarray, np.ndarray]:
        if name not in self.bounds:
            raise KeyError(f"no stats for embodiment {name!r}")
        return self.bounds[name]

    def for_index(self, index: int) -> tuple[np.ndarray, np.ndarray]:
        if index not in self.index_to_name:
            raise KeyError(f"no stats for embodiment index {index}")
        return self.bounds[self.index_to_name[index]]

    def save(self, path: str | Path) -> None:
        doc = {
            "embodiments": [
                {
                    "name": name,
                    "index": next(i for i, n in self.index_to_name.items() if n == name),
                    "low": self.bounds[name][0].tolist(),
                    "high": self.bounds[name][1].tolist(),
                }
                for name in sorted(self.bounds)
            ]
        }
        Path(path).write_text(json.dumps(doc, indent=2) + "\n")

    @classmethod
    def load(cls, path: str | Path) -> "DatasetStats":
        doc = json.loads(Path(path).read_text())
        bounds = {}
        index_to_name = {}
        for entry in doc["embodiments"]:
            bounds[entry["name"]] = (
                np.asarray(entry["low"], dtype=np.float64),
                np.asarray(entry["high"], dtype=np.float64),
            )
            index_to_name[int(entry["index"])] = entry["name"]
        return cls(bounds=bounds, index_to_name=index_to_name)


MIN_STEPS_PER_EMBODIMENT = 100


def compute_stats(trajectories: list[Trajectory]) -> DatasetStats:
    """1st/99th percentile per action dimension, computed per embodiment.

    Raises on empty input, on embodiments with fewer than 100 steps, and on
    degenerate dimensions (low == high).
    """
    if not trajectories:
        raise ValueError("no data")
    grouped: dict[str, list[np.ndarray]] = {}
    index_to_name: dict[int, str] = {}
    for traj in trajectories:
        grouped.setdefault(traj.embodiment.name, []).append(traj.actions)
        index_to_name[traj.embodiment.index] = traj.embodiment.name
    bounds = {}
    for name, blocks in grouped.items():
        stacked = np.concatenate(blocks, axis=0)
        if stacked.shape[0] < MIN_STEPS_PER_EMBODIMENT:
            raise ValueError(
                f"embodiment {name!r} has {stacked.shape[0]} steps, "
                f"need at least {MIN_STEPS_PER_EMBODIMENT}"
            )
        low = np.percentile(stacked, 1.0, axis=0)
        high = np.percentile(stacked, 99.0, axis=0)
        if np.any(high <= low):
            bad = int(np.argmax(high <= low))
            raise ValueError(f"degenerate dimension {bad} for embodiment {name!r}")
        bounds[name] = (low, high)
    return DatasetStats(bounds=bounds, index_to_name=index_to_name)


def normalize(chunk: ActionChunk, stats: DatasetStats) -> ActionChunk:
    """Affine map per dimension sending [low, high] -> [-1, 1], clipped outside."""
    low, high = stats.for_index(chunk.embodiment_index)
    if chunk.actions.shape[1] != low.shape[0]:
        raise ValueError(
            f"dimension mismatch: chunk has D={chunk.actions.shape[1]}, stats D={low.shape[0]}"
        )
    scaled = 2.0 * (chunk.actions - low) / (high - low) - 1.0
    return ActionChunk(
        actions=np.clip(scaled, -1.0, 1.0),
        timestamps=chunk.timestamps.copy(),
        embodiment_index=chunk.embodiment_index,
        chunk_id=chunk.chunk_id,
        successor_id=chunk.successor_id,
    )


def denormalize(chunk: ActionChunk, stats: DatasetStats) -> ActionChunk:
    """Inverse of :func:`normalize` on the [-1, 1] range."""
    low, high = stats.for_index(chunk.embodiment_index)
    if chunk.actions.shape[1] != low.shape[0]:
        raise ValueError(
            f"dimension mismatch: chunk has D={chunk.actions.shape[1]}, stats D={low.shape[0]}"
        )
    raw = (chunk.actions + 1.0) / 2.0 * (high - low) + low
    return ActionChunk(
        actions=raw,
        timestamps=chunk.timestamps.copy(),
        embodiment_index=chunk.embodiment_index,
        chunk_id=chunk.chunk_id,
        successor_id=chunk.successor_id,
    )


def chunk_trajectory(
    traj: Trajectory, stride_steps: int = 1, length_steps: int | None = None
) -> list[ActionChunk]:
    """Sliding windows of the embodiment's chunk length, with successor links.

    Consecutive chunks overlap by T - stride_steps steps. Chunk ids are local
    to the returned list; each chunk's successor_id points at the next window.
    ``length_steps`` overrides the window length (fixed-horizon baselines).
    """
    if stride_steps < 1:
        raise ValueError(f"stride_steps must be >= 1, got {stride_steps}")
    spec = traj.embodiment
    T = spec.chunk_steps if length_steps is None else int(length_steps)
    if T < 1:
        raise ValueError("window length must be >= 1")
    if stride_steps >= T:
        warnings.warn("no temporal overlap: stride_steps >= chunk length", stacklevel=2)
    if traj.length_steps < T:
        return []
    timestamps = np.arange(T, dtype=np.float64) / spec.control_hz
    offsets = range(0, traj.length_steps - T + 1, stride_steps)
    chunks = []
    for i, off in enumerate(offsets):
        chunks.append(
            ActionChunk(
                actions=traj.actions[off : off + T].copy(),
                timestamps=timestamps.copy(),
                embodiment_index=spec.index,
                chunk_id=i,
                successor_id=None,
            )
        )
    for i in range(len(chunks) - 1):
        chunks[i].successor_id = i + 1
    return chunks


@dataclass
class SynthConfig:
    """Generator parameters for the synthetic multi-embodiment corpus."""

    embodiments: list[EmbodimentSpec]
    n_tasks: int = 4
    episodes_per_task: int = 8
    duration_s: float = 2.0
    amplitude: float = 0.5
    jitter: float = 0.02
    n_basis: int = 3
    goal_dim: int = 2

    def __post_init__(self) -> None:
        if not self.embodiments:
            raise ValueError("config must list at least one embodiment")
        if self.n_tasks < 2:
            raise ValueError(f"need at least 2 tasks, got {self.n_tasks}")
        if self.episodes_per_task < 1:
            raise ValueError("episodes_per_task must be >= 1")
        if self.duration_s <= 0:
            raise ValueError("duration_s must be positive")
        if self.amplitude <= 0:
            raise ValueError("amplitude must be positive")
        if self.jitter < 0:
            raise ValueError("jitter must be >= 0")
        if self.n_basis < 1:
            raise ValueError("n_basis must be >= 1")
        if self.goal_dim < 1:
            raise ValueError("goal_dim must be >= 1")

    @property
    def obs_dim(self) -> int:
        # goal, task one-hot, plus a per-step progress coordinate (the toy
        # stand-in for state-bearing visual context)
        return self.goal_dim + self.n_tasks + 1


class SynthMotionModel:
    """Smooth task-conditioned motions: polynomials plus sinusoids, goal-coupled.

    All motion coefficients are drawn once from the seed, so a (task, goal)
    pair renders the same continuous motion at every control frequency.
    """

    _DENSE_GRID = 512

    def __init__(self, config: SynthConfig, seed: int):
        self.config = config
        rng = np.random.default_rng(seed)
        K = config.n_basis
        dim = max(e.action_dim for e in config.embodiments)
        self.canonical_dim = dim
        n_tasks = config.n_tasks
        # Polynomial part: a0 + a1*tau + a2*tau^2, task base + goal coupling.
        self.poly_base = rng.normal(size=(n_tasks, 3, dim))
        self.poly_goal = rng.normal(size=(3, dim, config.goal_dim)) / np.sqrt(config.goal_dim)
        # Sinusoid part: K components with task-specific phase and amplitude.
        self.sin_base = rng.normal(size=(n_tasks, K, dim))
        self.sin_goal = rng.normal(size=(K, dim, config.goal_dim)) / np.sqrt(config.goal_dim)
        self.sin_freq = 0.5 + np.arange(K, dtype=np.float64) * 0.5  # Hz over the episode
        self.sin_phase = rng.uniform(0.0, 2.0 * np.pi, size=(n_tasks, K, dim))

    def _raw_motion(self, task_id: int, goal: np.ndarray, tau: np.ndarray) -> np.ndarray:
        poly_coef = self.poly_base[task_id] + self.poly_goal @ goal  # (3, dim)
        powers = np.stack([np.ones_like(tau), tau, tau**2], axis=1)  # (L, 3)
        motion = powers @ poly_coef  # (L, dim)
        sin_coef = self.sin_base[task_id] + self.sin_goal @ goal  # (K, dim)
        for k in range(self.config.n_basis):
            phase = 2.0 * np.pi * self.sin_freq[k] * tau * self.config.duration_s
            motion += np.sin(phase[:, None] + self.sin_phase[task_id, k][None, :]) * sin_coef[k]
        return motion

    def _scale(self, task_id: int, goal: np.ndarray) -> float:
        tau = np.linspace(0.0, 1.0, self._DENSE_GRID)
        dense = self._raw_motion(task_id, goal, tau)
        mean_mag = float(np.mean(np.abs(dense)))
        return self.config.amplitude / max(mean_mag, 1e-6)

    def render(self, task_id: int, goal: np.ndarray, embodiment: EmbodimentSpec) -> np.ndarray:
        """Noise-free actions for (task, goal) sampled at the embodiment's rate."""
        goal = np.asarray(goal, dtype=np.float64)
        steps = int(round(self.config.duration_s * embodiment.control_hz))
        tau = np.arange(steps, dtype=np.float64) / embodiment.control_hz / self.config.duration_s
        motion = self._raw_motion(task_id, goal, tau) * self._scale(task_id, goal)
        return motion[:, : embodiment.action_dim]


def synth_dataset(config: SynthConfig, seed: int) -> list[Trajectory]:
    """Deterministic synthetic corpus: every task rendered at every embodiment."""
    model = SynthMotionModel(config, seed)
    rng = np.random.default_rng(seed + 1)
    trajectories = []
    for task_id in range(config.n_tasks):
        for _ in range(config.episodes_per_task):
            goal = rng.uniform(-1.0, 1.0, size=config.goal_dim)
            obs_vec = np.concatenate([goal, np.eye(config.n_tasks)[task_id]])
            for spec in config.embodiments:
                actions = model.render(task_id, goal, spec)
                if config.jitter > 0:
                    actions = actions + rng.normal(scale=config.jitter, size=actions.shape)
                steps = actions.shape[0]
                progress = np.arange(steps, dtype=np.float64) / max(steps - 1, 1)
                observation = np.concatenate(
                    [np.tile(obs_vec, (steps, 1)), progress[:, None]], axis=1
                )
                trajectories.append(
                    Trajectory(
                        embodiment=spec,
                        actions=actions,
                        observation=observation,
                        language_id=task_id,
                        task_id=task_id,
                    )
                )
    return trajectories


def save_trajectories(trajectories: list[Trajectory], path: str | Path) -> None:
    """JSON Lines, one record per trajectory; floats keep full precision."""
    with open(path, "w") as fh:
        for traj in trajectories:
            record = {
                "embodiment": traj.embodiment.name,
                "actions": traj.actions.tolist(),
                "observation": traj.observation.tolist(),
                "language_id": traj.language_id,
                "task_id": traj.task_id,
            }
            fh.write(json.dumps(record) + "\n")


def load_trajectories(path: str | Path, registry: EmbodimentRegistry) -> list[Trajectory]:
    trajectories = []
    with open(path) as fh:
        for line in fh:
            line = line.strip()
            if not line:
                continue
            record = json.loads(line)
            trajectories.append(
                Trajectory(
                    embodiment=registry.by_name(record["embodiment"]),
                    actions=np.asarray(record["actions"], dtype=np.float64),
                    observation=np.asarray(record["observation"], dtype=np.float64),
                    language_id=int(record["language_id"]),
                    task_id=int(record["task_id"]),
                )
            )
    return trajectories
