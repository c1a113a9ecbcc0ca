"""Self-learning loop: search-driven episodes, replay memory, Adam on squared error."""

from __future__ import annotations

import logging
from collections import deque
from dataclasses import dataclass, field, fields
from typing import Callable, Sequence

import numpy as np

from .embed_net import AdamState, EmbeddingParams, adam_step, init_params, loss, loss_and_grad, save_checkpoint
from .errors import ConfigError, InsufficientData
from .instances import TspInstance, check_tour, tour_length
from .mcts import SearchConfig, solve_instance
from .oracles import nearest_neighbor

log = logging.getLogger(__name__)

TRAIN_START_CITY = 0


@dataclass(frozen=True)
class Experience:
    """One step of an episode: the path before the move, the move, and the length still to go.

    ``reward`` is in normalized units (see ``TspInstance.length_unit``).
    """

    instance: TspInstance
    visited: tuple[int, ...]
    action: int
    reward: float


class ReplayMemory:
    def __init__(self, capacity: int):
        if capacity < 1:
            raise ValueError("capacity must be positive")
        self.capacity = capacity
        self.buffer: deque[Experience] = deque(maxlen=capacity)

    def push(self, experiences) -> None:
        self.buffer.extend(experiences)

    def sample(self, k: int, rng: np.random.Generator) -> list[Experience]:
        """k draws, uniform with replacement."""
        if len(self.buffer) < k:
            raise InsufficientData(f"memory holds {len(self.buffer)} experiences, {k} requested")
        idx = rng.integers(0, len(self.buffer), size=k)
        return [self.buffer[i] for i in idx]

    def __len__(self):
        return len(self.buffer)


@dataclass(frozen=True)
class TrainConfig:
    max_episodes: int = 300
    replay_capacity: int = 10000
    batch_size: int = 32
    learning_rate: float = 1e-4
    l2_coeff: float = 1e-4
    search: SearchConfig = field(default_factory=SearchConfig)
    graphs_per_run: int = 40
    checkpoint_every: int = 100
    probe_every: int = 50
    updates_per_episode: int = 1

    def __post_init__(self):
        for name in ("replay_capacity", "batch_size", "graphs_per_run", "checkpoint_every", "probe_every", "updates_per_episode"):
            if getattr(self, name) < 1:
                raise ValueError(f"{name} must be positive")
        if self.max_episodes < 0:
            raise ValueError("max_episodes must be non-negative")
        if not self.learning_rate > 0:
            raise ValueError("learning_rate must be positive")
        if self.l2_coeff < 0:
            raise ValueError("l2_coeff must be non-negative")


_SEARCH_KEYS = {"playouts": int, "c_p": float, "expansion_threshold": int}
_TRAIN_KEYS = {
    "max_episodes": int,
    "replay_capacity": int,
    "batch_size": int,
    "learning_rate": float,
    "l2_coeff": float,
    "graphs_per_run": int,
    "checkpoint_every": int,
    "probe_every": int,
    "updates_per_episode": int,
}


def parse_config(text: str) -> TrainConfig:
    """Read ``key = value`` lines; unknown keys and bad values raise ConfigError."""
    train_kw, search_kw = {}, {}
    for lineno, raw in enumerate(text.splitlines(), 1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"line {lineno}", f"expected key=value, got {line!r}")
        key, val = (s.strip() for s in line.split("=", 1))
        kinds = _TRAIN_KEYS if key in _TRAIN_KEYS else _SEARCH_KEYS if key in _SEARCH_KEYS else None
        if kinds is None:
            raise ConfigError(key, "unknown key")
        try:
            parsed = kinds[key](val)
        except ValueError:
            raise ConfigError(key, f"cannot parse {val!r} as {kinds[key].__name__}") from None
        (train_kw if kinds is _TRAIN_KEYS else search_kw)[key] = parsed
    try:
        return TrainConfig(search=SearchConfig(**search_kw), **train_kw)
    except ValueError as exc:
        raise ConfigError("config", str(exc)) from None


def dump_config(config: TrainConfig) -> str:
    lines = [f"{f.name} = {getattr(config, f.name)}" for f in fields(config) if f.name != "search"]
    lines += [f"{f.name} = {getattr(config.search, f.name)}" for f in fields(config.search)]
    return "\n".join(lines) + "\n"


def episode_rewards(inst: TspInstance, tour: Sequence[int]) -> list[float]:
    """Length still to travel from each position of the tour, closing edge included.

    Position 0 gets the full tour length, the last position the closing edge.
    Plane units.
    """
    t = check_tour(inst, tour)
    f = tour_length(inst, t)
    rewards = []
    g = 0.0
    for k in range(inst.n):
        if k:
            g += inst.dist[t[k - 1], t[k]]
        rewards.append(f - g)
    return rewards


def run_episode(inst: TspInstance, params, config: TrainConfig, start: int = TRAIN_START_CITY) -> list[Experience]:
    """Play one episode with the search as policy and label the n - 1 moves."""
    tour = solve_instance(inst, params, start, config.search)
    rewards = episode_rewards(inst, tour)
    unit = inst.length_unit
    return [Experience(inst, tuple(tour[:k]), tour[k], rewards[k] / unit) for k in range(1, inst.n)]


def probe_batch(dataset: Sequence[TspInstance], size: int = 8) -> list[Experience]:
    """Fixed labelled batch (nearest-neighbour tours) used to track the loss during training."""
    out = []
    for inst in dataset[:size]:
        tour = nearest_neighbor(inst, TRAIN_START_CITY).tour
        rewards = episode_rewards(inst, tour)
        out += [Experience(inst, tuple(tour[:k]), tour[k], rewards[k] / inst.length_unit) for k in range(1, inst.n)]
    return out


def train(
    dataset: Sequence[TspInstance],
    config: TrainConfig,
    seed: int,
    checkpoint_path=None,
    on_record: Callable[[dict], None] | None = None,
    init: EmbeddingParams | None = None,
) -> EmbeddingParams:
    """Run the self-learning loop and return the final parameters.

    Each episode draws one graph uniformly from ``dataset``, plays it with the
    current parameters, pushes its experiences and, once the memory holds a
    full batch, takes a single Adam step on a uniformly sampled batch.
    """
    params, _ = train_with_state(dataset, config, seed, checkpoint_path, on_record, init)
    return params


def train_with_state(dataset, config: TrainConfig, seed: int, checkpoint_path=None, on_record=None, init=None):
    if len(dataset) == 0:
        raise InsufficientData("training needs at least one instance")
    rng = np.random.default_rng(seed)
    params = init.copy() if init is not None else init_params(seed)
    adam = AdamState.for_params(params)
    memory = ReplayMemory(config.replay_capacity)
    probe = probe_batch(dataset)

    def emit(record):
        if on_record is not None:
            on_record(record)

    emit({"episode": 0, "probe_loss": loss(params, probe, config.l2_coeff)})
    for ep in range(1, config.max_episodes + 1):
        inst = dataset[int(rng.integers(len(dataset)))]
        experiences = run_episode(inst, params, config)
        memory.push(experiences)
        last = experiences[-1]
        record = {"episode": ep, "instance": inst.name, "tour_length": tour_length(inst, last.visited + (last.action,))}
        if len(memory) >= config.batch_size:
            for _ in range(config.updates_per_episode):
                batch = memory.sample(config.batch_size, rng)
                batch_loss, g = loss_and_grad(params, batch, config.l2_coeff)
                params, adam = adam_step(params, adam, g, config.learning_rate)
            record["batch_loss"] = batch_loss
        if ep % config.probe_every == 0:
            record["probe_loss"] = loss(params, probe, config.l2_coeff)
        emit(record)
        if checkpoint_path is not None and ep % config.checkpoint_every == 0:
            save_checkpoint(checkpoint_path, params, adam)
        if ep % 50 == 0:
            log.info("episode %d: tour %.1f, probe loss %s", ep, record["tour_length"], record.get("probe_loss"))
    if checkpoint_path is not None:
        save_checkpoint(checkpoint_path, params, adam)
    return params, adam

