"""Experience-sharing DQN training with optional memory tailoring.

Every truck feeds one replay memory and one network. A decision becomes a
transition only at the truck's next decision, when its reward is known;
decisions that a later dispatch cut in front of are discarded when tailoring
is on (turning it off gives the E-DQN ablation).
"""

from __future__ import annotations

import configparser
import json
import logging
import math
import os
from dataclasses import asdict, dataclass, fields

import numpy as np

from ..engine import EPISODE_STREAM, INIT_STREAM, REPLAY_STREAM, ConfigError, RandomStreams
from ..metrics import curve_csv
from ..mine import Dispatcher
from ..policies import decide_q
from ..runner import run_episode
from ..state import DEFAULT_R_MAX, build_state, feature_scale, valid_actions
from .memory import PendingBook, ReplayMemory
from .network import QNetwork, train_batch

log = logging.getLogger(__name__)


@dataclass(frozen=True)
class EpsilonSchedule:
    start: float = 0.8
    end: float = 0.01
    horizon: int = 1000
    mode: str = "linear"

    def __call__(self, iteration: int) -> float:
        if iteration < 0:
            raise ValueError("iteration must be >= 0")
        if self.horizon <= 0 or iteration >= self.horizon:
            return self.end
        frac = iteration / self.horizon
        if self.mode == "exponential":
            return max(self.end, self.start * (self.end / self.start) ** frac)
        return max(self.end, self.start - (self.start - self.end) * frac)


def epsilon(schedule: EpsilonSchedule, iteration: int) -> float:
    return schedule(iteration)


@dataclass(frozen=True)
class TrainConfig:
    gamma: float = 0.9
    batch_size: int = 1024
    batches_per_iteration: int = 100
    learning_rate: float = 1e-5
    memory_size: int = 100_000
    max_iterations: int = 10_000
    tailoring: bool = True
    hidden: tuple = (128, 128)
    r_max: float = DEFAULT_R_MAX
    error_clip: float = 1.0
    epsilon_start: float = 0.8
    epsilon_end: float = 0.01
    epsilon_horizon: int = 0  # 0 means max_iterations
    epsilon_mode: str = "linear"
    target_update: int = 0  # 0: snapshot every iteration; k: classic target net every k iterations
    checkpoint_every: int = 100

    def __post_init__(self):
        problems = []
        if not 0.0 < self.gamma < 1.0:
            problems.append(f"gamma must lie in (0, 1), got {self.gamma}")
        for name in ("batch_size", "batches_per_iteration", "memory_size", "max_iterations"):
            if getattr(self, name) < 1:
                problems.append(f"{name} must be >= 1")
        if not self.learning_rate > 0:
            problems.append("learning_rate must be > 0")
        if not self.error_clip > 0:
            problems.append("error_clip must be > 0")
        if not self.r_max > 0:
            problems.append("r_max must be > 0")
        if not 0.0 <= self.epsilon_end <= self.epsilon_start <= 1.0:
            problems.append("need 0 <= epsilon_end <= epsilon_start <= 1")
        if self.epsilon_mode not in ("linear", "exponential"):
            problems.append(f"epsilon_mode must be linear or exponential, got {self.epsilon_mode!r}")
        if any(h < 1 for h in self.hidden):
            problems.append("hidden sizes must be >= 1")
        if problems:
            raise ConfigError(problems)

    @property
    def schedule(self) -> EpsilonSchedule:
        horizon = self.epsilon_horizon or self.max_iterations
        return EpsilonSchedule(self.epsilon_start, self.epsilon_end, horizon, self.epsilon_mode)

    def to_ini(self) -> str:
        cp = configparser.ConfigParser()
        cp["train"] = {
            f.name: (",".join(map(str, getattr(self, f.name))) if f.name == "hidden" else str(getattr(self, f.name)))
            for f in fields(self)
        }
        from io import StringIO

        buf = StringIO()
        cp.write(buf)
        return buf.getvalue()


def parse_train_config(text: str, source: str = "<string>", **overrides) -> TrainConfig:
    cp = configparser.ConfigParser(inline_comment_prefixes=(";", "#"))
    try:
        cp.read_string(text, source=source)
    except configparser.Error as exc:
        raise ConfigError(f"{source}: {exc}") from exc
    if not cp.has_section("train"):
        raise ConfigError(f"{source}: missing [train] section")
    kwargs, problems = {}, []
    types = {f.name: f.type for f in fields(TrainConfig)}
    for key, raw in cp.items("train"):
        if key not in types:
            problems.append(f"{source}: [train] unknown key {key!r}")
            continue
        default = getattr(TrainConfig, key)
        try:
            if key == "hidden":
                kwargs[key] = tuple(int(x) for x in raw.split(",") if x.strip())
            elif isinstance(default, bool):
                kwargs[key] = cp.getboolean("train", key)
            elif isinstance(default, int):
                kwargs[key] = int(raw)
            elif isinstance(default, float):
                kwargs[key] = float(raw)
            else:
                kwargs[key] = raw.strip()
        except ValueError:
            problems.append(f"{source}: [train] {key} = {raw!r} is not valid")
    if problems:
        raise ConfigError(problems)
    kwargs.update({k: v for k, v in overrides.items() if v is not None})
    try:
        return TrainConfig(**kwargs)
    except ConfigError as exc:
        raise ConfigError([f"{source}: {p}" for p in exc.problems]) from None


class ExperienceCollector(Dispatcher):
    """Epsilon-greedy dispatcher that turns decisions into shared transitions."""

    name = "em-dqn"

    def __init__(self, net: QNetwork, eps: float, memory: ReplayMemory, pendings: PendingBook):
        self.net = net
        self.eps = eps
        self.memory = memory
        self.pendings = pendings
        self.stored = 0

    def decide(self, mine, truck):
        request = mine.request_dispatch(truck)
        s = build_state(truck, mine)
        if self.pendings.resolve(truck.id, s, valid_actions(truck, mine), mine.now, self.memory):
            self.stored += 1
        action = decide_q(request, mine, self.net, self.eps, state=s)
        self.pendings.open(truck.id, s, action, mine.now, action, truck.capacity)
        return action

    def after_dispatch(self, mine, truck, action, delayed):
        if delayed:
            self.pendings.tailor(action, delayed)

    def on_retire(self, mine, truck):
        if self.pendings.pending.pop(truck.id, None) is not None:
            self.pendings.dropped_episode_end += 1


class Trainer:
    def __init__(self, mine_config, train_config: TrainConfig, seed: int):
        self.mine_config = mine_config
        self.cfg = train_config
        self.seed = int(seed)
        self.streams = RandomStreams(seed)
        sizes = [mine_config.state_dim, *train_config.hidden, mine_config.n_sites]
        self.net = QNetwork(sizes, rng=self.streams.stream(INIT_STREAM), lr=train_config.learning_rate,
                            input_scale=feature_scale(mine_config), error_clip=train_config.error_clip)
        self.target = self.net.copy() if train_config.target_update > 0 else None
        self.memory = ReplayMemory(train_config.memory_size, mine_config.state_dim, mine_config.n_sites)
        self.replay_rng = self.streams.stream(REPLAY_STREAM)
        self.curve = []
        self.iteration = 0  # next episode index

    def episode_seed(self, iteration: int) -> int:
        return self.streams.derive_seed(EPISODE_STREAM, iteration)

    def run_iteration(self) -> dict:
        it = self.iteration
        cfg = self.cfg
        eps = cfg.schedule(it)
        pendings = PendingBook(tailoring=cfg.tailoring, r_max=cfg.r_max)
        collector = ExperienceCollector(self.net, eps, self.memory, pendings)
        mine, metrics = run_episode(self.mine_config, collector, self.episode_seed(it), episode=it)
        pendings.drop_all()

        if cfg.target_update > 0:
            if it % cfg.target_update == 0:
                self.target = self.net.copy()
            target = self.target
        else:
            target = self.net.copy()  # frozen for every batch of this iteration
        losses = []
        for _ in range(cfg.batches_per_iteration):
            batch = self.memory.sample(cfg.batch_size, self.replay_rng)
            if batch is None:
                break
            losses.append(train_batch(self.net, batch, cfg.gamma, target))

        row = {
            "episode": it,
            "production_tons": metrics.production_tons,
            "mean_cycle_min": metrics.mean_cycle_min,
            "matching_factor": metrics.matching_factor,
            "loss": float(np.mean(losses)) if losses else None,
            "epsilon": eps,
            "memory": len(self.memory),
            "stored": collector.stored,
            "corrupted_dropped": pendings.dropped_corrupted,
        }
        self.curve.append(row)
        self.iteration += 1
        return row

    def train(self, iterations: int = None, checkpoint_dir: str = None, progress=None) -> list:
        stop = self.cfg.max_iterations if iterations is None else self.iteration + iterations
        while self.iteration < stop:
            row = self.run_iteration()
            if progress is not None:
                progress(row)
            if checkpoint_dir and self.cfg.checkpoint_every and self.iteration % self.cfg.checkpoint_every == 0:
                self.save_checkpoint(checkpoint_dir)
        if checkpoint_dir:
            self.save_checkpoint(checkpoint_dir)
        return self.curve

    # -- checkpoints -----------------------------------------------------

    def save_checkpoint(self, directory: str) -> None:
        os.makedirs(directory, exist_ok=True)
        self.net.save(os.path.join(directory, "model.emdq"))
        arrays = {f"param{i}": p for i, p in enumerate(self.net.params)}
        arrays["input_scale"] = self.net.input_scale
        arrays.update({f"adam_m{i}": m for i, m in enumerate(self.net.adam.m)})
        arrays.update({f"adam_v{i}": v for i, v in enumerate(self.net.adam.v)})
        arrays.update({f"mem_{k}": v for k, v in self.memory.state_dict().items()})
        if self.target is not None:
            for i, p in enumerate(self.target.params):
                arrays[f"target{i}"] = p
        tmp = os.path.join(directory, "state.tmp.npz")
        np.savez(tmp, **arrays)
        os.replace(tmp, os.path.join(directory, "state.npz"))
        meta = {
            "iteration": self.iteration,
            "adam_t": self.net.adam.t,
            "replay_rng": self.replay_rng.bit_generator.state,
            "seed": self.seed,
            "train_config": {k: list(v) if isinstance(v, tuple) else v for k, v in asdict(self.cfg).items()},
        }
        with open(os.path.join(directory, "checkpoint.json"), "w", encoding="utf-8") as fh:
            json.dump(meta, fh, indent=2, sort_keys=True, default=int)
        with open(os.path.join(directory, "curve.csv"), "w", encoding="utf-8", newline="") as fh:
            fh.write(curve_csv(self.curve))

    @classmethod
    def resume(cls, directory: str, mine_config, train_config: TrainConfig = None) -> "Trainer":
        with open(os.path.join(directory, "checkpoint.json"), encoding="utf-8") as fh:
            meta = json.load(fh)
        if train_config is None:
            d = dict(meta["train_config"])
            d["hidden"] = tuple(d["hidden"])
            train_config = TrainConfig(**d)
        trainer = cls(mine_config, train_config, meta["seed"])
        net = QNetwork.load(os.path.join(directory, "model.emdq"), lr=train_config.learning_rate)
        net.error_clip = train_config.error_clip
        if net.sizes != trainer.net.sizes:
            raise ConfigError(f"checkpoint network {net.sizes} does not match config {trainer.net.sizes}")
        state = np.load(os.path.join(directory, "state.npz"))
        # the model file has the input scale folded in; restore the raw parameters
        net.input_scale = state["input_scale"]
        for i, p in enumerate(net.params):
            p[...] = state[f"param{i}"]
        for i in range(len(net.params)):
            net.adam.m[i][...] = state[f"adam_m{i}"]
            net.adam.v[i][...] = state[f"adam_v{i}"]
        net.adam.t = meta["adam_t"]
        trainer.net = net
        if train_config.target_update > 0:
            trainer.target = net.copy()
            for i, p in enumerate(trainer.target.params):
                p[...] = state[f"target{i}"]
        trainer.memory.load_state_dict({k[4:]: state[k] for k in state.files if k.startswith("mem_")})
        trainer.replay_rng.bit_generator.state = meta["replay_rng"]
        trainer.iteration = meta["iteration"]
        trainer.curve = _read_curve(os.path.join(directory, "curve.csv"))
        return trainer


def _read_curve(path: str) -> list:
    import csv

    rows = []
    with open(path, encoding="utf-8") as fh:
        for raw in csv.DictReader(fh):
            row = {}
            for k, v in raw.items():
                if v == "":
                    row[k] = None
                elif k in ("episode", "memory", "stored", "corrupted_dropped"):
                    row[k] = int(v)
                else:
                    row[k] = float(v)
            rows.append(row)
    return rows


def train(mine_config, train_config: TrainConfig, seed: int, checkpoint_dir: str = None, progress=None):
    """Train from scratch; returns ``(network, learning curve rows)``."""
    trainer = Trainer(mine_config, train_config, seed)
    curve = trainer.train(checkpoint_dir=checkpoint_dir, progress=progress)
    for row in curve:
        if row["loss"] is not None and not math.isfinite(row["loss"]):
            raise FloatingPointError("non-finite loss in learning curve")
    return trainer.net, curve


__all__ = [
    "EpsilonSchedule",
    "ExperienceCollector",
    "TrainConfig",
    "Trainer",
    "epsilon",
    "parse_train_config",
    "train",
]
