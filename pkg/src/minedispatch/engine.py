"""Discrete-event kernel: event queue, clock, seeded streams, Gamma durations."""

from __future__ import annotations

import enum
import heapq
import math
from dataclasses import dataclass, field
from typing import Callable, Optional

import numpy as np

__all__ = [
    "EventKind",
    "Event",
    "EventQueue",
    "SchedulingError",
    "ConfigError",
    "GammaDist",
    "RandomStreams",
    "TimeLimit",
    "CycleLimit",
    "RunResult",
    "Engine",
    "sample_gamma",
]


class SchedulingError(RuntimeError):
    """An event was scheduled before the current simulation time."""


class ConfigError(ValueError):
    """Invalid model or run configuration. Carries every violation found."""

    def __init__(self, problems):
        if isinstance(problems, str):
            problems = [problems]
        self.problems = list(problems)
        super().__init__("; ".join(self.problems))


class EventKind(enum.Enum):
    TRUCK_ARRIVAL = "TruckArrival"
    SERVICE_START = "ServiceStart"
    SERVICE_COMPLETE = "ServiceComplete"
    SHIFT_END = "ShiftEnd"


@dataclass(frozen=True)
class Event:
    fire_time: float
    sequence_no: int
    kind: EventKind
    truck: Optional[int] = None
    site: Optional[int] = None

    def sort_key(self):
        return (self.fire_time, self.sequence_no)


class EventQueue:
    """Time-ordered pending set; equal times pop in insertion order."""

    def __init__(self):
        self._heap = []
        self._seq = 0
        self.now = 0.0

    def __len__(self):
        return len(self._heap)

    def schedule(self, kind: EventKind, at: float, truck=None, site=None) -> Event:
        if at < self.now:
            raise SchedulingError(
                f"cannot schedule {kind.value} at t={at!r}: clock is at {self.now!r}"
            )
        if math.isnan(at):
            raise SchedulingError(f"cannot schedule {kind.value} at NaN time")
        event = Event(float(at), self._seq, kind, truck, site)
        self._seq += 1
        heapq.heappush(self._heap, (event.fire_time, event.sequence_no, event))
        return event

    def peek_time(self) -> float:
        return self._heap[0][0] if self._heap else math.inf

    def pop(self) -> Event:
        _, _, event = heapq.heappop(self._heap)
        # clock never moves backwards
        assert event.fire_time >= self.now
        self.now = event.fire_time
        return event


@dataclass(frozen=True)
class GammaDist:
    """Gamma(shape, scale); durations in minutes."""

    shape: float
    scale: float

    def __post_init__(self):
        problems = []
        if not (self.shape > 0 and math.isfinite(self.shape)):
            problems.append(f"gamma shape must be > 0, got {self.shape!r}")
        if not (self.scale > 0 and math.isfinite(self.scale)):
            problems.append(f"gamma scale must be > 0, got {self.scale!r}")
        if problems:
            raise ConfigError(problems)

    @property
    def mean(self) -> float:
        return self.shape * self.scale

    @property
    def variance(self) -> float:
        return self.shape * self.scale**2

    def scaled(self, factor: float) -> "GammaDist":
        return GammaDist(self.shape, self.scale * factor)


def sample_gamma(dist: GammaDist, rng: np.random.Generator) -> float:
    return float(rng.gamma(dist.shape, dist.scale))


# fixed stream keys; trucks live above TRUCK_BASE so fleet size never shifts them
EXPLORE_STREAM = 0
REPLAY_STREAM = 1
FLEET_STREAM = 2
INIT_STREAM = 3
EPISODE_STREAM = 4
TRUCK_BASE = 1000


class RandomStreams:
    """Independent generators derived from one master seed by stream id."""

    def __init__(self, seed: int):
        self.seed = int(seed)
        self._cache = {}

    def stream(self, key: int) -> np.random.Generator:
        gen = self._cache.get(key)
        if gen is None:
            ss = np.random.SeedSequence(self.seed, spawn_key=(int(key),))
            gen = np.random.Generator(np.random.PCG64(ss))
            self._cache[key] = gen
        return gen

    def truck(self, truck_id: int) -> np.random.Generator:
        return self.stream(TRUCK_BASE + truck_id)

    @property
    def explore(self) -> np.random.Generator:
        return self.stream(EXPLORE_STREAM)

    def derive_seed(self, key: int, index: int) -> int:
        ss = np.random.SeedSequence(self.seed, spawn_key=(int(key), int(index)))
        return int(ss.generate_state(1, np.uint64)[0] >> np.uint64(1))


@dataclass(frozen=True)
class TimeLimit:
    minutes: float

    @property
    def horizon(self) -> float:
        return float(self.minutes)


@dataclass(frozen=True)
class CycleLimit:
    cycles: int

    @property
    def horizon(self) -> float:
        return math.inf


@dataclass
class RunResult:
    processed: int = 0
    starved: bool = False
    end_time: float = 0.0
    trace: list = field(default_factory=list)


class Engine:
    """Single-threaded event loop.

    ``handle`` is called for every event in time order. ``done`` is polled
    after each event so that cycle-limited episodes can end early.
    """

    def __init__(self, keep_trace: bool = True):
        self.queue = EventQueue()
        self.keep_trace = keep_trace
        self.trace = []

    @property
    def now(self) -> float:
        return self.queue.now

    def schedule(self, kind, at, truck=None, site=None) -> Event:
        return self.queue.schedule(kind, at, truck, site)

    def log(self, kind: str, truck=None, site=None, time=None):
        if self.keep_trace:
            self.trace.append((self.now if time is None else time, kind, truck, site))

    def run_until(
        self,
        stop,
        handle: Callable[[Event], None],
        done: Optional[Callable[[], bool]] = None,
    ) -> RunResult:
        result = RunResult()
        horizon = stop.horizon
        queue = self.queue
        while True:
            if done is not None and done():
                break
            if not len(queue):
                result.starved = True
                break
            if queue.peek_time() > horizon:
                break
            event = queue.pop()
            if self.keep_trace:
                self.trace.append((event.fire_time, event.kind.value, event.truck, event.site))
            handle(event)
            result.processed += 1
        if isinstance(stop, TimeLimit) and not result.starved:
            queue.now = max(queue.now, horizon)
            self.log(EventKind.SHIFT_END.value)
        result.end_time = queue.now
        result.trace = self.trace
        return result
