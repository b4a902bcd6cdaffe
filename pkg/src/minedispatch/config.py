"""Mine configuration: INI-style file with ``[mine]`` and ``[fleet.<name>]`` sections.

Example::

    [mine]
    schema_version = 1
    shovels = 3
    dumps = 3
    shift_minutes = 720
    stop = time            ; or "cycles"
    cycles_per_truck = 10  ; used when stop = cycles

    [fleet.small]
    count = 4
    capacity = 200
    ld_shape = 4
    ld_scale = 0.675
    ...                    ; sp_, hl_, de_, dm_ likewise

Presets shipped with the package (``desk``, ``full``) can be referenced by name
wherever a config path is accepted.
"""

from __future__ import annotations

import configparser
import io
import os
from dataclasses import dataclass, replace
from importlib import resources

import numpy as np

from .engine import ConfigError, CycleLimit, GammaDist, TimeLimit

SCHEMA_VERSION = 1
ACTIVITIES = ("LD", "SP", "HL", "DE", "DM")


@dataclass(frozen=True)
class FleetType:
    name: str
    capacity: float
    dists: dict  # activity code -> GammaDist

    def mean(self, activity: str) -> float:
        return self.dists[activity].mean


@dataclass(frozen=True)
class FleetSpec:
    fleet: FleetType
    count: int


@dataclass(frozen=True)
class MineConfig:
    n_shovels: int
    n_dumps: int
    fleets: tuple
    shift_minutes: float = 720.0
    stop_mode: str = "time"
    cycles_per_truck: int = 10
    servers_per_site: int = 1
    source: str = "<memory>"

    def __post_init__(self):
        problems = []
        if self.n_shovels < 1:
            problems.append(f"[mine] shovels must be >= 1, got {self.n_shovels}")
        if self.n_dumps < 1:
            problems.append(f"[mine] dumps must be >= 1, got {self.n_dumps}")
        if self.n_trucks < 1:
            problems.append(f"total truck count must be >= 1, got {self.n_trucks}")
        for spec in self.fleets:
            if spec.count < 0:
                problems.append(f"[fleet.{spec.fleet.name}] count must be >= 0")
            if not spec.fleet.capacity > 0:
                problems.append(f"[fleet.{spec.fleet.name}] capacity must be > 0")
        if self.stop_mode not in ("time", "cycles"):
            problems.append(f"[mine] stop must be 'time' or 'cycles', got {self.stop_mode!r}")
        if not self.shift_minutes > 0:
            problems.append("[mine] shift_minutes must be > 0")
        if self.cycles_per_truck < 1:
            problems.append("[mine] cycles_per_truck must be >= 1")
        if self.servers_per_site < 1:
            problems.append("[mine] servers_per_site must be >= 1")
        if problems:
            raise ConfigError(problems)

    @property
    def n_trucks(self) -> int:
        return sum(spec.count for spec in self.fleets)

    @property
    def n_sites(self) -> int:
        return self.n_shovels + self.n_dumps

    @property
    def state_dim(self) -> int:
        return 4 * self.n_sites + 1

    def stop_condition(self):
        if self.stop_mode == "cycles":
            return CycleLimit(self.cycles_per_truck)
        return TimeLimit(self.shift_minutes)

    def truck_fleets(self) -> list:
        """Fleet of each truck id; ids are assigned fleet by fleet in file order."""
        out = []
        for spec in self.fleets:
            out.extend([spec.fleet] * spec.count)
        return out

    def with_shift(self, minutes: float) -> "MineConfig":
        return replace(self, shift_minutes=float(minutes), stop_mode="time")

    def with_truck_count(self, n_trucks: int, seed: int) -> "MineConfig":
        """Fail or add trucks drawn at random from the fleets (seeded)."""
        if n_trucks < 1:
            raise ConfigError(f"truck count must be >= 1, got {n_trucks}")
        counts = [spec.count for spec in self.fleets]
        rng = np.random.Generator(np.random.PCG64(np.random.SeedSequence(int(seed), spawn_key=(7,))))
        while sum(counts) > n_trucks:
            # remove one truck chosen uniformly among those present
            pick = rng.choice(len(counts), p=np.asarray(counts, float) / sum(counts))
            counts[pick] -= 1
        while sum(counts) < n_trucks:
            counts[rng.integers(len(counts))] += 1
        fleets = tuple(FleetSpec(spec.fleet, c) for spec, c in zip(self.fleets, counts))
        return replace(self, fleets=fleets)

    def to_ini(self) -> str:
        cp = configparser.ConfigParser()
        cp["mine"] = {
            "schema_version": str(SCHEMA_VERSION),
            "shovels": str(self.n_shovels),
            "dumps": str(self.n_dumps),
            "shift_minutes": repr(float(self.shift_minutes)),
            "stop": self.stop_mode,
            "cycles_per_truck": str(self.cycles_per_truck),
            "servers_per_site": str(self.servers_per_site),
        }
        for spec in self.fleets:
            sec = {"count": str(spec.count), "capacity": repr(float(spec.fleet.capacity))}
            for act in ACTIVITIES:
                d = spec.fleet.dists[act]
                sec[f"{act.lower()}_shape"] = repr(float(d.shape))
                sec[f"{act.lower()}_scale"] = repr(float(d.scale))
            cp[f"fleet.{spec.fleet.name}"] = sec
        buf = io.StringIO()
        cp.write(buf)
        return buf.getvalue()


def _number(cp, section, key, problems, cast=float, default=None):
    if not cp.has_option(section, key):
        if default is not None:
            return default
        problems.append(f"[{section}] missing required key {key!r}")
        return None
    raw = cp.get(section, key)
    try:
        return cast(raw)
    except ValueError:
        problems.append(f"[{section}] {key} = {raw!r} is not a valid {cast.__name__}")
        return None


def parse_config(text: str, source: str = "<string>") -> MineConfig:
    cp = configparser.ConfigParser(inline_comment_prefixes=(";", "#"))
    try:
        cp.read_string(text, source=source)
    except configparser.Error as exc:
        # configparser messages already carry the line number
        raise ConfigError(f"{source}: {exc}") from exc

    problems = []
    if not cp.has_section("mine"):
        raise ConfigError(f"{source}: missing [mine] section")
    version = _number(cp, "mine", "schema_version", problems, int)
    if version is not None and version != SCHEMA_VERSION:
        problems.append(f"[mine] schema_version {version} unsupported (expected {SCHEMA_VERSION})")
    n_shovels = _number(cp, "mine", "shovels", problems, int)
    n_dumps = _number(cp, "mine", "dumps", problems, int)
    shift = _number(cp, "mine", "shift_minutes", problems, float, 720.0)
    stop = cp.get("mine", "stop", fallback="time").strip()
    cycles = _number(cp, "mine", "cycles_per_truck", problems, int, 10)
    servers = _number(cp, "mine", "servers_per_site", problems, int, 1)

    fleets = []
    fleet_sections = [s for s in cp.sections() if s.startswith("fleet.")]
    if not fleet_sections:
        problems.append("no [fleet.<name>] sections")
    for sec in fleet_sections:
        name = sec[len("fleet."):]
        count = _number(cp, sec, "count", problems, int)
        capacity = _number(cp, sec, "capacity", problems, float)
        dists = {}
        for act in ACTIVITIES:
            shape = _number(cp, sec, f"{act.lower()}_shape", problems)
            scale = _number(cp, sec, f"{act.lower()}_scale", problems)
            if shape is None or scale is None:
                continue
            try:
                dists[act] = GammaDist(shape, scale)
            except ConfigError as exc:
                problems.extend(f"[{sec}] {act}: {p}" for p in exc.problems)
        if count is None or capacity is None or len(dists) != len(ACTIVITIES):
            continue
        fleets.append(FleetSpec(FleetType(name, capacity, dists), count))

    if problems:
        raise ConfigError([f"{source}: {p}" for p in problems])
    try:
        return MineConfig(
            n_shovels=n_shovels,
            n_dumps=n_dumps,
            fleets=tuple(fleets),
            shift_minutes=shift,
            stop_mode=stop,
            cycles_per_truck=cycles,
            servers_per_site=servers,
            source=source,
        )
    except ConfigError as exc:
        raise ConfigError([f"{source}: {p}" for p in exc.problems]) from None


def preset_names() -> list:
    return sorted(
        p.name[:-4]
        for p in resources.files("minedispatch.presets").iterdir()
        if p.name.endswith(".ini") and not p.name.startswith("train_")
    )


def read_text(path_or_preset: str, prefix: str = "") -> tuple:
    """Return (text, source) for a file path or a shipped preset name."""
    if os.path.exists(path_or_preset):
        with open(path_or_preset, encoding="utf-8") as fh:
            return fh.read(), path_or_preset
    res = resources.files("minedispatch.presets").joinpath(f"{prefix}{path_or_preset}.ini")
    if res.is_file():
        return res.read_text(encoding="utf-8"), f"preset:{prefix}{path_or_preset}"
    raise ConfigError(f"config not found: {path_or_preset!r}")


def load_config(path_or_preset: str) -> MineConfig:
    text, source = read_text(path_or_preset)
    return parse_config(text, source)


def homogeneous_config(n_shovels=1, n_dumps=1, n_trucks=1, capacity=320.0, means=None,
                       shape=4.0, **kwargs) -> MineConfig:
    """Single-fleet config, handy for tests and small experiments."""
    means = means or {"LD": 3.0, "SP": 1.0, "HL": 12.0, "DE": 10.0, "DM": 2.0}
    dists = {a: GammaDist(shape, means[a] / shape) for a in ACTIVITIES}
    fleet = FleetType("haul", capacity, dists)
    return MineConfig(n_shovels, n_dumps, (FleetSpec(fleet, n_trucks),), **kwargs)


__all__ = [
    "ACTIVITIES",
    "FleetSpec",
    "FleetType",
    "MineConfig",
    "SCHEMA_VERSION",
    "homogeneous_config",
    "load_config",
    "parse_config",
    "preset_names",
    "read_text",
]
