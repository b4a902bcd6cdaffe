"""Shift metrics (production, cycle time, matching factor) and report files.

CSV column order::

    episode, seed, policy, trucks, production_tons, mean_cycle_min,
    matching_factor, cycles_<fleet>..., elapsed_min, production_rate_tph

JSON layout::

    {"schema_version": 1, "episodes": [{...one object per CSV row...,
      "fleet_cycles": {...}, "site_queue_minutes": [...], "flags": [...]}]}

Floats are written with ``repr`` so both formats round-trip exactly.
"""

from __future__ import annotations

import csv
import io
import json
import os
from dataclasses import dataclass, field
from typing import Optional

REPORT_SCHEMA_VERSION = 1


@dataclass
class EpisodeTrace:
    deliveries: list  # (time, truck id, capacity), in time order
    truck_fleet: list  # fleet name per truck id
    fleet_loading: dict  # fleet name -> mean loading time
    n_shovels: int
    elapsed: float
    site_queue_minutes: list = field(default_factory=list)


def trace_from_mine(mine) -> EpisodeTrace:
    fleets = {}
    for t in mine.trucks:
        fleets.setdefault(t.fleet.name, t.fleet.mean("LD"))
    return EpisodeTrace(
        deliveries=list(mine.deliveries),
        truck_fleet=[t.fleet.name for t in mine.trucks],
        fleet_loading=fleets,
        n_shovels=mine.n_shovels,
        elapsed=mine.now,
        site_queue_minutes=[s.queue_time for s in mine.sites],
    )


def production_level(trace: EpisodeTrace) -> float:
    return float(sum(cap for _, _, cap in trace.deliveries))


def cycle_durations(trace: EpisodeTrace) -> dict:
    """truck id -> list of cycle durations; a cycle ends at a dump completion."""
    last = {}
    out = {}
    for time, truck, _ in trace.deliveries:
        out.setdefault(truck, []).append(time - last.get(truck, 0.0))
        last[truck] = time
    return out


def mean_cycle_time(trace: EpisodeTrace) -> Optional[float]:
    durations = [d for ds in cycle_durations(trace).values() for d in ds]
    if not durations:
        return None
    return sum(durations) / len(durations)


def matching_factor_from(n_trucks: int, n_shovels: int, fleets) -> Optional[float]:
    """``fleets``: iterable of (mean loading time, trucks in fleet, average cycle time)."""
    num = den = 0.0
    for loading, count, cycle in fleets:
        num += loading * count
        den += cycle * count
    if den <= 0:
        return None
    return (n_trucks / n_shovels) * num / den


def matching_factor(trace: EpisodeTrace) -> tuple:
    """(MF or None, names of fleets excluded for having no completed cycle)."""
    per_fleet = {}
    for truck, ds in cycle_durations(trace).items():
        per_fleet.setdefault(trace.truck_fleet[truck], []).extend(ds)
    counts = {}
    for name in trace.truck_fleet:
        counts[name] = counts.get(name, 0) + 1
    terms, excluded = [], []
    for name, loading in trace.fleet_loading.items():
        ds = per_fleet.get(name)
        if not ds:
            excluded.append(name)
            continue
        terms.append((loading, counts[name], sum(ds) / len(ds)))
    return matching_factor_from(len(trace.truck_fleet), trace.n_shovels, terms), excluded


def trucking_label(mf: Optional[float]) -> str:
    if mf is None:
        return "unknown"
    if mf < 1.0:
        return "under-trucked"
    if mf > 1.0:
        return "over-trucked"
    return "matched"


@dataclass
class ShiftMetrics:
    episode: int
    seed: int
    policy: str
    trucks: int
    production_tons: float
    mean_cycle_min: Optional[float]
    matching_factor: Optional[float]
    fleet_cycles: dict
    elapsed_min: float
    production_rate_tph: float
    site_queue_minutes: list = field(default_factory=list)
    flags: list = field(default_factory=list)

    @property
    def label(self) -> str:
        return trucking_label(self.matching_factor)


def shift_metrics(trace: EpisodeTrace, episode: int = 0, seed: int = 0, policy: str = "") -> ShiftMetrics:
    mf, excluded = matching_factor(trace)
    fleet_cycles = {name: 0 for name in trace.fleet_loading}
    for _, truck, _ in trace.deliveries:
        fleet_cycles[trace.truck_fleet[truck]] += 1
    production = production_level(trace)
    rate = 60.0 * production / trace.elapsed if trace.elapsed > 0 else 0.0
    flags = [f"no-cycles:{name}" for name in excluded]
    return ShiftMetrics(
        episode=episode,
        seed=seed,
        policy=policy,
        trucks=len(trace.truck_fleet),
        production_tons=production,
        mean_cycle_min=mean_cycle_time(trace),
        matching_factor=mf,
        fleet_cycles=fleet_cycles,
        elapsed_min=trace.elapsed,
        production_rate_tph=rate,
        site_queue_minutes=list(trace.site_queue_minutes),
        flags=flags,
    )


# -- report files -----------------------------------------------------------

BASE_COLUMNS = ["episode", "seed", "policy", "trucks", "production_tons", "mean_cycle_min", "matching_factor"]
TAIL_COLUMNS = ["elapsed_min", "production_rate_tph"]


def _cell(value) -> str:
    if value is None:
        return ""
    if isinstance(value, float):
        return repr(value)
    return str(value)


def _fleet_names(metrics) -> list:
    names = []
    for m in metrics:
        for name in m.fleet_cycles:
            if name not in names:
                names.append(name)
    return names


def metrics_row(m: ShiftMetrics, fleets) -> dict:
    row = {c: getattr(m, c) for c in BASE_COLUMNS}
    for name in fleets:
        row[f"cycles_{name}"] = m.fleet_cycles.get(name, 0)
    for c in TAIL_COLUMNS:
        row[c] = getattr(m, c)
    return row


def to_csv(metrics, extra_columns=()) -> str:
    """``extra_columns``: (name, list of values) pairs appended per row."""
    metrics = list(metrics)
    fleets = _fleet_names(metrics)
    header = BASE_COLUMNS + [f"cycles_{n}" for n in fleets] + TAIL_COLUMNS + [c for c, _ in extra_columns]
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(header)
    for i, m in enumerate(metrics):
        row = metrics_row(m, fleets)
        cells = [_cell(row[c]) for c in header if c in row]
        cells += [_cell(values[i]) for _, values in extra_columns]
        writer.writerow(cells)
    return buf.getvalue()


def to_json(metrics) -> str:
    episodes = []
    for m in metrics:
        d = {c: getattr(m, c) for c in BASE_COLUMNS + TAIL_COLUMNS}
        d["fleet_cycles"] = dict(m.fleet_cycles)
        d["site_queue_minutes"] = list(m.site_queue_minutes)
        d["flags"] = list(m.flags)
        d["label"] = m.label
        episodes.append(d)
    return json.dumps({"schema_version": REPORT_SCHEMA_VERSION, "episodes": episodes}, indent=2, sort_keys=True) + "\n"


def _write(path, text: str) -> None:
    try:
        with open(path, "w", encoding="utf-8", newline="") as fh:
            fh.write(text)
    except OSError as exc:
        raise OSError(f"cannot write report to {os.fspath(path)!r}: {exc.strerror}") from exc


def write_report(metrics, fmt: str, path) -> list:
    """Write ``metrics`` as ``csv``, ``json`` or ``both`` (path is used as the stem for both)."""
    metrics = list(metrics)
    if not metrics:
        raise ValueError("write_report needs at least one episode")
    path = os.fspath(path)
    written = []
    if fmt in ("csv", "both"):
        target = path if fmt == "csv" else os.path.splitext(path)[0] + ".csv"
        _write(target, to_csv(metrics))
        written.append(target)
    if fmt in ("json", "both"):
        target = path if fmt == "json" else os.path.splitext(path)[0] + ".json"
        _write(target, to_json(metrics))
        written.append(target)
    if not written:
        raise ValueError(f"unknown report format {fmt!r}")
    return written


def read_json_report(path) -> list:
    with open(path, encoding="utf-8") as fh:
        data = json.load(fh)
    if data.get("schema_version") != REPORT_SCHEMA_VERSION:
        raise ValueError(f"unsupported report schema {data.get('schema_version')!r}")
    return data["episodes"]


CURVE_COLUMNS = ["episode", "production_tons", "mean_cycle_min", "matching_factor", "loss", "epsilon",
                 "memory", "stored", "corrupted_dropped"]


def curve_csv(rows) -> str:
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(CURVE_COLUMNS)
    for row in rows:
        writer.writerow([_cell(row.get(c)) for c in CURVE_COLUMNS])
    return buf.getvalue()


__all__ = [
    "CURVE_COLUMNS",
    "EpisodeTrace",
    "REPORT_SCHEMA_VERSION",
    "ShiftMetrics",
    "curve_csv",
    "cycle_durations",
    "matching_factor",
    "matching_factor_from",
    "mean_cycle_time",
    "production_level",
    "read_json_report",
    "shift_metrics",
    "to_csv",
    "to_json",
    "trace_from_mine",
    "trucking_label",
    "write_report",
]
