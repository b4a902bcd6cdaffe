"""Run single episodes and collect their metrics."""

from __future__ import annotations

from .metrics import shift_metrics, trace_from_mine
from .mine import Mine


def run_episode(config, dispatcher, seed: int, stop=None, keep_trace: bool = False, episode: int = 0,
                policy_name: str = None):
    """Simulate one episode; returns ``(mine, ShiftMetrics)``."""
    mine = Mine(config, seed, keep_trace=keep_trace)
    mine.run(dispatcher, stop)
    name = policy_name if policy_name is not None else getattr(dispatcher, "name", type(dispatcher).__name__)
    return mine, shift_metrics(trace_from_mine(mine), episode=episode, seed=seed, policy=name)


def format_trace(mine) -> str:
    """Event log as text, one ``time kind truck site`` line per record."""
    lines = []
    for time, kind, truck, site in mine.trace:
        lines.append(f"{time!r}\t{kind}\t{'' if truck is None else truck}\t{'' if site is None else site}")
    return "\n".join(lines) + "\n"
