"""Shared replay memory, deferred (pending) transitions and memory tailoring."""

from __future__ import annotations

from dataclasses import dataclass
from typing import Optional

import numpy as np

from ..state import compute_reward


@dataclass
class PendingTransition:
    truck: int
    s: np.ndarray
    a: int
    decision_time: float
    target_site: int
    capacity: float
    corrupted: bool = False


class ReplayMemory:
    """Fixed-capacity ring buffer; the oldest transition is overwritten first.

    ``origin`` (truck id, decision time) is bookkeeping for tailoring and
    diagnostics only; it is never part of what the network sees.
    """

    def __init__(self, capacity: int, state_dim: int, n_actions: int):
        if capacity < 1:
            raise ValueError("memory capacity must be >= 1")
        self.capacity = int(capacity)
        self.s = np.zeros((capacity, state_dim))
        self.a = np.zeros(capacity, dtype=np.int64)
        self.r = np.zeros(capacity)
        self.s_next = np.zeros((capacity, state_dim))
        self.next_mask = np.zeros((capacity, n_actions), dtype=bool)
        self.origin = np.zeros((capacity, 2))
        self.size = 0
        self.head = 0  # next write slot
        self.pushed = 0

    def __len__(self):
        return self.size

    def push(self, s, a, r, s_next, next_mask, truck=-1, decision_time=np.nan):
        if not 0.0 <= r <= 1.0:
            raise ValueError(f"normalized reward must lie in [0, 1], got {r!r}")
        i = self.head
        self.s[i] = s
        self.a[i] = a
        self.r[i] = r
        self.s_next[i] = s_next
        self.next_mask[i] = next_mask
        self.origin[i] = (truck, decision_time)
        self.head = (i + 1) % self.capacity
        self.size = min(self.size + 1, self.capacity)
        self.pushed += 1

    def contains(self, truck: int, decision_time: float) -> bool:
        o = self.origin[: self.size]
        return bool(np.any((o[:, 0] == truck) & (o[:, 1] == decision_time)))

    def sample(self, n: int, rng: np.random.Generator) -> Optional[tuple]:
        """``n`` transitions uniformly without replacement, or None while warming up."""
        if self.size < n:
            return None
        idx = rng.choice(self.size, size=n, replace=False)
        return self.s[idx], self.a[idx], self.r[idx], self.s_next[idx], self.next_mask[idx]

    def state_dict(self) -> dict:
        # raw slot layout, so a restored memory samples exactly like the original
        n = self.size
        return {
            "s": self.s[:n], "a": self.a[:n], "r": self.r[:n],
            "s_next": self.s_next[:n], "next_mask": self.next_mask[:n],
            "origin": self.origin[:n], "head": np.array(self.head), "pushed": np.array(self.pushed),
        }

    def load_state_dict(self, d: dict) -> None:
        n = len(d["a"])
        if n > self.capacity:
            raise ValueError(f"saved memory holds {n} transitions, capacity is {self.capacity}")
        for name in ("s", "a", "r", "s_next", "next_mask", "origin"):
            getattr(self, name)[:n] = d[name]
        self.size = n
        self.head = int(d["head"])
        self.pushed = int(d["pushed"])


class PendingBook:
    """Open dispatch decisions awaiting their reward, one per truck at most."""

    def __init__(self, tailoring: bool = True, r_max: float = 400.0):
        self.tailoring = tailoring
        self.r_max = r_max
        self.pending = {}
        self.dropped_corrupted = 0
        self.dropped_episode_end = 0
        self.tailored = 0

    def open(self, truck: int, s, a: int, now: float, target_site: int, capacity: float) -> None:
        if truck in self.pending:
            raise RuntimeError(f"truck {truck} already has a pending transition")
        self.pending[truck] = PendingTransition(truck, np.array(s, dtype=np.float64), int(a), now, target_site, capacity)

    def resolve(self, truck: int, s_next, next_mask, now: float, memory: ReplayMemory) -> bool:
        """Close the truck's pending transition; True if it was stored."""
        p = self.pending.pop(truck, None)
        if p is None:
            return False
        if p.corrupted:
            self.dropped_corrupted += 1
            return False
        reward = compute_reward(p.capacity, p.decision_time, now, self.r_max)
        memory.push(p.s, p.a, reward.normalized, s_next, next_mask, truck, p.decision_time)
        return True

    def tailor(self, site: int, delayed_trucks) -> int:
        """Mark the delayed trucks' decisions to ``site`` as corrupted.

        A delayed truck is still en route to ``site``, so its decision cannot
        have reached memory yet; marking the pending record is sufficient.
        """
        if not self.tailoring:
            return 0
        n = 0
        for tid in delayed_trucks:
            p = self.pending.get(tid)
            if p is not None and p.target_site == site:
                if not p.corrupted:
                    p.corrupted = True
                    n += 1
        self.tailored += n
        return n

    def drop_all(self) -> int:
        n = len(self.pending)
        self.dropped_episode_end += n
        self.pending.clear()
        return n


__all__ = ["PendingBook", "PendingTransition", "ReplayMemory"]
