"""Dispatch policies: random, shortest queue, smart shortest queue, Q-network.

Ties always go to the lowest site index.
"""

from __future__ import annotations

import numpy as np

from .engine import ConfigError
from .mine import DispatchRequest, Dispatcher, Mine, SHOVEL
from .state import action_mask, build_state, site_features


def _candidates(mine: Mine, kind: str) -> range:
    return range(mine.n_shovels) if kind == SHOVEL else range(mine.n_shovels, mine.n_sites)


def decide_sq(request: DispatchRequest, mine: Mine) -> int:
    """Fewest trucks at or heading to the site (all of EQ counts)."""
    best, best_count = -1, None
    for k in _candidates(mine, request.kind):
        site = mine.sites[k]
        count = len(site.aq) + len(site.eq)
        if best_count is None or count < best_count:
            best, best_count = k, count
    return best


def decide_ssq(request: DispatchRequest, mine: Mine) -> int:
    """Smallest expected wait time WT."""
    truck = mine.trucks[request.truck]
    best, best_wt = -1, None
    for k in _candidates(mine, request.kind):
        wt = site_features(k, truck, mine).wait_time
        if best_wt is None or wt < best_wt:
            best, best_wt = k, wt
    return best


def masked_argmax(q: np.ndarray, mask: np.ndarray) -> int:
    return int(np.argmax(np.where(mask, q, -np.inf)))


def decide_q(request: DispatchRequest, mine: Mine, net, epsilon: float = 0.0, rng=None, state=None) -> int:
    mask = action_mask(mine.n_shovels, mine.n_dumps, request.kind)
    if epsilon > 0.0:
        rng = rng if rng is not None else mine.streams.explore
        if rng.random() < epsilon:
            valid = np.flatnonzero(mask)
            return int(valid[rng.integers(len(valid))])
    if state is None:
        state = build_state(mine.trucks[request.truck], mine)
    return masked_argmax(net.forward1(state), mask)


class RandomPolicy(Dispatcher):
    name = "random"

    def decide(self, mine, truck):
        kind = mine.required_kind(truck)
        valid = list(_candidates(mine, kind))
        return valid[int(mine.streams.explore.integers(len(valid)))]


class ShortestQueue(Dispatcher):
    name = "sq"

    def decide(self, mine, truck):
        return decide_sq(mine.request_dispatch(truck), mine)


class SmartShortestQueue(Dispatcher):
    name = "ssq"

    def decide(self, mine, truck):
        return decide_ssq(mine.request_dispatch(truck), mine)


class QPolicy(Dispatcher):
    """Greedy (epsilon=0) or epsilon-greedy over a Q-network."""

    def __init__(self, net, epsilon: float = 0.0, name: str = "dqn"):
        self.net = net
        self.epsilon = epsilon
        self.name = name

    def decide(self, mine, truck):
        return decide_q(mine.request_dispatch(truck), mine, self.net, self.epsilon)


def check_model_dims(net, n_shovels: int, n_dumps: int) -> None:
    want_in = 4 * (n_shovels + n_dumps) + 1
    if net.sizes[0] != want_in or net.sizes[-1] != n_shovels + n_dumps:
        raise ConfigError(
            f"model expects input {net.sizes[0]} / {net.sizes[-1]} actions, "
            f"mine with N={n_shovels}, M={n_dumps} needs {want_in} / {n_shovels + n_dumps}"
        )


def make_policy(spec: str, config=None) -> Dispatcher:
    """Build a policy from ``random``, ``sq``, ``ssq`` or ``dqn:<model-path>``."""
    key = spec.strip()
    if key == "random":
        return RandomPolicy()
    if key == "sq":
        return ShortestQueue()
    if key == "ssq":
        return SmartShortestQueue()
    if key.startswith("dqn:") and len(key) > 4:
        from .rl.network import QNetwork

        net = QNetwork.load(key[4:])
        if config is not None:
            check_model_dims(net, config.n_shovels, config.n_dumps)
        return QPolicy(net, 0.0, name="dqn")
    raise ConfigError(f"unknown policy {spec!r}; use random, sq, ssq or dqn:<model-path>")


__all__ = [
    "QPolicy",
    "RandomPolicy",
    "ShortestQueue",
    "SmartShortestQueue",
    "check_model_dims",
    "decide_q",
    "decide_sq",
    "decide_ssq",
    "make_policy",
    "masked_argmax",
]
