"""Agent-count-independent observation, action mask and per-truck reward.

The observation for a truck needing a destination is

    [capacity, (WT, TC_w, AT, TC_d) for each shovel, ... for each dump]

with the blocks of the kind the truck cannot go to set to zero. All activity
times are fleet means; sampled realisations are never visible here.
"""

from __future__ import annotations

from typing import NamedTuple

import numpy as np

from .kernels import site_block
from .mine import DUMP, SHOVEL, Mine, Truck

FEATURES_PER_SITE = 4
DEFAULT_R_MAX = 400.0


class SiteFeatures(NamedTuple):
    wait_time: float  # WT, minutes
    waiting_capacity: float  # TC_w, tons ahead of the truck
    delayed_activity: float  # AT, minutes of service the truck would push back
    delayed_capacity: float  # TC_d, tons the truck would push back


class Reward(NamedTuple):
    raw: float
    normalized: float


def state_dim(n_shovels: int, n_dumps: int) -> int:
    return FEATURES_PER_SITE * (n_shovels + n_dumps) + 1


def site_features(site_id: int, truck: Truck, mine: Mine) -> SiteFeatures:
    site = mine.sites[site_id]
    if site.kind == SHOVEL:
        work, act = mine.shovel_work, mine.shovel_act
    else:
        work, act = mine.dump_work, mine.dump_act
    eta_t = mine.hypothetical_eta(truck.id, site.kind)
    return SiteFeatures(*site_block(work, act, mine.cap, mine.eta, site.aq, site.eq, truck.id, eta_t))


def build_state(truck: Truck, mine: Mine) -> np.ndarray:
    kind = mine.required_kind(truck)
    n = mine.n_shovels
    s = np.zeros(state_dim(n, mine.n_dumps))
    s[0] = truck.capacity
    sites = range(n) if kind == SHOVEL else range(n, mine.n_sites)
    for k in sites:
        off = 1 + FEATURES_PER_SITE * k
        s[off:off + FEATURES_PER_SITE] = site_features(k, truck, mine)
    return s


def feature_scale(config) -> np.ndarray:
    """Fixed per-feature multipliers bringing observations to order one.

    Tons are divided by the largest fleet capacity and minutes by the longest
    fleet mean cycle. Depends on fleet definitions only, not on truck counts.
    """
    fleets = [spec.fleet for spec in config.fleets]
    tons = max(f.capacity for f in fleets)
    minutes = max(sum(f.mean(a) for a in ("LD", "SP", "HL", "DE", "DM")) for f in fleets)
    block = [1.0 / minutes, 1.0 / tons, 1.0 / minutes, 1.0 / tons]
    return np.array([1.0 / tons] + block * config.n_sites)


def action_mask(n_shovels: int, n_dumps: int, kind: str) -> np.ndarray:
    mask = np.zeros(n_shovels + n_dumps, dtype=bool)
    if kind == SHOVEL:
        mask[:n_shovels] = True
    elif kind == DUMP:
        mask[n_shovels:] = True
    else:
        raise ValueError(f"unknown destination kind {kind!r}")
    return mask


def valid_actions(truck: Truck, mine: Mine) -> np.ndarray:
    return action_mask(mine.n_shovels, mine.n_dumps, mine.required_kind(truck))


def compute_reward(capacity: float, t_prev: float, t_now: float, r_max: float = DEFAULT_R_MAX) -> Reward:
    dt = t_now - t_prev
    if not dt > 0:
        raise ValueError(f"reward needs t_now > t_prev, got {t_prev!r} -> {t_now!r}")
    raw = capacity / dt
    return Reward(raw, min(raw / r_max, 1.0))


__all__ = [
    "DEFAULT_R_MAX",
    "FEATURES_PER_SITE",
    "Reward",
    "SiteFeatures",
    "action_mask",
    "build_state",
    "compute_reward",
    "feature_scale",
    "site_features",
    "state_dim",
    "valid_actions",
]
