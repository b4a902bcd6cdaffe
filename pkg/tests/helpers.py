"""Shared builders and episode invariant checks for the test suite."""

import numpy as np

from minedispatch.config import FleetSpec, FleetType, MineConfig
from minedispatch.engine import CycleLimit, GammaDist
from minedispatch.mine import Mine
from minedispatch.rl.memory import PendingBook, ReplayMemory
from minedispatch.rl.network import QNetwork
from minedispatch.rl.train import ExperienceCollector
from minedispatch.runner import run_episode


def fleet(name="haul", capacity=320.0, ld=3.0, sp=1.0, hl=12.0, de=10.0, dm=2.0, shape=4.0):
    means = {"LD": ld, "SP": sp, "HL": hl, "DE": de, "DM": dm}
    return FleetType(name, capacity, {a: GammaDist(shape, m / shape) for a, m in means.items()})


def mixed_config(n_shovels, n_dumps, fleets_and_counts, **kwargs):
    return MineConfig(n_shovels, n_dumps, tuple(FleetSpec(f, n) for f, n in fleets_and_counts), **kwargs)


class CheckedMine(Mine):
    """Mine that checks truck exclusivity after every event."""

    def __init__(self, *args, **kwargs):
        super().__init__(*args, **kwargs)
        self.exclusivity_violations = []

    def _handle(self, event):
        super()._handle(event)
        for tid, places in self.locations().items():
            # between events every active truck is in exactly one AQ, EQ or server slot
            if len(places) != (0 if self.trucks[tid].retired else 1):
                self.exclusivity_violations.append((self.now, tid, places))


def episode_violations(mine) -> list:
    """Conservation, FIFO, alternation and clock checks over a finished episode."""
    problems = []
    trace = mine.trace
    times = [t for t, *_ in trace]
    if any(b < a for a, b in zip(times, times[1:])):
        problems.append("clock went backwards")

    delivered = sum(t.delivered_total for t in mine.trucks)
    logged = sum(cap for _, _, cap in mine.deliveries)
    served = sum(
        mine.trucks[truck].capacity
        for _, kind, truck, site in trace
        if kind == "ServiceComplete" and site >= mine.n_shovels
    )
    if not delivered == logged == served:
        problems.append(f"conservation: trucks {delivered}, deliveries {logged}, dump services {served}")

    arrivals, starts = {}, {}
    for _, kind, truck, site in trace:
        if kind == "TruckArrival":
            arrivals.setdefault(site, []).append(truck)
        elif kind == "ServiceStart":
            starts.setdefault(site, []).append(truck)
    for site, started in starts.items():
        if arrivals.get(site, [])[: len(started)] != started:
            problems.append(f"FIFO broken at site {site}")

    expected = {}
    for _, kind, truck, site in trace:
        if kind != "ServiceComplete":
            continue
        is_dump = site >= mine.n_shovels
        if is_dump != expected.get(truck, False):
            problems.append(f"truck {truck} served at {'dump' if is_dump else 'shovel'} out of turn")
        expected[truck] = not is_dump

    if getattr(mine, "exclusivity_violations", None):
        problems.append(f"exclusivity: {mine.exclusivity_violations[:3]}")
    return problems


# -- independent site-feature oracle ------------------------------------------

SHOVEL_WORK, SHOVEL_ACT = ("LD", "SP", "HL"), ("LD", "SP")
DUMP_WORK, DUMP_ACT = ("DM", "DE"), ("DM",)


def _mean(truck, activity):
    d = truck.fleet.dists[activity]
    return d.shape * d.scale


def brute_force_features(mine, site_id, truck):
    """Expected wait, waiting tons, delayed activity, delayed tons, by explicit item lists."""
    site = mine.sites[site_id]
    shovel = site_id < mine.n_shovels
    work_acts, delay_acts = (SHOVEL_WORK, SHOVEL_ACT) if shovel else (DUMP_WORK, DUMP_ACT)
    eta_t = mine.now + _mean(truck, "DE" if shovel else "HL")
    ahead = [mine.trucks[i] for i in site.aq]
    ahead += [mine.trucks[i] for i in site.eq if mine.eta[i] <= eta_t]
    delayed = [mine.trucks[i] for i in site.eq if mine.eta[i] > eta_t]
    wait_items = [_mean(t, a) for t in ahead + [truck] for a in work_acts]
    delay_items = [_mean(t, a) for t in delayed for a in delay_acts]
    return (
        sum(wait_items),
        sum(t.capacity for t in ahead),
        sum(delay_items),
        sum(t.capacity for t in delayed),
    )


SNAPSHOT_FLEETS = (
    fleet("small", 200.0, ld=2.7, sp=0.9, hl=10.8, de=9.0, dm=1.8),
    fleet("medium", 320.0),
    fleet("large", 400.0, ld=3.45, sp=1.15, hl=13.8, de=11.5, dm=2.3),
)


def random_snapshot(rng, max_trucks=5, max_sites=3):
    """A mine frozen mid-shift with trucks scattered over AQs and EQs.

    Returns ``(mine, truck)`` where ``truck`` awaits a destination.
    """
    from minedispatch.mine import Status

    n_shovels = int(rng.integers(1, max_sites))
    n_dumps = int(rng.integers(1, max_sites + 1 - n_shovels))
    n_trucks = int(rng.integers(1, max_trucks + 1))
    picks = rng.integers(0, len(SNAPSHOT_FLEETS), n_trucks)
    cfg = mixed_config(n_shovels, n_dumps, [(SNAPSHOT_FLEETS[i], int((picks == i).sum())) for i in range(3)
                                            if (picks == i).any()])
    mine = Mine(cfg, seed=int(rng.integers(2**31)))
    now = float(rng.uniform(0, 500))
    mine.engine.queue.now = now
    truck = mine.trucks[int(rng.integers(n_trucks))]
    truck.status = Status.AT_DUMP_DONE if rng.random() < 0.5 else Status.AT_SHOVEL_DONE
    for t in mine.trucks:
        if t is truck:
            continue
        site = mine.sites[int(rng.integers(mine.n_sites))]
        if rng.random() < 0.5:
            site.aq.append(t.id)
            t.status = Status.QUEUED
        else:
            site.eq.append(t.id)
            t.status = Status.EN_ROUTE
            shovel = site.id < n_shovels
            eta_t = now + _mean(truck, "DE" if shovel else "HL")
            # some exact ties with the deciding truck's eta
            mine.eta[t.id] = eta_t if rng.random() < 0.2 else now + float(rng.uniform(0, 25))
    for site in mine.sites:
        site.n_busy = min(site.servers, len(site.aq))
    return mine, truck


# -- scripted cut-in -----------------------------------------------------------
# Two trucks start at time 0 and both go to the only shovel. Truck 0 is slow
# (mean empty drive 20 min), truck 1 fast (5 min); truck 1 is dispatched second
# yet arrives first, cutting in front of truck 0's decision.

def cut_in_run(tailoring: bool):
    cfg = mixed_config(1, 1, [(fleet("slow", de=20.0), 1), (fleet("fast", de=5.0), 1)])
    net = QNetwork([cfg.state_dim, 4, cfg.n_sites], rng=np.random.default_rng(0))
    memory = ReplayMemory(100, cfg.state_dim, cfg.n_sites)
    book = PendingBook(tailoring=tailoring)
    collector = ExperienceCollector(net, 0.0, memory, book)
    run_episode(cfg, collector, seed=0, stop=CycleLimit(2))
    return memory, book
