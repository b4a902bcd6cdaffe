"""Truck-shovel-dump haulage model driven by the event engine.

Sites are indexed like actions: shovels ``0..N-1`` then dumps ``N..N+M-1``.
Every truck starts empty at a virtual dump at t=0 and asks for a shovel.
"""

from __future__ import annotations

import enum
from array import array
from dataclasses import dataclass, field
from typing import Optional

from .config import MineConfig
from .engine import CycleLimit, Engine, EventKind, RandomStreams, sample_gamma
from .kernels import delayed_trucks

SHOVEL = "Shovel"
DUMP = "Dump"


class DispatchError(RuntimeError):
    """A dispatch was requested or executed in an impossible lifecycle state."""


class Status(enum.Enum):
    AT_SHOVEL_DONE = "AtShovelDone"
    AT_DUMP_DONE = "AtDumpDone"
    EN_ROUTE = "EnRoute"
    QUEUED = "Queued"
    IN_SERVICE = "InService"


@dataclass
class Truck:
    id: int
    fleet: object
    status: Status = Status.AT_DUMP_DONE
    destination: Optional[int] = None
    last_decision_time: float = 0.0
    pending: object = None
    delivered_total: float = 0.0
    cycles_completed: int = 0
    retired: bool = False
    arrived_at: float = 0.0

    @property
    def capacity(self) -> float:
        return self.fleet.capacity


@dataclass
class Site:
    id: int
    kind: str
    servers: int = 1
    # trucks physically at the site in arrival order; the first n_busy are in service
    aq: list = field(default_factory=list)
    n_busy: int = 0
    eq: list = field(default_factory=list)
    queue_time: float = 0.0
    services: int = 0

    @property
    def in_service(self) -> list:
        return self.aq[: self.n_busy]

    @property
    def waiting(self) -> list:
        return self.aq[self.n_busy:]


@dataclass(frozen=True)
class DispatchRequest:
    truck: int
    kind: str
    time: float


class Dispatcher:
    """Decision hook called by the mine whenever a truck needs a destination."""

    def decide(self, mine: "Mine", truck: Truck) -> int:
        raise NotImplementedError

    def after_dispatch(self, mine: "Mine", truck: Truck, action: int, delayed: list) -> None:
        pass

    def on_retire(self, mine: "Mine", truck: Truck) -> None:
        pass


class Mine:
    def __init__(self, config: MineConfig, seed: int, keep_trace: bool = True):
        self.config = config
        self.seed = int(seed)
        self.streams = RandomStreams(seed)
        self.engine = Engine(keep_trace=keep_trace)
        self.keep_trace = keep_trace
        n, m = config.n_shovels, config.n_dumps
        self.n_shovels, self.n_dumps = n, m
        self.sites = [Site(k, SHOVEL if k < n else DUMP, config.servers_per_site) for k in range(n + m)]
        self.trucks = [Truck(i, fleet) for i, fleet in enumerate(config.truck_fleets())]

        # per-truck fleet means, laid out for the feature kernel
        F = len(self.trucks)
        self.cap = array("d", [t.capacity for t in self.trucks])
        self.shovel_work = array("d", [t.fleet.mean("LD") + t.fleet.mean("SP") + t.fleet.mean("HL") for t in self.trucks])
        self.shovel_act = array("d", [t.fleet.mean("LD") + t.fleet.mean("SP") for t in self.trucks])
        self.dump_work = array("d", [t.fleet.mean("DM") + t.fleet.mean("DE") for t in self.trucks])
        self.dump_act = array("d", [t.fleet.mean("DM") for t in self.trucks])
        self.travel_to_shovel = array("d", [t.fleet.mean("DE") for t in self.trucks])
        self.travel_to_dump = array("d", [t.fleet.mean("HL") for t in self.trucks])
        self.eta = array("d", [0.0] * F)

        self.deliveries = []  # (time, truck id, capacity)
        self.draws = []  # (truck id, activity, minutes), kept only with keep_trace
        self.dispatcher: Optional[Dispatcher] = None
        self.result = None

    # -- views -----------------------------------------------------------

    @property
    def now(self) -> float:
        return self.engine.now

    @property
    def n_sites(self) -> int:
        return len(self.sites)

    @property
    def trace(self) -> list:
        return self.engine.trace

    def site_kind(self, site_id: int) -> str:
        return SHOVEL if site_id < self.n_shovels else DUMP

    def required_kind(self, truck: Truck) -> str:
        if truck.status is Status.AT_DUMP_DONE:
            return SHOVEL
        if truck.status is Status.AT_SHOVEL_DONE:
            return DUMP
        raise DispatchError(f"truck {truck.id} is {truck.status.value}; no dispatch possible")

    def mean_travel(self, truck_id: int, kind: str) -> float:
        return self.travel_to_shovel[truck_id] if kind == SHOVEL else self.travel_to_dump[truck_id]

    def hypothetical_eta(self, truck_id: int, kind: str) -> float:
        return self.now + self.mean_travel(truck_id, kind)

    # -- lifecycle -------------------------------------------------------

    def request_dispatch(self, truck: Truck) -> DispatchRequest:
        return DispatchRequest(truck.id, self.required_kind(truck), self.now)

    def dispatch(self, truck: Truck, action: int) -> list:
        """Send ``truck`` to site ``action``; returns the trucks it cuts in front of."""
        kind = self.required_kind(truck)
        if not 0 <= action < self.n_sites or self.site_kind(action) != kind:
            raise DispatchError(f"truck {truck.id} needs a {kind}; action {action} is invalid")
        site = self.sites[action]
        eta = self.hypothetical_eta(truck.id, kind)
        delayed = delayed_trucks(self.eta, site.eq, eta)

        activity = "DE" if kind == SHOVEL else "HL"
        travel = self._draw(truck, activity)
        truck.status = Status.EN_ROUTE
        truck.destination = action
        self.eta[truck.id] = eta
        site.eq.append(truck.id)
        self.engine.log("Dispatch", truck.id, action)
        self.engine.schedule(EventKind.TRUCK_ARRIVAL, self.now + travel, truck.id, action)
        return delayed

    def arrive(self, truck: Truck, site: Site) -> None:
        site.eq.remove(truck.id)
        site.aq.append(truck.id)
        truck.status = Status.QUEUED
        truck.arrived_at = self.now
        self._try_start(site)

    def _try_start(self, site: Site) -> None:
        while site.n_busy < site.servers and site.n_busy < len(site.aq):
            tid = site.aq[site.n_busy]
            site.n_busy += 1
            self.engine.schedule(EventKind.SERVICE_START, self.now, tid, site.id)

    def start_service(self, truck: Truck, site: Site) -> None:
        truck.status = Status.IN_SERVICE
        site.queue_time += self.now - truck.arrived_at
        site.services += 1
        if site.kind == SHOVEL:
            duration = self._draw(truck, "SP") + self._draw(truck, "LD")
        else:
            duration = self._draw(truck, "DM")
        self.engine.schedule(EventKind.SERVICE_COMPLETE, self.now + duration, truck.id, site.id)

    def complete_service(self, truck: Truck, site: Site) -> None:
        idx = site.aq.index(truck.id)
        assert idx < site.n_busy
        del site.aq[idx]
        site.n_busy -= 1
        truck.destination = None
        if site.kind == DUMP:
            truck.delivered_total += truck.capacity
            truck.cycles_completed += 1
            self.deliveries.append((self.now, truck.id, truck.capacity))
            truck.status = Status.AT_DUMP_DONE
        else:
            truck.status = Status.AT_SHOVEL_DONE
        self._try_start(site)

        limit = self._stop
        if isinstance(limit, CycleLimit) and truck.cycles_completed >= limit.cycles:
            truck.retired = True
            self._active -= 1
            self.engine.log("Retire", truck.id, None)
            self.dispatcher.on_retire(self, truck)
            return
        self._decide_and_dispatch(truck)

    def _decide_and_dispatch(self, truck: Truck) -> None:
        self.request_dispatch(truck)
        truck.last_decision_time = self.now
        action = self.dispatcher.decide(self, truck)
        delayed = self.dispatch(truck, action)
        self.dispatcher.after_dispatch(self, truck, action, delayed)

    def _draw(self, truck: Truck, activity: str) -> float:
        value = sample_gamma(truck.fleet.dists[activity], self.streams.truck(truck.id))
        if self.keep_trace:
            self.draws.append((truck.id, activity, value))
        return value

    # -- driver ----------------------------------------------------------

    def _handle(self, event) -> None:
        truck = self.trucks[event.truck]
        site = self.sites[event.site]
        kind = event.kind
        if kind is EventKind.TRUCK_ARRIVAL:
            self.arrive(truck, site)
        elif kind is EventKind.SERVICE_START:
            self.start_service(truck, site)
        elif kind is EventKind.SERVICE_COMPLETE:
            self.complete_service(truck, site)

    def run(self, dispatcher: Dispatcher, stop=None):
        """Run one episode to ``stop`` (defaults to the config's stop mode)."""
        if self.result is not None:
            raise RuntimeError("a Mine instance runs exactly one episode")
        self.dispatcher = dispatcher
        self._stop = stop if stop is not None else self.config.stop_condition()
        self._active = len(self.trucks)
        for truck in self.trucks:
            self._decide_and_dispatch(truck)
        done = (lambda: self._active == 0) if isinstance(self._stop, CycleLimit) else None
        self.result = self.engine.run_until(self._stop, self._handle, done)
        return self.result

    # -- checks ----------------------------------------------------------

    def locations(self) -> dict:
        """truck id -> list of places it currently occupies (should be one)."""
        where = {t.id: [] for t in self.trucks}
        for site in self.sites:
            for tid in site.aq[: site.n_busy]:
                where[tid].append(("server", site.id))
            for tid in site.aq[site.n_busy:]:
                where[tid].append(("AQ", site.id))
            for tid in site.eq:
                where[tid].append(("EQ", site.id))
        return where


__all__ = ["DUMP", "SHOVEL", "DispatchError", "DispatchRequest", "Dispatcher", "Mine", "Site", "Status", "Truck"]
