import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from minedispatch import run_episode
from minedispatch.engine import CycleLimit
from minedispatch.rl.memory import PendingBook, ReplayMemory
from minedispatch.rl.network import QNetwork
from minedispatch.rl.train import ExperienceCollector

from helpers import cut_in_run, fleet, mixed_config


def _push(mem, i, r=0.5):
    s = np.full(mem.s.shape[1], float(i))
    n_actions = mem.next_mask.shape[1]
    mem.push(s, i % n_actions, r, s + 1, np.ones(n_actions, bool), truck=i, decision_time=float(i))


@settings(max_examples=50, deadline=None)
@given(capacity=st.integers(1, 20), n=st.integers(0, 60))
def test_ring_buffer_keeps_newest(capacity, n):
    mem = ReplayMemory(capacity, 3, 2)
    for i in range(n):
        _push(mem, i)
    assert len(mem) == min(n, capacity)
    kept = sorted(int(x) for x in mem.s[: len(mem), 0])
    assert kept == list(range(max(0, n - capacity), n))


def test_whole_memory_sample_is_a_permutation():
    mem = ReplayMemory(1024, 2, 2)
    for i in range(1024):
        _push(mem, i)
    s, a, r, s2, mask = mem.sample(1024, np.random.default_rng(0))
    assert sorted(s[:, 0].tolist()) == list(range(1024))
    assert s[:, 0].tolist() != list(range(1024))


def test_sample_waits_for_enough_memory():
    mem = ReplayMemory(1000, 2, 2)
    for i in range(100):
        _push(mem, i)
    assert mem.sample(1024, np.random.default_rng(0)) is None


def test_seeded_sampling_reproducible():
    mem = ReplayMemory(50, 2, 2)
    for i in range(50):
        _push(mem, i)
    a = mem.sample(10, np.random.default_rng(3))[0]
    b = mem.sample(10, np.random.default_rng(3))[0]
    assert np.array_equal(a, b)


@pytest.mark.parametrize("r", [-0.1, 1.5, np.nan])
def test_rewards_outside_unit_interval_rejected(r):
    with pytest.raises(ValueError):
        _push(ReplayMemory(5, 2, 2), 0, r=r)


def test_memory_state_round_trip():
    mem = ReplayMemory(8, 2, 2)
    for i in range(11):
        _push(mem, i)
    other = ReplayMemory(8, 2, 2)
    other.load_state_dict(mem.state_dict())
    rng1, rng2 = np.random.default_rng(1), np.random.default_rng(1)
    for x, y in zip(mem.sample(8, rng1), other.sample(8, rng2)):
        assert np.array_equal(x, y)
    _push(mem, 99)
    _push(other, 99)
    assert np.array_equal(mem.s, other.s)


def test_pending_lifecycle():
    mem = ReplayMemory(10, 3, 2)
    book = PendingBook(r_max=20.0)
    book.open(7, np.zeros(3), 1, now=10.0, target_site=1, capacity=320.0)
    assert len(mem) == 0
    with pytest.raises(RuntimeError):
        book.open(7, np.zeros(3), 0, now=11.0, target_site=0, capacity=320.0)
    assert book.resolve(7, np.ones(3), np.array([True, False]), now=50.0, memory=mem)
    assert len(mem) == 1 and mem.r[0] == 0.4
    assert not book.resolve(7, np.ones(3), np.array([True, False]), now=60.0, memory=mem)


def test_corrupted_pending_is_dropped():
    mem = ReplayMemory(10, 3, 2)
    book = PendingBook()
    book.open(1, np.zeros(3), 0, 0.0, 0, 320.0)
    book.open(2, np.zeros(3), 1, 0.0, 1, 320.0)
    assert book.tailor(0, []) == 0
    assert book.tailor(1, [1]) == 0  # truck 1's decision went to site 0
    assert book.tailor(0, [1, 5]) == 1
    assert not book.resolve(1, np.zeros(3), np.ones(2, bool), 30.0, mem)
    assert book.dropped_corrupted == 1 and len(mem) == 0


def test_tailoring_off_keeps_everything():
    book = PendingBook(tailoring=False)
    book.open(1, np.zeros(3), 0, 0.0, 0, 320.0)
    assert book.tailor(0, [1]) == 0
    assert not book.pending[1].corrupted


def test_episode_end_drops_outstanding():
    book = PendingBook()
    book.open(1, np.zeros(3), 0, 0.0, 0, 320.0)
    book.open(2, np.zeros(3), 0, 0.0, 0, 320.0)
    assert book.drop_all() == 2 and book.dropped_episode_end == 2 and not book.pending


def test_cut_in_transition_removed_only_with_tailoring():
    kept, book_on = cut_in_run(tailoring=False)
    tailored, book_off = cut_in_run(tailoring=True)
    # truck 0's first decision (time 0, to the shovel) is the delayed one
    assert kept.contains(0, 0.0)
    assert not tailored.contains(0, 0.0)
    # the truck that cut in keeps its own transition either way
    assert kept.contains(1, 0.0) and tailored.contains(1, 0.0)
    assert book_off.tailored >= 1 and book_on.tailored == 0


def test_experience_from_every_truck_lands_in_one_memory():
    cfg = mixed_config(2, 2, [(fleet("a", 200.0), 2), (fleet("b", 400.0, hl=15.0), 2)])
    net = QNetwork([cfg.state_dim, 4, cfg.n_sites], rng=np.random.default_rng(0))
    memory = ReplayMemory(1000, cfg.state_dim, cfg.n_sites)
    collector = ExperienceCollector(net, 0.5, memory, PendingBook())
    run_episode(cfg, collector, seed=3, stop=CycleLimit(5))
    trucks = set(memory.origin[: len(memory), 0].tolist())
    assert trucks == {0.0, 1.0, 2.0, 3.0}
    # capacity is the only per-truck entry in the state; no identity feature
    assert set(memory.s[: len(memory), 0].tolist()) == {200.0, 400.0}
