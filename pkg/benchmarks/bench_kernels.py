"""Compare the compiled kernels with their pure-Python fallbacks.

    python3 benchmarks/bench_kernels.py [--repeat 5]

Prints per-call timings for the feature and forward kernels, then whole
episode timings (SSQ on the full preset, greedy Q-network on desk) with each
backend selected through MINEDISPATCH_PURE_PYTHON in a child process.
"""

import argparse
import os
import subprocess
import sys
import timeit
from array import array

import numpy as np

from minedispatch import _kernels_py

try:
    from minedispatch import _kernels
except ImportError:
    _kernels = None

EPISODE_SNIPPET = """
import time
from minedispatch import kernels, load_config, run_episode
from minedispatch.policies import make_policy, QPolicy
from minedispatch.rl.network import QNetwork
import numpy as np
full, desk = load_config("full"), load_config("desk")
net = QNetwork([desk.state_dim, 128, 128, desk.n_sites], rng=np.random.default_rng(0))
best = {{}}
for name, cfg, policy in (("ssq/full", full, make_policy("ssq")), ("dqn/desk", desk, QPolicy(net))):
    times = []
    for seed in range({repeat}):
        t0 = time.perf_counter()
        run_episode(cfg, policy, seed)
        times.append(time.perf_counter() - t0)
    best[name] = min(times)
print(kernels.BACKEND, " ".join(f"{{k}}={{v*1e3:.2f}}ms" for k, v in best.items()))
"""


def snapshot(rng, n_trucks=50, queue=8):
    work = array("d", rng.uniform(10, 20, n_trucks))
    act = array("d", rng.uniform(1, 5, n_trucks))
    cap = array("d", rng.choice([200.0, 320.0, 400.0], n_trucks))
    eta = array("d", rng.uniform(0, 30, n_trucks))
    ids = list(rng.permutation(n_trucks)[: 2 * queue + 1])
    return work, act, cap, eta, ids[:queue], ids[queue:-1], ids[-1], 15.0


def per_call(fn, args, number):
    return min(timeit.repeat(lambda: fn(*args), number=number, repeat=5)) / number * 1e6


def micro():
    rng = np.random.default_rng(0)
    snap = snapshot(rng)
    weights = [rng.normal(size=s) for s in ((25, 128), (128, 128), (128, 6))]
    biases = [rng.normal(size=s[1]) for s in ((25, 128), (128, 128), (128, 6))]
    x = rng.normal(size=25)
    cases = [
        ("site_block", snap, 20000),
        ("delayed_trucks", (snap[3], snap[5], snap[7]), 20000),
        ("mlp_forward", (x, weights, biases), 5000),
    ]
    print(f"{'kernel':<16}{'python us':>12}{'cython us':>12}{'speedup':>10}")
    for name, args, number in cases:
        py = per_call(getattr(_kernels_py, name), args, number)
        if _kernels is None:
            print(f"{name:<16}{py:>12.2f}{'n/a':>12}{'':>10}")
            continue
        cy = per_call(getattr(_kernels, name), args, number)
        print(f"{name:<16}{py:>12.2f}{cy:>12.2f}{py / cy:>9.1f}x")


def episodes(repeat):
    print("\nwhole episodes (best of", repeat, "seeds):")
    for pure in ("1", "0"):
        env = dict(os.environ, MINEDISPATCH_PURE_PYTHON=pure)
        out = subprocess.run([sys.executable, "-c", EPISODE_SNIPPET.format(repeat=repeat)],
                             env=env, capture_output=True, text=True, check=True)
        print(" ", out.stdout.strip())


def main():
    parser = argparse.ArgumentParser()
    parser.add_argument("--repeat", type=int, default=5)
    args = parser.parse_args()
    micro()
    episodes(args.repeat)


if __name__ == "__main__":
    main()
