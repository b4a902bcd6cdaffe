import os
import subprocess
import sys
from array import array

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from minedispatch import kernels, _kernels_py

compiled = pytest.importorskip("minedispatch._kernels", reason="compiled kernels not built")


def _snapshot(rng, n):
    work = array("d", rng.uniform(1, 30, n))
    act = array("d", rng.uniform(1, 5, n))
    cap = array("d", rng.choice([200.0, 320.0, 400.0], n))
    eta = array("d", rng.uniform(0, 40, n))
    ids = [int(i) for i in rng.permutation(n)]
    k = int(rng.integers(0, n))
    aq, eq, truck = ids[: k // 2], ids[k // 2: k], ids[k % n]
    return work, act, cap, eta, aq, eq, truck, float(rng.uniform(0, 40))


@settings(max_examples=300, deadline=None)
@given(seed=st.integers(0, 2**32 - 1), n=st.integers(1, 40))
def test_backends_agree_exactly(seed, n):
    args = _snapshot(np.random.default_rng(seed), n)
    assert compiled.site_block(*args) == _kernels_py.site_block(*args)
    assert compiled.delayed_trucks(args[3], args[5], args[7]) == _kernels_py.delayed_trucks(args[3], args[5], args[7])


@settings(max_examples=100, deadline=None)
@given(seed=st.integers(0, 2**32 - 1), scale=st.floats(1e-3, 1e3))
def test_forward_backends_agree(seed, scale):
    rng = np.random.default_rng(seed)
    shapes = [(13, 16), (16, 16), (16, 3)]
    weights = [rng.normal(size=s) for s in shapes]
    biases = [rng.normal(size=s[1]) for s in shapes]
    x = rng.normal(size=13) * scale
    # outputs are probabilities; deep in a sigmoid tail the relative gap between
    # BLAS and loop summation is amplified by exp, so compare absolutely
    assert np.allclose(compiled.mlp_forward(x, weights, biases), _kernels_py.mlp_forward(x, weights, biases),
                       rtol=1e-9, atol=1e-12)


@pytest.mark.skipif(os.environ.get("MINEDISPATCH_PURE_PYTHON") == "1", reason="fallback forced")
def test_compiled_backend_selected_by_default():
    assert kernels.BACKEND == "cython"


def test_fallback_forced_by_environment():
    env = dict(os.environ, MINEDISPATCH_PURE_PYTHON="1")
    out = subprocess.run([sys.executable, "-c", "from minedispatch import BACKEND; print(BACKEND)"],
                         env=env, capture_output=True, text=True, check=True)
    assert out.stdout.strip() == "python"


def test_episode_identical_under_both_backends():
    code = ("from minedispatch import load_config, run_episode\n"
            "from minedispatch.policies import SmartShortestQueue\n"
            "from minedispatch.metrics import to_csv\n"
            "print(to_csv([run_episode(load_config('full'), SmartShortestQueue(), 3)[1]]))")
    outs = []
    for pure in ("1", "0"):
        env = dict(os.environ, MINEDISPATCH_PURE_PYTHON=pure)
        outs.append(subprocess.run([sys.executable, "-c", code], env=env, capture_output=True, text=True,
                                   check=True).stdout)
    assert outs[0] == outs[1]
