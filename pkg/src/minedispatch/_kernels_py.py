"""Pure-Python twins of the compiled kernels in ``_kernels.pyx``."""

import numpy as np


def site_block(work, act, cap, eta, aq, eq, truck, eta_t):
    wt = tcw = at = tcd = 0.0
    for i in aq:
        wt += work[i]
        tcw += cap[i]
    for i in eq:
        if eta[i] <= eta_t:
            wt += work[i]
            tcw += cap[i]
        else:
            at += act[i]
            tcd += cap[i]
    wt += work[truck]
    return wt, tcw, at, tcd


def delayed_trucks(eta, eq, eta_t):
    return [i for i in eq if eta[i] > eta_t]


def _sigmoid(z):
    out = np.empty_like(z)
    pos = z >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-z[pos]))
    e = np.exp(z[~pos])
    out[~pos] = e / (1.0 + e)
    return out


def mlp_forward(x, weights, biases):
    h = np.asarray(x, dtype=np.float64)
    last = len(weights) - 1
    for layer, (w, b) in enumerate(zip(weights, biases)):
        z = h @ w + b
        h = np.maximum(z, 0.0) if layer < last else _sigmoid(z)
    return h
