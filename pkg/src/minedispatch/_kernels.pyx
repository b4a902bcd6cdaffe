# cython: language_level=3, boundscheck=False, wraparound=False, cdivision=True
"""Compiled per-decision kernels. Must agree with _kernels_py exactly."""

from libc.math cimport exp

import numpy as np


def site_block(double[:] work, double[:] act, double[:] cap, double[:] eta,
               list aq, list eq, Py_ssize_t truck, double eta_t):
    cdef double wt = 0.0, tcw = 0.0, at = 0.0, tcd = 0.0
    cdef Py_ssize_t i
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


def delayed_trucks(double[:] eta, list eq, double eta_t):
    cdef Py_ssize_t i
    return [i for i in eq if eta[i] > eta_t]


cdef inline double _sigmoid(double z):
    if z >= 0:
        return 1.0 / (1.0 + exp(-z))
    cdef double e = exp(z)
    return e / (1.0 + e)


def mlp_forward(double[:] x, list weights, list biases):
    """Single-sample forward: ReLU hidden layers, sigmoid output."""
    cdef Py_ssize_t n_layers = len(weights)
    cdef Py_ssize_t layer, i, j, n_in, n_out
    cdef double[:, :] w
    cdef double[:] b
    cdef double[:] cur = x
    cdef double[:] out
    cdef double acc
    for layer in range(n_layers):
        w = weights[layer]
        b = biases[layer]
        n_in = w.shape[0]
        n_out = w.shape[1]
        out = np.empty(n_out, dtype=np.float64)
        for j in range(n_out):
            out[j] = b[j]
        for i in range(n_in):
            acc = cur[i]
            if acc == 0.0:
                continue
            for j in range(n_out):
                out[j] += acc * w[i, j]
        if layer < n_layers - 1:
            for j in range(n_out):
                if out[j] < 0.0:
                    out[j] = 0.0
        else:
            for j in range(n_out):
                out[j] = _sigmoid(out[j])
        cur = out
    return np.asarray(cur)
