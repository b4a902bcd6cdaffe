"""Fully connected Q-network in numpy with hand-written backprop and ADAM.

Layer ``i`` maps ``sizes[i] -> sizes[i+1]``; hidden layers use ReLU and the
output layer a sigmoid, so every Q value lies in (0, 1).

An optional fixed ``input_scale`` multiplies observations before the first
layer. It is not trained and is folded into the first weight matrix when the
model is written, so saved files always describe a plain network.

Model file layout (little-endian)::

    b"EMDQ"  uint32 version  uint32 n_sizes  uint32 sizes[n_sizes]
    for each layer: float64 W[fan_in, fan_out] (row-major), float64 b[fan_out]
"""

from __future__ import annotations

import math
import struct

import numpy as np

from .. import kernels

MAGIC = b"EMDQ"
FORMAT_VERSION = 1


class TrainingDiverged(FloatingPointError):
    """Loss or parameters became non-finite."""


def smooth_l1(err: np.ndarray, clip: float = 1.0) -> np.ndarray:
    """Huber loss whose gradient is ``err`` clipped to ``[-clip, clip]``."""
    a = np.abs(err)
    return np.where(a < clip, 0.5 * err * err, clip * (a - 0.5 * clip))


def sigmoid(z: np.ndarray) -> np.ndarray:
    # split by sign so exp never overflows
    out = np.empty_like(z)
    pos = z >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-z[pos]))
    e = np.exp(z[~pos])
    out[~pos] = e / (1.0 + e)
    return out


class Adam:
    def __init__(self, shapes, lr=1e-5, beta1=0.9, beta2=0.999, eps=1e-8):
        self.lr, self.beta1, self.beta2, self.eps = lr, beta1, beta2, eps
        self.m = [np.zeros(s) for s in shapes]
        self.v = [np.zeros(s) for s in shapes]
        self.t = 0

    def step(self, params, grads):
        self.t += 1
        c1 = 1.0 - self.beta1**self.t
        c2 = 1.0 - self.beta2**self.t
        for p, g, m, v in zip(params, grads, self.m, self.v):
            m *= self.beta1
            m += (1.0 - self.beta1) * g
            v *= self.beta2
            v += (1.0 - self.beta2) * g * g
            p -= self.lr * (m / c1) / (np.sqrt(v / c2) + self.eps)


class QNetwork:
    def __init__(self, sizes, rng=None, lr=1e-5, input_scale=None, error_clip=1.0):
        self.error_clip = float(error_clip)
        self.sizes = [int(s) for s in sizes]
        if len(self.sizes) < 2 or min(self.sizes) < 1:
            raise ValueError(f"bad layer sizes {sizes!r}")
        rng = rng if rng is not None else np.random.default_rng(0)
        self.weights, self.biases = [], []
        for fan_in, fan_out in zip(self.sizes[:-1], self.sizes[1:]):
            bound = 1.0 / math.sqrt(fan_in)
            self.weights.append(rng.uniform(-bound, bound, (fan_in, fan_out)))
            self.biases.append(rng.uniform(-bound, bound, fan_out))
        self.input_scale = None if input_scale is None else np.asarray(input_scale, dtype=np.float64)
        self.adam = Adam([p.shape for p in self.params], lr=lr)

    @property
    def params(self) -> list:
        out = []
        for w, b in zip(self.weights, self.biases):
            out += [w, b]
        return out

    @property
    def n_actions(self) -> int:
        return self.sizes[-1]

    def copy(self) -> "QNetwork":
        """Parameter snapshot (optimizer state not copied)."""
        twin = object.__new__(QNetwork)
        twin.sizes = list(self.sizes)
        twin.weights = [w.copy() for w in self.weights]
        twin.biases = [b.copy() for b in self.biases]
        twin.input_scale = self.input_scale
        twin.error_clip = self.error_clip
        twin.adam = None
        return twin

    def _check_input(self, x):
        if x.shape[-1] != self.sizes[0]:
            raise ValueError(f"input has {x.shape[-1]} features, network expects {self.sizes[0]}")

    def _scaled(self, x):
        return x if self.input_scale is None else x * self.input_scale

    def forward(self, x: np.ndarray) -> np.ndarray:
        x = np.atleast_2d(np.asarray(x, dtype=np.float64))
        self._check_input(x)
        h = self._scaled(x)
        last = len(self.weights) - 1
        for i, (w, b) in enumerate(zip(self.weights, self.biases)):
            z = h @ w + b
            h = np.maximum(z, 0.0) if i < last else sigmoid(z)
        return h

    def forward1(self, x: np.ndarray) -> np.ndarray:
        """Single observation through the per-decision kernel."""
        x = np.ascontiguousarray(x, dtype=np.float64)
        self._check_input(x)
        return kernels.mlp_forward(self._scaled(x), self.weights, self.biases)

    def loss_and_grads(self, s, a, y):
        """Mean smooth-L1 of ``y - Q(s, a)`` and its gradient w.r.t. every parameter."""
        s = np.asarray(s, dtype=np.float64)
        self._check_input(s)
        n = s.shape[0]
        h = self._scaled(s)
        acts = [h]
        pre = []
        last = len(self.weights) - 1
        for i, (w, b) in enumerate(zip(self.weights, self.biases)):
            z = h @ w + b
            pre.append(z)
            h = np.maximum(z, 0.0) if i < last else sigmoid(z)
            acts.append(h)
        q = acts[-1]
        rows = np.arange(n)
        err = y - q[rows, a]
        c = self.error_clip
        loss = float(smooth_l1(err, c).mean())

        # d loss / d Q(s,a) is the clipped error
        dq = np.zeros_like(q)
        dq[rows, a] = -np.clip(err, -c, c) / n
        delta = dq * q * (1.0 - q)
        grads_w = [None] * len(self.weights)
        grads_b = [None] * len(self.weights)
        for i in range(last, -1, -1):
            grads_w[i] = acts[i].T @ delta
            grads_b[i] = delta.sum(axis=0)
            if i > 0:
                delta = (delta @ self.weights[i].T) * (pre[i - 1] > 0)
        grads = []
        for gw, gb in zip(grads_w, grads_b):
            grads += [gw, gb]
        return loss, grads

    def loss(self, s, a, y) -> float:
        q = self.forward(s)
        return float(smooth_l1(y - q[np.arange(len(a)), a], self.error_clip).mean())

    def train_step(self, s, a, y) -> float:
        loss, grads = self.loss_and_grads(s, a, y)
        if not math.isfinite(loss):
            raise TrainingDiverged(
                f"non-finite loss {loss!r}; max|y|={np.max(np.abs(y))!r}, "
                f"max|s|={np.max(np.abs(s))!r}, adam step {self.adam.t}"
            )
        self.adam.step(self.params, grads)
        return loss

    # -- persistence -----------------------------------------------------

    def folded_weights(self) -> list:
        """Weights with the input scale absorbed into the first layer."""
        weights = list(self.weights)
        if self.input_scale is not None:
            weights[0] = self.input_scale[:, None] * weights[0]
        return weights

    def to_bytes(self) -> bytes:
        parts = [MAGIC, struct.pack("<II", FORMAT_VERSION, len(self.sizes))]
        parts.append(struct.pack(f"<{len(self.sizes)}I", *self.sizes))
        for w, b in zip(self.folded_weights(), self.biases):
            parts.append(np.ascontiguousarray(w, dtype="<f8").tobytes())
            parts.append(np.ascontiguousarray(b, dtype="<f8").tobytes())
        return b"".join(parts)

    @classmethod
    def from_bytes(cls, data: bytes, lr: float = 1e-5) -> "QNetwork":
        if data[:4] != MAGIC:
            raise ValueError("not an EMDQ model file (bad magic)")
        version, n_sizes = struct.unpack_from("<II", data, 4)
        if version != FORMAT_VERSION:
            raise ValueError(f"unsupported model version {version}")
        off = 12
        sizes = list(struct.unpack_from(f"<{n_sizes}I", data, off))
        off += 4 * n_sizes
        net = object.__new__(cls)
        net.sizes = sizes
        net.weights, net.biases = [], []
        for fan_in, fan_out in zip(sizes[:-1], sizes[1:]):
            w = np.frombuffer(data, "<f8", fan_in * fan_out, off).reshape(fan_in, fan_out)
            off += 8 * fan_in * fan_out
            b = np.frombuffer(data, "<f8", fan_out, off)
            off += 8 * fan_out
            net.weights.append(w.astype(np.float64))
            net.biases.append(b.astype(np.float64))
        net.input_scale = None
        net.error_clip = 1.0
        if off != len(data):
            raise ValueError(f"model file has {len(data) - off} trailing bytes")
        net.adam = Adam([p.shape for p in net.params], lr=lr)
        return net

    def save(self, path) -> None:
        with open(path, "wb") as fh:
            fh.write(self.to_bytes())

    @classmethod
    def load(cls, path, lr: float = 1e-5) -> "QNetwork":
        with open(path, "rb") as fh:
            return cls.from_bytes(fh.read(), lr=lr)


def compute_targets(target_net: QNetwork, r, s_next, next_mask, gamma: float) -> np.ndarray:
    """r + gamma * max over valid next actions of the frozen network."""
    q_next = target_net.forward(s_next)
    best = np.where(next_mask, q_next, -np.inf).max(axis=1)
    return r + gamma * best


def train_batch(net: QNetwork, batch, gamma: float, target_net: QNetwork = None) -> float:
    """One ADAM step on a sampled batch; returns the mean smooth-L1 loss."""
    s, a, r, s_next, next_mask = batch
    if len(a) == 0:
        raise ValueError("empty batch")
    target_net = target_net if target_net is not None else net.copy()
    y = compute_targets(target_net, r, s_next, next_mask, gamma)
    return net.train_step(s, a, y)


__all__ = ["Adam", "QNetwork", "TrainingDiverged", "compute_targets", "smooth_l1", "train_batch"]
