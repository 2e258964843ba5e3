"""Small dense feed-forward networks with hand-written backprop and Adam.

Layout convention: a layer maps ``x @ W + b`` with ``W`` of shape
``(fan_in, fan_out)``, so inputs may be a single vector or a batch of rows.
Everything is float64.
"""
from __future__ import annotations

import struct

import numpy as np

ACTIVATIONS = ("identity", "tanh", "relu")

_MAGIC = b"STOPGONN"
_VERSION = 1


def _act(name, z):
    if name == "tanh":
        return np.tanh(z)
    if name == "relu":
        return np.maximum(z, 0.0)
    return z


def _dact(name, z, a):
    # derivative expressed through pre-activation z / activation a
    if name == "tanh":
        return 1.0 - a * a
    if name == "relu":
        return z > 0.0
    return np.ones_like(z)


class DenseNet:
    """Fully connected network.

    Parameters
    ----------
    layer_sizes : sequence of int
        Widths including input and output, e.g. ``(5, 64, 64, 1)``.
    hidden : str
        Activation for hidden layers (``"tanh"`` or ``"relu"``).
    output : str
        Activation for the last layer (``"identity"`` or ``"tanh"``).
    """

    def __init__(self, layer_sizes, hidden="relu", output="identity"):
        sizes = [int(s) for s in layer_sizes]
        if len(sizes) < 2 or min(sizes) < 1:
            raise ValueError(f"invalid layer sizes {layer_sizes!r}")
        if hidden not in ACTIVATIONS or output not in ACTIVATIONS:
            raise ValueError(f"unknown activation {hidden!r}/{output!r}")
        self.layer_sizes = sizes
        self.hidden = hidden
        self.output = output
        self.flat = np.zeros(sum(a * b + b for a, b in zip(sizes[:-1], sizes[1:])))
        self.weights, self.biases = _layer_views(self.flat, sizes)

    @classmethod
    def init_uniform(cls, layer_sizes, rng, hidden="relu", output="identity", final_scale=3e-3):
        """Fan-in uniform init; the last layer is drawn from +-final_scale."""
        net = cls(layer_sizes, hidden, output)
        n = len(net.weights)
        for i in range(n):
            fan_in = net.layer_sizes[i]
            lim = final_scale if i == n - 1 else 1.0 / np.sqrt(fan_in)
            net.weights[i][...] = rng.uniform(-lim, lim, size=net.weights[i].shape)
            net.biases[i][...] = rng.uniform(-lim, lim, size=net.biases[i].shape)
        return net

    @property
    def params(self):
        """Parameter arrays interleaved as ``[W0, b0, W1, b1, ...]`` (views)."""
        out = []
        for w, b in zip(self.weights, self.biases):
            out.extend((w, b))
        return out

    def activation(self, layer):
        return self.output if layer == len(self.weights) - 1 else self.hidden

    def copy(self):
        net = DenseNet(self.layer_sizes, self.hidden, self.output)
        net.flat[...] = self.flat
        return net

    def _check_input(self, x):
        x = np.asarray(x, dtype=np.float64)
        if x.ndim not in (1, 2) or x.shape[-1] != self.layer_sizes[0]:
            raise ValueError(
                f"input shape {x.shape} does not match input width {self.layer_sizes[0]}"
            )
        return x

    def forward(self, x):
        x = self._check_input(x)
        last = len(self.weights) - 1
        for i, (w, b) in enumerate(zip(self.weights, self.biases)):
            x = _act(self.output if i == last else self.hidden, x @ w + b)
        return x

    def forward_cached(self, x):
        """Forward pass that also returns what :meth:`backward` needs."""
        x = self._check_input(x)
        cache = [(x, None, None)]
        a = x
        for i, (w, b) in enumerate(zip(self.weights, self.biases)):
            z = a @ w + b
            a = _act(self.activation(i), z)
            cache.append((a, z, self.activation(i)))
        return a, cache

    def backward(self, cache, upstream, param_grads=True):
        """Reverse-mode gradient of ``sum(output * upstream)``.

        Returns ``(grads, input_grad)`` with ``grads`` aligned with
        :attr:`params`. For batched inputs the parameter gradient is summed
        over the batch. With ``param_grads=False`` only the input gradient is
        computed and ``grads`` is None.
        """
        out = cache[-1][0]
        g = np.asarray(upstream, dtype=np.float64)
        if g.shape != out.shape:
            raise ValueError(f"upstream shape {g.shape} != output shape {out.shape}")
        grads = Gradient(self.layer_sizes) if param_grads else None
        for i in range(len(self.weights) - 1, -1, -1):
            a, z, name = cache[i + 1]
            if name != "identity":
                g = g * _dact(name, z, a)
            if grads is None:
                g = g @ self.weights[i].T
                continue
            gw, gb = grads.weights, grads.biases
            a_prev = cache[i][0]
            if a_prev.ndim == 1:
                np.outer(a_prev, g, out=gw[i])
                gb[i][...] = g
            else:
                np.matmul(a_prev.T, g, out=gw[i])
                g.sum(axis=0, out=gb[i])
            g = g @ self.weights[i].T
        return grads, g

    # -- serialization -------------------------------------------------

    def to_bytes(self):
        head = ",".join(str(s) for s in self.layer_sizes) + f";{self.hidden};{self.output}"
        head_b = head.encode("ascii")
        chunks = [_MAGIC, struct.pack("<II", _VERSION, len(head_b)), head_b]
        chunks.append(self.flat.astype("<f8").tobytes())
        return b"".join(chunks)

    @classmethod
    def from_bytes(cls, data, offset=0):
        """Parse a network; returns ``(net, next_offset)``."""
        if data[offset:offset + 8] != _MAGIC:
            raise ValueError("not a network blob (bad magic)")
        version, hlen = struct.unpack_from("<II", data, offset + 8)
        if version != _VERSION:
            raise ValueError(f"unsupported network format version {version}")
        pos = offset + 16
        sizes_s, hidden, output = data[pos:pos + hlen].decode("ascii").split(";")
        pos += hlen
        net = cls([int(s) for s in sizes_s.split(",")], hidden, output)
        n = net.flat.size * 8
        if pos + n > len(data):
            raise ValueError("truncated network blob")
        net.flat[...] = np.frombuffer(data[pos:pos + n], dtype="<f8")
        return net, pos + n


def _layer_views(flat, sizes):
    weights, biases = [], []
    o = 0
    for a, b in zip(sizes[:-1], sizes[1:]):
        weights.append(flat[o:o + a * b].reshape(a, b))
        o += a * b
        biases.append(flat[o:o + b])
        o += b
    return weights, biases


class Gradient(list):
    """Per-parameter gradients ordered like :attr:`DenseNet.params`.

    The arrays are views into the contiguous vector ``flat``.
    """

    def __init__(self, layer_sizes):
        self.flat = np.zeros(sum(a * b + b for a, b in zip(layer_sizes[:-1], layer_sizes[1:])))
        self.weights, self.biases = _layer_views(self.flat, layer_sizes)
        super().__init__(p for pair in zip(self.weights, self.biases) for p in pair)


def _flat_grad(net, grads):
    flat = getattr(grads, "flat", None)
    if flat is not None and flat.shape == net.flat.shape:
        return flat
    params = net.params
    if len(grads) != len(params):
        raise ValueError("gradient list does not match network parameters")
    for g, p in zip(grads, params):
        if np.shape(g) != p.shape:
            raise ValueError(f"gradient shape {np.shape(g)} != parameter shape {p.shape}")
    return np.concatenate([np.ravel(g) for g in grads])


def zero_net_like(net):
    return DenseNet(net.layer_sizes, net.hidden, net.output)


def soft_update(target, source, tau):
    """Blend ``target <- tau*source + (1-tau)*target`` in place."""
    if not 0.0 <= tau <= 1.0:
        raise ValueError(f"tau must be in [0, 1], got {tau}")
    if target.layer_sizes != source.layer_sizes:
        raise ValueError("soft_update on networks of different shapes")
    if tau == 1.0:
        target.flat[...] = source.flat
        return target
    target.flat *= 1.0 - tau
    target.flat += tau * source.flat
    return target


class AdamState:
    """First/second moment buffers for one network."""

    def __init__(self, net, beta1=0.9, beta2=0.999, eps=1e-8):
        self.beta1 = beta1
        self.beta2 = beta2
        self.eps = eps
        self.t = 0
        self.m_flat = np.zeros_like(net.flat)
        self.v_flat = np.zeros_like(net.flat)
        self.m = _views_like(self.m_flat, net)
        self.v = _views_like(self.v_flat, net)


def _views_like(flat, net):
    w, b = _layer_views(flat, net.layer_sizes)
    return [p for pair in zip(w, b) for p in pair]


def adam_step(net, grads, state, lr):
    """One bias-corrected Adam descent step, applied in place.

    Returns ``(net, state)`` for convenience.
    """
    g = _flat_grad(net, grads)
    if not np.isfinite(g).all():
        raise FloatingPointError("non-finite gradient passed to optimizer")
    state.t += 1
    b1, b2 = state.beta1, state.beta2
    c1 = 1.0 - b1 ** state.t
    c2 = 1.0 - b2 ** state.t
    m, v = state.m_flat, state.v_flat
    m *= b1
    m += (1.0 - b1) * g
    v *= b2
    v += (1.0 - b2) * (g * g)
    net.flat -= lr * (m / c1) / (np.sqrt(v / c2) + state.eps)
    return net, state
