"""Small dense networks with hand-written reverse-mode gradients and Adam.

Parameters live in one flat float64 vector. Layout, in order:
for every layer ``W`` (n_out x n_in, row-major) then ``b`` (n_out); then,
when step modulation is enabled, ``gain`` (T x h1) and ``shift`` (T x h1).

Step modulation is applied to the first hidden pre-activation::

    z1 <- z1 * (1 + gain[t]) + shift[t]

so a zero-initialised modulation is the identity.
"""
from __future__ import annotations

from dataclasses import dataclass, field, replace

import numpy as np

ACTIVATIONS = ("tanh", "relu")


def _act(name, z):
    if name == "tanh":
        return np.tanh(z)
    return np.maximum(z, 0.0)


def _act_grad(name, z, h):
    if name == "tanh":
        return 1.0 - h * h
    return (z > 0.0).astype(np.float64)


class DenseNet:
    """Fully connected net: hidden layers use ``activation``, output is linear."""

    def __init__(self, layer_sizes, activation="tanh", steps=None, params=None):
        sizes = [int(s) for s in layer_sizes]
        if len(sizes) < 2 or min(sizes) < 1:
            raise ValueError(f"layer_sizes must have >= 2 positive entries, got {layer_sizes}")
        if activation not in ACTIVATIONS:
            raise ValueError(f"unknown activation {activation!r}")
        if steps is not None and (len(sizes) < 3 or int(steps) < 1):
            raise ValueError("step modulation needs a hidden layer and steps >= 1")
        self.layer_sizes = sizes
        self.activation = activation
        self.steps = None if steps is None else int(steps)

        self._slices = []
        off = 0
        for n_in, n_out in zip(sizes[:-1], sizes[1:]):
            w = slice(off, off + n_in * n_out)
            off += n_in * n_out
            b = slice(off, off + n_out)
            off += n_out
            self._slices.append((w, b))
        self._mod = None
        if self.steps is not None:
            h1 = sizes[1] * self.steps
            self._mod = (slice(off, off + h1), slice(off + h1, off + 2 * h1))
            off += 2 * h1
        self.n_params = off

        if params is None:
            self.params = np.zeros(off)
        else:
            params = np.asarray(params, dtype=np.float64)
            if params.shape != (off,):
                raise ValueError(f"expected {off} parameters, got shape {params.shape}")
            self.params = params.copy()

    # -- parameter views -------------------------------------------------
    def weight(self, i, params=None):
        p = self.params if params is None else params
        n_in, n_out = self.layer_sizes[i], self.layer_sizes[i + 1]
        return p[self._slices[i][0]].reshape(n_out, n_in)

    def bias(self, i, params=None):
        p = self.params if params is None else params
        return p[self._slices[i][1]]

    def modulation(self, params=None):
        p = self.params if params is None else params
        h1 = self.layer_sizes[1]
        gain = p[self._mod[0]].reshape(self.steps, h1)
        shift = p[self._mod[1]].reshape(self.steps, h1)
        return gain, shift

    def init(self, rng, zero_last=False):
        """Glorot-uniform weights, zero biases and zero step modulation."""
        p = np.zeros(self.n_params)
        for i, (n_in, n_out) in enumerate(zip(self.layer_sizes[:-1], self.layer_sizes[1:])):
            if zero_last and i == len(self._slices) - 1:
                continue
            lim = np.sqrt(6.0 / (n_in + n_out))
            p[self._slices[i][0]] = rng.uniform(-lim, lim, size=n_in * n_out)
        self.params = p
        return self

    def copy(self):
        return DenseNet(self.layer_sizes, self.activation, self.steps, self.params)

    # -- evaluation ------------------------------------------------------
    def _check(self, x, step):
        if not np.all(np.isfinite(self.params)):
            raise FloatingPointError("non-finite network parameter")
        x = np.asarray(x, dtype=np.float64)
        single = x.ndim == 1
        x2 = x[None, :] if single else x
        if x2.ndim != 2 or x2.shape[1] != self.layer_sizes[0]:
            raise ValueError(f"input width {x2.shape[-1]} != {self.layer_sizes[0]}")
        steps = None
        if self.steps is not None:
            if step is None:
                raise ValueError("step index required for a step-modulated net")
            steps = np.broadcast_to(np.asarray(step, dtype=np.int64), (x2.shape[0],))
            if steps.min() < 0 or steps.max() >= self.steps:
                raise ValueError(f"step must lie in [0, {self.steps})")
        return x2, steps, single

    def forward_cache(self, x, step=None):
        x2, steps, single = self._check(x, step)
        hs, zs = [x2], []
        h = x2
        n_layers = len(self._slices)
        z0 = None
        for i in range(n_layers):
            z = h @ self.weight(i).T + self.bias(i)
            if i == 0 and steps is not None:
                gain, shift = self.modulation()
                z0 = z
                z = z * (1.0 + gain[steps]) + shift[steps]
            zs.append(z)
            if i < n_layers - 1:
                h = _act(self.activation, z)
                hs.append(h)
            else:
                h = z
        cache = (hs, zs, z0, steps)
        return (h[0] if single else h), cache

    def forward(self, x, step=None):
        return self.forward_cache(x, step)[0]

    def backward_cache(self, cache, cotangent):
        """Gradient of sum(output * cotangent) w.r.t. params, summed over the batch."""
        hs, zs, z0, steps = cache
        g = np.asarray(cotangent, dtype=np.float64)
        if g.ndim == 1:
            g = g[None, :]
        if g.shape != zs[-1].shape:
            raise ValueError(f"cotangent shape {g.shape} != output shape {zs[-1].shape}")
        grad = np.zeros(self.n_params)
        n_layers = len(self._slices)
        dz = g
        for i in range(n_layers - 1, -1, -1):
            if i < n_layers - 1:
                dz = dz * _act_grad(self.activation, zs[i], hs[i + 1])
            if i == 0 and steps is not None:
                gain, _ = self.modulation()
                dgain = np.zeros((self.steps, self.layer_sizes[1]))
                dshift = np.zeros_like(dgain)
                np.add.at(dgain, steps, dz * z0)
                np.add.at(dshift, steps, dz)
                grad[self._mod[0]] = dgain.ravel()
                grad[self._mod[1]] = dshift.ravel()
                dz = dz * (1.0 + gain[steps])
            grad[self._slices[i][0]] = (dz.T @ hs[i]).ravel()
            grad[self._slices[i][1]] = dz.sum(axis=0)
            if i > 0:
                dz = dz @ self.weight(i)
        return grad


def param_count(layer_sizes, steps=None):
    n = sum((a + 1) * b for a, b in zip(layer_sizes[:-1], layer_sizes[1:]))
    if steps is not None:
        n += 2 * layer_sizes[1] * steps
    return n


def forward(net, x, step=None):
    return net.forward(x, step)


def backward(net, x, step, cotangent):
    _, cache = net.forward_cache(x, step)
    return net.backward_cache(cache, cotangent)


@dataclass
class AdamState:
    m: np.ndarray
    v: np.ndarray
    lr: float = 1e-3
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    step: int = 0
    skipped: int = 0

    @classmethod
    def zeros(cls, n, **kw):
        return cls(np.zeros(n), np.zeros(n), **kw)


def adam_step(params, grad, opt: AdamState):
    """One bias-corrected Adam update; returns ``(new_params, new_state)``.

    A non-finite gradient leaves params and moments untouched and bumps
    ``skipped`` instead of ``step``.
    """
    grad = np.asarray(grad, dtype=np.float64)
    if grad.shape != params.shape or opt.m.shape != params.shape:
        raise ValueError("params, grad and optimizer moments must be aligned")
    if not np.all(np.isfinite(grad)):
        return params, replace(opt, skipped=opt.skipped + 1)
    k = opt.step + 1
    m = opt.beta1 * opt.m + (1.0 - opt.beta1) * grad
    v = opt.beta2 * opt.v + (1.0 - opt.beta2) * grad * grad
    m_hat = m / (1.0 - opt.beta1 ** k)
    v_hat = v / (1.0 - opt.beta2 ** k)
    new = params - opt.lr * m_hat / (np.sqrt(v_hat) + opt.eps)
    return new, replace(opt, m=m, v=v, step=k)


@dataclass
class GradCheck:
    max_rel_error: float
    worst_index: int
    analytic: np.ndarray = field(repr=False)
    numeric: np.ndarray = field(repr=False)


def finite_diff_check(net, x, step, loss, eps=1e-5, analytic=None, floor=1e-6):
    """Compare the analytic parameter gradient with central differences.

    ``loss(output) -> (value, d_value/d_output)``. Relative error per
    coordinate is ``|a - n| / max(|n|, floor)``. Pass ``analytic`` to audit
    an externally supplied gradient instead of the net's own.
    """
    if not 1e-7 <= eps <= 1e-3:
        raise ValueError("eps must lie in [1e-7, 1e-3]")
    out, cache = net.forward_cache(x, step)
    if analytic is None:
        analytic = net.backward_cache(cache, loss(out)[1])
    base = net.params.copy()
    numeric = np.empty(net.n_params)
    try:
        for i in range(net.n_params):
            net.params[i] = base[i] + eps
            up = loss(net.forward(x, step))[0]
            net.params[i] = base[i] - eps
            down = loss(net.forward(x, step))[0]
            net.params[i] = base[i]
            numeric[i] = (up - down) / (2.0 * eps)
    finally:
        net.params = base
    rel = np.abs(analytic - numeric) / np.maximum(np.abs(numeric), floor)
    worst = int(np.argmax(rel))
    return GradCheck(float(rel[worst]), worst, analytic, numeric)
