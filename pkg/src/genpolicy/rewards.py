"""Terminal rewards: adversarial discriminator, analytic fidelity proxy, batch metric."""
from __future__ import annotations

import logging

import numpy as np
from scipy.special import expit

from .metrics import frechet_to_reference
from .nets import AdamState, DenseNet, adam_step

log = logging.getLogger(__name__)

REWARD_KINDS = ("adversarial", "fidelity_proxy", "metric")
X_SCALE = 4.0
# float64 expit rounds to exactly 1 beyond ~37; capping keeps rewards strictly inside (0, 1)
LOGIT_CAP = 30.0


def encode_samples(world, samples, classes):
    """Discriminator input: flattened sample (one-hot grid or scaled point) + class one-hot."""
    classes = np.asarray(classes)
    n = len(classes)
    onehot = np.zeros((n, world.C))
    onehot[np.arange(n), classes] = 1.0
    if world.kind == "discrete":
        tok = np.asarray(samples)
        flat = np.zeros((n, world.G * world.V))
        rows, cols = np.nonzero(tok >= 0)
        flat[rows, cols * world.V + tok[rows, cols]] = 1.0
    else:
        flat = np.asarray(samples, dtype=np.float64) / X_SCALE
    return np.concatenate([flat, onehot], axis=1)


class RewardModel:
    """Class-conditional real-vs-fake classifier; reward is its real-probability."""

    def __init__(self, world, hidden=(128, 128), activation="tanh", rng=None, net=None):
        self.world = world
        width = (world.G * world.V if world.kind == "discrete" else 2) + world.C
        if net is None:
            net = DenseNet([width, *hidden, 1], activation)
            if rng is not None:
                net.init(rng)
        self.net = net

    def logits(self, samples, classes):
        return self.net.forward(encode_samples(self.world, samples, classes))[:, 0]

    def __call__(self, samples, classes):
        return expit(np.clip(self.logits(samples, classes), -LOGIT_CAP, LOGIT_CAP))


def adv_reward(model, samples, classes):
    return model(samples, classes)


def bce_loss_and_grad(model, real, fake, real_label=1.0):
    """Sum of the mean BCE over the real batch (label ``real_label``) and the fake batch (label 0)."""
    xr = encode_samples(model.world, *real)
    xf = encode_samples(model.world, *fake)
    x = np.concatenate([xr, xf])
    y = np.concatenate([np.full(len(xr), real_label), np.zeros(len(xf))])
    wts = np.concatenate([np.full(len(xr), 1.0 / len(xr)), np.full(len(xf), 1.0 / len(xf))])
    out, cache = model.net.forward_cache(x)
    logit = out[:, 0]
    loss = float(np.sum(wts * (np.logaddexp(0.0, logit) - y * logit)))
    grad = model.net.backward_cache(cache, (wts * (expit(logit) - y))[:, None])
    return loss, grad


def disc_update(model, real, fake, opt: AdamState, label_smoothing=False):
    """One Adam step on the discriminator; ``real``/``fake`` are (samples, classes) pairs.

    Returns ``(opt, loss)``; a non-finite loss skips the step (``opt.skipped`` grows).
    """
    if len(real[1]) == 0 or len(fake[1]) == 0:
        raise ValueError("real and fake batches must be non-empty")
    loss, grad = bce_loss_and_grad(model, real, fake, 0.9 if label_smoothing else 1.0)
    if not np.isfinite(loss):
        log.warning("non-finite discriminator loss; update skipped")
        return AdamState(**{**opt.__dict__, "skipped": opt.skipped + 1}), loss
    model.net.params, opt = adam_step(model.net.params, grad, opt)
    return opt, loss


class FidelityReward:
    """sigmoid((log p(x | class) - median) / scale) with statistics from target draws."""

    def __init__(self, world, n_ref=10_000, seed=0):
        rng = np.random.default_rng([seed, 0xF1D])
        classes = rng.integers(0, world.C, size=n_ref)
        ref = world.sample(n_ref, classes, rng)
        lp = world.log_density(ref, classes)
        self.world = world
        self.median = float(np.median(lp))
        self.scale = float(np.std(lp)) or 1.0

    def __call__(self, samples, classes):
        lp = self.world.log_density(samples, classes)
        return expit((lp - self.median) / self.scale)


def fidelity_reward(fid, samples, classes):
    return fid(samples, classes)


def metric_reward(samples, reference):
    """Negative Frechet distance of the whole set to ``reference = (mean, cov)``; one value for the batch."""
    samples = np.asarray(samples, dtype=np.float64)
    if len(samples) < 32:
        raise ValueError("metric reward needs at least 32 samples")
    if np.linalg.matrix_rank(np.cov(samples, rowvar=False), tol=1e-9) < 2:
        log.warning("degenerate sample covariance; regularized with 1e-6 I")
    return -frechet_to_reference(samples, *reference)
