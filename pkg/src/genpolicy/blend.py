"""Fidelity/diversity control: a second policy blended with a frozen one through a scalar lambda."""
from __future__ import annotations

import math

import numpy as np

from .evaluate import class_batch, generate, sample_metrics
from .rl import blend_raw, rollout
from .training import Trainer


def _check_lam(lam):
    lam = np.asarray(lam, dtype=np.float64)
    if np.any(~np.isfinite(lam)) or np.any(lam < 0.0) or np.any(lam > 1.0):
        raise ValueError("lambda must lie in [0, 1]")
    return lam


def blend_action(a, a_prime, lam):
    """(1 - lam) * a + lam * a_prime on raw, pre-smoothing actions."""
    a, a_prime = np.asarray(a, dtype=np.float64), np.asarray(a_prime, dtype=np.float64)
    if a.shape != a_prime.shape:
        raise ValueError(f"action shapes differ: {a.shape} vs {a_prime.shape}")
    return blend_raw(a, a_prime, _check_lam(lam))


def blend_reward(r, r_prime, lam):
    lam = _check_lam(lam)
    return (1.0 - lam) * np.asarray(r, dtype=np.float64) + lam * np.asarray(r_prime, dtype=np.float64)


class BlendedAgent:
    """Frozen original agent plus a trainable fidelity agent of the same shape."""

    def __init__(self, original, fidelity, lam=0.5):
        if original.net.layer_sizes != fidelity.net.layer_sizes:
            raise ValueError("original and fidelity agents must share an architecture")
        self.original, self.fidelity = original, fidelity
        self.lam = float(_check_lam(lam))

    def generate(self, T, classes, rng, beta=0.0, lam=None):
        lam = self.lam if lam is None else float(_check_lam(lam))
        return generate(self.original.world, self.fidelity, T, classes, rng, beta,
                        partner=self.original, lam=np.full(len(classes), lam))


class FidelityTrainer(Trainer):
    """Trains only the fidelity agent under the lambda-blended reward.

    The original agent and the adversarial reward model stay frozen; each
    trajectory draws its own lambda ~ U[0, 1].
    """

    def __init__(self, base: Trainer):
        cfg = base.cfg
        if base.reward_model is None:
            raise ValueError("fidelity training needs the adversarial reward model of the base run")
        self.cfg = cfg
        self.world = base.world
        self.schedule = base.schedule
        self.original = base.agent
        self.reward_model = base.reward_model
        self.base_iteration = base.iteration
        self.base_opts = (base.popt, base.ropt)
        self.agent = base.agent.copy()
        self.popt = type(base.popt).zeros(self.agent.net.n_params, lr=base.popt.lr,
                                          beta1=base.popt.beta1, beta2=base.popt.beta2)
        self.ropt = base.ropt
        self._fidelity = None
        self.iteration = 0
        self.start_metric = None
        self.stopped = None
        self.history = []

    def iteration_rng(self, i):
        return np.random.default_rng([self.cfg.seed, 13, i])

    def blended_reward(self, lam):
        def fn(state):
            x, c = state.sample(), state.classes
            return blend_reward(self.reward_model(x, c), self.fidelity(x, c), lam)
        return fn

    def collect(self, classes, rng):
        lam = rng.uniform(0.0, 1.0, size=len(classes))
        return rollout(self.world, self.agent, self.cfg.T, classes, rng, self.blended_reward(lam),
                       beta=self.cfg.smoothing_beta, partner=self.original, lam=lam)

    def update_reward_model(self, rng):
        return float("nan")

    def eval_metric(self):
        return None

    def diverged(self, row):
        if not math.isfinite(row["mean_reward"]):
            return "mean reward is not finite"
        return None

    def evaluate(self, n_per_class, rng, lam=1.0):
        classes = class_batch(self.world, n_per_class)
        x, _ = generate(self.world, self.agent, self.cfg.T, classes, rng, self.cfg.smoothing_beta,
                        partner=self.original, lam=np.full(len(classes), float(_check_lam(lam))))
        return sample_metrics(self.world, x, classes, self.cfg.eval.radius_multiplier, self.fidelity)

    def blended(self, lam=0.5):
        return BlendedAgent(self.original, self.agent, lam)


def train_fidelity_policy(cfg, frozen_checkpoint, iterations=None, ckpt_path=None, log_path=None):
    """Load a trained run, then train its fidelity partner; returns the FidelityTrainer."""
    from .checkpoint import load_trainer

    base = load_trainer(frozen_checkpoint) if isinstance(frozen_checkpoint, str) else frozen_checkpoint
    if isinstance(base, FidelityTrainer):
        trainer = base
    else:
        if cfg is not None:
            base.cfg = cfg
        trainer = FidelityTrainer(base)
    total = trainer.cfg.blend.iterations if iterations is None else iterations
    return trainer.run(total, log_path=log_path, ckpt_path=ckpt_path)


def lambda_sweep(trainer, lambdas, n_per_class, seed):
    """One metrics row per lambda; every lambda reuses the same generation seed."""
    rows = []
    for lam in lambdas:
        rng = np.random.default_rng([seed, 17])
        summary, _, _ = trainer.evaluate(n_per_class, rng, lam=lam)
        rows.append({"lambda": float(lam), **summary})
    return rows
