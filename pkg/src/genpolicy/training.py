"""Alternating policy / reward-model optimisation loop."""
from __future__ import annotations

import csv
import logging
import math
import os

import numpy as np

from .agent import PolicyAgent
from .evaluate import class_batch, generate, headline, sample_metrics
from .rewards import FidelityReward, RewardModel, disc_update, metric_reward
from .rl import policy_optimizer, ppo_update, reward_optimizer, rollout

log = logging.getLogger(__name__)

LOG_FIELDS = ("iteration", "mean_reward", "ppo_loss", "disc_loss", "eval_metric")


class Trainer:
    """Owns the world, agent, reward model and optimisers of one run.

    Every random draw of iteration ``i`` comes from ``default_rng([seed, 7, i])``,
    so a run resumed from a checkpoint replays the same streams.
    """

    def __init__(self, cfg, world=None):
        self.cfg = cfg
        self.world = world if world is not None else cfg.make_world()
        self.schedule = cfg.make_schedule()
        self.agent = PolicyAgent(cfg.paradigm, self.world, cfg.T, cfg.agent, self.schedule,
                                 rng=np.random.default_rng([cfg.seed, 1]))
        self.popt = policy_optimizer(self.agent, cfg.ppo)
        self.reward_model = None
        self.ropt = None
        if cfg.reward.kind == "adversarial":
            self.reward_model = RewardModel(self.world, cfg.reward.hidden, cfg.reward.activation,
                                            rng=np.random.default_rng([cfg.seed, 2]))
            self.ropt = reward_optimizer(self.reward_model, cfg.ppo)
        self._fidelity = None
        self.iteration = 0
        self.start_metric = None
        self.stopped = None
        self.history = []

    # -- rewards -------------------------------------------------------------
    @property
    def fidelity(self):
        if self._fidelity is None:
            self._fidelity = FidelityReward(self.world, self.cfg.reward.fidelity_samples, self.cfg.world.seed)
        return self._fidelity

    def reward_fn(self, state):
        x, c = state.sample(), state.classes
        kind = self.cfg.reward.kind
        if kind == "adversarial":
            return self.reward_model(x, c)
        if kind == "fidelity_proxy":
            return self.fidelity(x, c)
        ref = self.world.class_moments(None)
        return np.full(state.n, metric_reward(x, ref))

    # -- one iteration ---------------------------------------------------------
    def iteration_rng(self, i):
        return np.random.default_rng([self.cfg.seed, 7, i])

    def collect(self, classes, rng):
        return rollout(self.world, self.agent, self.cfg.T, classes, rng, self.reward_fn,
                       beta=self.cfg.smoothing_beta)

    def update_reward_model(self, rng):
        cfg = self.cfg
        if self.reward_model is None or cfg.ppo.reward_updates == 0:
            return float("nan")
        B = cfg.ppo.batch_size
        fc = rng.integers(0, self.world.C, size=B)
        fake = rollout(self.world, self.agent, cfg.T, fc, rng, beta=cfg.smoothing_beta).final.sample()
        rc = rng.integers(0, self.world.C, size=B)
        real = self.world.sample(B, rc, rng)
        losses = []
        for _ in range(cfg.ppo.reward_updates):
            self.ropt, loss = disc_update(self.reward_model, (real, rc), (fake, fc), self.ropt,
                                          cfg.reward.label_smoothing)
            losses.append(loss)
        return float(np.mean(losses))

    def eval_metric(self):
        rng = np.random.default_rng([self.cfg.seed, 9])
        e = self.cfg.eval
        summary, _, _ = self.evaluate(e.samples, rng)
        return headline(self.world, summary)

    def evaluate(self, n_per_class, rng, **kw):
        classes = class_batch(self.world, n_per_class)
        x, _ = generate(self.world, self.agent, self.cfg.T, classes, rng, self.cfg.smoothing_beta, **kw)
        return sample_metrics(self.world, x, classes, self.cfg.eval.radius_multiplier)

    def step(self):
        cfg = self.cfg
        i = self.iteration
        rng = self.iteration_rng(i)
        classes = rng.integers(0, self.world.C, size=cfg.ppo.batch_size)
        ro = self.collect(classes, rng)
        if ro.aborted:
            raise RuntimeError(f"rollout aborted by the environment at iteration {i}")
        mean_reward = float(np.mean(ro.rewards))
        self.popt, ploss = ppo_update(ro, self.agent, self.popt, cfg.ppo)
        dloss = self.update_reward_model(rng)
        metric = None
        if cfg.eval.every and (i + 1) % cfg.eval.every == 0:
            metric = self.eval_metric()
        self.iteration += 1
        row = {"iteration": i, "mean_reward": mean_reward, "ppo_loss": ploss,
               "disc_loss": dloss, "eval_metric": metric}
        self.history.append(row)
        return row

    def diverged(self, row):
        if not math.isfinite(row["mean_reward"]):
            return "mean reward is not finite"
        m = row["eval_metric"]
        if m is not None and self.start_metric is not None and self.start_metric > 0:
            if not math.isfinite(m) or m > 10.0 * self.start_metric:
                return f"eval metric {m:.4g} worsened more than 10x from {self.start_metric:.4g}"
        return None

    def run(self, iterations=None, log_path=None, ckpt_path=None, ckpt_every=None):
        from .checkpoint import save_checkpoint

        total = self.cfg.ppo.iterations if iterations is None else iterations
        every = self.cfg.checkpoint_every if ckpt_every is None else ckpt_every
        if self.start_metric is None and self.cfg.eval.every:
            self.start_metric = self.eval_metric()
        writer = None
        fh = None
        if log_path:
            new = not os.path.exists(log_path) or self.iteration == 0
            fh = open(log_path, "w" if new else "a", newline="")
            writer = csv.DictWriter(fh, fieldnames=LOG_FIELDS)
            if new:
                writer.writeheader()
        try:
            while self.iteration < total:
                row = self.step()
                if writer:
                    writer.writerow({k: "" if v is None else repr(v) for k, v in row.items()})
                    fh.flush()
                reason = self.diverged(row)
                if reason:
                    log.warning("early stop at iteration %d: %s", row["iteration"], reason)
                    self.stopped = reason
                    break
                if ckpt_path and every and self.iteration % every == 0:
                    save_checkpoint(ckpt_path, self)
        finally:
            if fh:
                fh.close()
        if ckpt_path:
            save_checkpoint(ckpt_path, self)
        return self


def train(cfg, iterations=None, world=None, **kw):
    return Trainer(cfg, world).run(iterations, **kw)
