"""Inference-mode generation and the metric report used by training logs and the CLI."""
from __future__ import annotations

import numpy as np

from .metrics import (MIN_FRECHET_SAMPLES, avg_nll, empirical_distribution, frechet_2d,
                      frechet_to_reference, mode_coverage, tv_distance)
from .rl import rollout
from .samplers import initial_state, transition
from .transforms import baseline_action


def generate(world, agent, T, classes, rng, beta=0.0, partner=None, lam=None, transition_fn=None):
    """Final samples of an inference-mode (mean-action) rollout."""
    ro = rollout(world, agent, T, classes, rng, beta=beta, inference=True, partner=partner,
                 lam=lam, transition_fn=transition_fn)
    return ro.final.sample(), ro


def baseline_generate(world, schedule, T, classes, rng):
    """Run a hand-crafted schedule; step ``s`` executes ``baseline_action(schedule, s + 1, T)``."""
    state = initial_state(schedule.paradigm, world, classes, rng, T)
    kmax = getattr(world, "kappa_max", 1000)
    for s in range(T):
        state = transition(state, baseline_action(schedule, s + 1, T, kmax), world, rng)
    return state.sample()


def class_batch(world, n_per_class):
    return np.repeat(np.arange(world.C), n_per_class)


def sample_metrics(world, samples, classes, radius_multiplier=1.0, fidelity=None):
    """Metrics for generated ``samples``; returns (summary dict, per-class rows, notes)."""
    rows, notes = [], []
    summary = {}
    n_min = min(int((classes == c).sum()) for c in range(world.C))
    for c in range(world.C):
        sel = classes == c
        xs = samples[sel]
        row = {"class": c, "n": int(sel.sum()), "avg_nll": avg_nll(xs, world, c)}
        if world.kind == "discrete":
            row["tv"] = tv_distance(empirical_distribution(world, xs), world.probs[c])
        else:
            if len(xs) >= MIN_FRECHET_SAMPLES:
                row["frechet"] = frechet_to_reference(xs, *world.class_moments(c))
            row["mode_cov"] = mode_coverage(xs, world, c, radius_multiplier)
        if fidelity is not None:
            row["fidelity"] = float(np.mean(fidelity(xs, np.full(len(xs), c))))
        rows.append(row)
    for key in ("avg_nll", "tv", "frechet", "mode_cov", "fidelity"):
        vals = [r[key] for r in rows if key in r]
        if len(vals) == len(rows):
            summary[key] = float(np.mean(vals))
    if world.kind != "discrete":
        if n_min < MIN_FRECHET_SAMPLES:
            notes.append(f"frechet omitted: {n_min} samples per class < {MIN_FRECHET_SAMPLES}")
        elif len(samples) >= MIN_FRECHET_SAMPLES:
            summary["frechet_pooled"] = frechet_to_reference(samples, *world.class_moments(None))
    else:
        notes.append("frechet omitted: not defined for discrete worlds")
    return summary, rows, notes


def headline(world, summary):
    key = "tv" if world.kind == "discrete" else "frechet"
    return summary.get(key, float("nan"))


def evaluate_agent(world, agent, T, n_per_class, rng, beta=0.0, partner=None, lam=None,
                   radius_multiplier=1.0, fidelity=None, transition_fn=None):
    classes = class_batch(world, n_per_class)
    x, _ = generate(world, agent, T, classes, rng, beta, partner, lam, transition_fn)
    return sample_metrics(world, x, classes, radius_multiplier, fidelity)


__all__ = ["generate", "baseline_generate", "class_batch", "sample_metrics", "headline", "evaluate_agent", "frechet_2d"]
