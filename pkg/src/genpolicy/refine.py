"""Inference-time refinement: best-of-(M+1) by reward and value-guided lookahead."""
from __future__ import annotations

import numpy as np

from .rl import rollout
from .samplers import STOCHASTIC, transition


def value_scorer(agent, reward_model=None):
    """Score candidate next states by V(s); terminal states go to ``reward_model`` when given.

    The value head is only defined for steps 0..T-1, so a terminal state has no value
    estimate of its own; its reward is the quantity V was regressed onto.
    """
    def score(state):
        if state.t >= state.T:
            if reward_model is None:
                return np.zeros(state.n)
            return reward_model(state.sample(), state.classes)
        _, v = agent.forward(agent.features(state), state.t)
        return v
    return score


def lookahead_step(state, action, world, K, rng, score, select="value"):
    """Draw K candidate next states and keep, per trajectory, the best-scored one.

    Candidate 0 consumes ``rng`` itself, so K = 1 is a plain transition. Ties
    go to the lowest candidate index. ``select="random"`` draws the same
    candidates but keeps a uniformly chosen one (the no-value control).
    """
    if state.paradigm not in STOCHASTIC:
        raise ValueError("lookahead needs a stochastic transition (maskgit or ar)")
    if K < 1:
        raise ValueError("K must be >= 1")
    first = transition(state, action, world, rng)
    if K == 1:
        return first
    subs = rng.spawn(K - 1)
    cands = [first] + [transition(state, action, world, r) for r in subs]
    if select == "random":
        best = rng.integers(0, K, size=state.n)
    else:
        scores = np.stack([score(c) for c in cands])
        best = np.argmax(scores, axis=0)
    tokens = np.stack([c.tokens for c in cands])[best, np.arange(state.n)]
    out = first.take(slice(None))
    out.tokens = tokens
    return out


def lookahead_transition(world, agent, K, reward_model=None, select="value"):
    score = value_scorer(agent, reward_model)
    return lambda s, a, r: lookahead_step(s, a, world, K, r, score, select)


def refine_generate(world, agent, reward_model, T, classes, rng, M=3, K=1, lookahead=False,
                    beta=0.0, partner=None, lam=None):
    """Run M + 1 inference generations and keep, per sample, the highest-reward one.

    Returns ``(best_samples, best_rewards, trial_rewards)``; trial 0 uses ``rng``
    directly, trial i >= 1 its i-th spawned child stream, so trial sets nest in M.
    """
    if lookahead and agent.paradigm not in STOCHASTIC:
        raise ValueError("lookahead refused: state transition is deterministic for ODE paradigms")
    step = lookahead_transition(world, agent, K, reward_model) if lookahead and K > 1 else None
    streams = [rng] + (rng.spawn(M) if M > 0 else [])
    best_x, best_r, trials = None, None, []
    for r in streams:
        ro = rollout(world, agent, T, classes, r, beta=beta, inference=True,
                     partner=partner, lam=lam, transition_fn=step)
        x = ro.final.sample()
        rew = reward_model(x, ro.classes)
        trials.append(rew)
        if best_x is None:
            best_x, best_r = x.copy(), rew.copy()
        else:
            better = rew > best_r
            best_x[better] = x[better]
            best_r = np.where(better, rew, best_r)
    return best_x, best_r, np.array(trials)
