"""Per-paradigm transition functions of the generation MDP.

States are batched: every trajectory in a :class:`State` shares the step
counter ``t``. Actions are dicts of per-trajectory arrays keyed by
:data:`ACTION_KEYS`. Token grids use ``-1`` for masked / not yet generated.
"""
from __future__ import annotations

from dataclasses import dataclass, replace
from itertools import product

import numpy as np
from scipy.special import logsumexp

PARADIGMS = ("maskgit", "ar", "diffusion", "flow")
ACTION_KEYS = {
    "maskgit": ("m", "tau", "zeta", "w"),
    "ar": ("tau", "w", "k", "rho"),
    "diffusion": ("kappa", "w"),
    "flow": ("kappa", "w"),
}
STOCHASTIC = ("maskgit", "ar")
TAU_MIN = 1e-6


class TransitionError(ValueError):
    """Raised when an action violates a transition precondition."""


@dataclass
class State:
    paradigm: str
    t: int
    T: int
    classes: np.ndarray
    tokens: np.ndarray | None = None
    x: np.ndarray | None = None
    kappa: np.ndarray | None = None

    @property
    def n(self):
        return len(self.classes)

    @property
    def done(self):
        return self.t >= self.T

    def sample(self):
        """The generated sample carried by the state (grid or 2-D point)."""
        return self.tokens if self.paradigm in STOCHASTIC else self.x

    def take(self, idx):
        pick = lambda a: None if a is None else a[idx]
        return replace(self, classes=self.classes[idx], tokens=pick(self.tokens),
                       x=pick(self.x), kappa=pick(self.kappa))


def guide(cond, uncond, w):
    """Classifier-free guidance: (1 + w) * cond - w * uncond."""
    cond = np.asarray(cond, dtype=np.float64)
    if np.any(np.asarray(w) < 0):
        raise ValueError("guidance scale must be >= 0")
    return (1.0 + w) * cond - w * np.asarray(uncond, dtype=np.float64)


def _col(a, n):
    return np.broadcast_to(np.asarray(a, dtype=np.float64), (n,))


def initial_state(paradigm, world, classes, rng, T):
    classes = np.atleast_1d(np.asarray(classes, dtype=np.int64))
    n = len(classes)
    if paradigm not in PARADIGMS:
        raise ValueError(f"unknown paradigm {paradigm!r}")
    if paradigm in STOCHASTIC:
        if paradigm == "ar" and T != world.G:
            raise ValueError("autoregressive decoding needs T == grid size")
        return State(paradigm, 0, T, classes, tokens=np.full((n, world.G), -1, dtype=np.int64))
    x = rng.standard_normal((n, 2))
    k0 = float(world.kappa_max) if paradigm == "diffusion" else 1.0
    return State(paradigm, 0, T, classes, x=x, kappa=np.full(n, k0))


# -- discrete token distributions -----------------------------------------

def guided_log_probs(world, tokens, classes, w, tau):
    """Per-position log-probabilities after guidance (logit space) and temperature.

    Returns (N, G, V); rows for observed positions are meaningless zeros.
    """
    n = tokens.shape[0]
    masked = tokens < 0
    with np.errstate(divide="ignore"):
        lc = np.log(world.token_marginals(tokens, classes))
        lu = np.log(world.token_marginals(tokens, None))
    w3 = _col(w, n)[:, None, None]
    tau3 = np.maximum(_col(tau, n), TAU_MIN)[:, None, None]
    logits = np.where(masked[:, :, None], guide(np.where(masked[:, :, None], lc, 0.0),
                                                np.where(masked[:, :, None], lu, 0.0), w3), 0.0)
    logits = logits / tau3
    return logits - logsumexp(logits, axis=2, keepdims=True)


def truncate(probs, k, rho):
    """Top-k then top-p (nucleus) truncation of rows of ``probs``, renormalised.

    Nucleus keeps the smallest prefix (by descending probability) whose mass
    reaches ``rho``; the most probable token is always kept.
    """
    probs = np.atleast_2d(probs)
    n, V = probs.shape
    k = np.broadcast_to(np.asarray(k), (n,)).astype(np.int64)
    if np.any(k < 1):
        raise TransitionError("top-k needs k >= 1")
    rho = _col(rho, n)
    order = np.argsort(-probs, axis=1, kind="stable")
    sp = np.take_along_axis(probs, order, axis=1)
    rank = np.arange(V)[None, :]
    keep_sorted = rank < np.minimum(k, V)[:, None]
    sp = np.where(keep_sorted, sp, 0.0)
    mass = sp.sum(axis=1, keepdims=True)
    before = (np.cumsum(sp, axis=1) - sp) / mass
    keep_sorted &= (before < rho[:, None]) | (rank == 0)
    keep = np.zeros_like(keep_sorted)
    np.put_along_axis(keep, order, keep_sorted, axis=1)
    out = np.where(keep, probs, 0.0)
    return out / out.sum(axis=1, keepdims=True)


def ar_token_probs(world, tokens, classes, t, action):
    n = tokens.shape[0]
    logp = guided_log_probs(world, tokens, classes, action["w"], action["tau"])[:, t, :]
    return truncate(np.exp(logp), np.broadcast_to(action["k"], (n,)), action["rho"])


def _draw(probs, u):
    cdf = np.cumsum(probs, axis=-1)
    return np.minimum((u[..., None] > cdf).sum(axis=-1), probs.shape[-1] - 1)


def _mask_target(m, n_masked, G, t, T):
    target = np.minimum(np.floor(_col(m, len(n_masked)) * G + 0.5).astype(np.int64), n_masked - 1)
    target = np.maximum(target, 0)
    if t + 1 >= T:
        target[:] = 0
    return target


def _commit(tokens, sampled, conf, target):
    masked = tokens < 0
    G = tokens.shape[1]
    conf = np.where(masked, conf, np.inf)
    order = np.argsort(-conf, axis=1, kind="stable")
    rank = np.empty_like(order)
    np.put_along_axis(rank, order, np.arange(G)[None, :].repeat(len(tokens), 0), axis=1)
    commit = masked & (rank < (G - target)[:, None])
    return np.where(commit, sampled, tokens)


def maskgit_transition(state, action, world, rng):
    if state.done:
        raise TransitionError("trajectory already terminated")
    tokens = state.tokens
    n, G = tokens.shape
    masked = tokens < 0
    n_masked = masked.sum(axis=1)
    if not n_masked.any():
        return replace(state, t=state.t + 1)
    logp = guided_log_probs(world, tokens, state.classes, action["w"], action["tau"])
    sampled = _draw(np.exp(logp), rng.random((n, G)))
    conf = np.take_along_axis(logp, sampled[:, :, None], axis=2)[:, :, 0]
    gumbel = -np.log(-np.log(rng.random((n, G)) + 1e-300) + 1e-300)
    conf = conf + _col(action["zeta"], n)[:, None] * gumbel
    target = _mask_target(action["m"], n_masked, G, state.t, state.T)
    new = np.where((n_masked > 0)[:, None], _commit(tokens, sampled, conf, target), tokens)
    return replace(state, t=state.t + 1, tokens=new)


def ar_transition(state, action, world, rng):
    if state.done or state.t >= world.G:
        raise TransitionError("sequence already complete")
    probs = ar_token_probs(world, state.tokens, state.classes, state.t, action)
    tok = _draw(probs, rng.random(state.n))
    new = state.tokens.copy()
    new[:, state.t] = tok
    return replace(state, t=state.t + 1, tokens=new)


def diffusion_transition(state, action, world):
    """First-order deterministic (DDIM-form) step from kappa to kappa_next."""
    if state.done:
        raise TransitionError("trajectory already terminated")
    k, k2 = state.kappa, _col(action["kappa"], state.n)
    if np.any(k2 >= k) or np.any(k2 < 0):
        raise TransitionError("kappa_next must lie in [0, kappa_current)")
    eps = guide(world.eps_score(state.x, k, state.classes), world.eps_score(state.x, k, None),
                _col(action["w"], state.n)[:, None])
    ab, ab2 = world.alpha_bar(k)[:, None], world.alpha_bar(k2)[:, None]
    x0 = (state.x - np.sqrt(1.0 - ab) * eps) / np.sqrt(ab)
    x = np.sqrt(ab2) * x0 + np.sqrt(1.0 - ab2) * eps
    return replace(state, t=state.t + 1, x=x, kappa=k2.copy())


def flow_transition(state, action, world):
    """Euler step of dx/dkappa = v from kappa to kappa_next; the last step lands on 0."""
    if state.done:
        raise TransitionError("trajectory already terminated")
    k, k2 = state.kappa, _col(action["kappa"], state.n).copy()
    final = state.t + 1 >= state.T
    lo = 0.0 if final else world.delta
    if np.any(k2 >= k) or np.any(k2 < lo):
        raise TransitionError(f"kappa_next must lie in [{lo}, kappa_current)")
    v = guide(world.velocity(state.x, k, state.classes), world.velocity(state.x, k, None),
              _col(action["w"], state.n)[:, None])
    x = state.x + (k2 - k)[:, None] * v
    if final:
        k2[:] = 0.0
    return replace(state, t=state.t + 1, x=x, kappa=k2)


def transition(state, action, world, rng):
    p = state.paradigm
    if p == "maskgit":
        return maskgit_transition(state, action, world, rng)
    if p == "ar":
        return ar_transition(state, action, world, rng)
    if p == "diffusion":
        return diffusion_transition(state, action, world)
    return flow_transition(state, action, world)


def transition_support(world, paradigm, grid, cls, action, t, T):
    """Enumerate (next_grid, probability) for one deterministic-ranking step."""
    tokens = np.asarray(grid)[None, :]
    classes = None if cls is None else np.array([cls])
    act = {k: np.array([v]) for k, v in action.items()}
    if paradigm == "ar":
        probs = ar_token_probs(world, tokens, classes, t, act)[0]
        for v in np.flatnonzero(probs > 0):
            g = tokens[0].copy()
            g[t] = v
            yield tuple(int(a) for a in g), float(probs[v])
        return
    masked = np.flatnonzero(tokens[0] < 0)
    if len(masked) == 0:
        yield tuple(int(a) for a in tokens[0]), 1.0
        return
    logp = guided_log_probs(world, tokens, classes, act["w"], act["tau"])[0]
    target = _mask_target(act["m"], np.array([len(masked)]), world.G, t, T)
    for combo in product(*[np.flatnonzero(np.exp(logp[i]) > 0) for i in masked]):
        sampled = tokens.copy()
        sampled[0, masked] = combo
        lp = logp[masked, list(combo)]
        conf = np.zeros((1, world.G))
        conf[0, masked] = lp
        new = _commit(tokens, sampled, conf, target)[0]
        yield tuple(int(a) for a in new), float(np.exp(lp.sum()))
