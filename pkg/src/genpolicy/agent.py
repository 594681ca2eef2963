"""Policy/value agent: state features, Gaussian exploration, shared trunk."""
from __future__ import annotations

from dataclasses import asdict, dataclass

import numpy as np

from .nets import DenseNet
from .samplers import ACTION_KEYS, STOCHASTIC
from .transforms import ActionContext, activate, clamp_variant, default_schedule, init_offset

LOG_2PI = np.log(2.0 * np.pi)
FEATURE_CLIP = 10.0


@dataclass
class AgentConfig:
    hidden: tuple = (64, 64)
    activation: str = "tanh"
    sigma: float = 0.6
    adaptive: bool = True
    step_cond: bool = True
    output: str = "activation"
    init_from_schedule: bool = True

    def __post_init__(self):
        self.hidden = tuple(int(h) for h in self.hidden)
        if self.sigma <= 0:
            raise ValueError("sigma must be positive")
        if self.output not in ("activation", "clamp"):
            raise ValueError(f"output must be 'activation' or 'clamp', got {self.output!r}")

    def to_dict(self):
        d = asdict(self)
        d["hidden"] = list(self.hidden)
        return d


class FeatureLayout:
    """Slots of the feature vector: step, class, payload (in that order)."""

    def __init__(self, paradigm, world, T):
        self.paradigm, self.T = paradigm, T
        self.step = slice(0, 1 + T)
        self.cls = slice(self.step.stop, self.step.stop + world.C)
        if paradigm in ("diffusion", "flow"):
            n = 3
        elif paradigm == "maskgit":
            n = 2 + world.V
        else:
            n = world.G * world.V
        self.payload = slice(self.cls.stop, self.cls.stop + n)
        self.size = self.payload.stop


def _committed_logp(world, tokens, classes):
    """Mean over committed positions of log p(x_i | other committed tokens, class)."""
    count = (tokens >= 0).sum(axis=1)
    total = world.committed_logprob(tokens, classes).sum(axis=1)
    return np.where(count > 0, total / np.maximum(count, 1), 0.0)


def featurize(state, world, layout, adaptive=True, step_cond=True, cache=None):
    """Feature matrix (N, layout.size).

    ``cache`` (a dict) memoises the committed-token log-probability across calls
    that see the very same token array, as happens once a grid is complete.
    """
    n = state.n
    f = np.zeros((n, layout.size))
    if step_cond:
        f[:, layout.step.start] = state.t / state.T
        if state.t < state.T:
            f[:, layout.step.start + 1 + state.t] = 1.0
    f[np.arange(n), layout.cls.start + state.classes] = 1.0
    if not adaptive:
        return f
    p = layout.payload.start
    if state.paradigm in ("diffusion", "flow"):
        f[:, p:p + 2] = np.clip(state.x, -FEATURE_CLIP, FEATURE_CLIP)
        scale = world.kappa_max if state.paradigm == "diffusion" else 1.0
        f[:, p + 2] = state.kappa / scale
    elif state.paradigm == "maskgit":
        tok = state.tokens
        f[:, p] = (tok < 0).mean(axis=1)
        for v in range(world.V):
            f[:, p + 1 + v] = (tok == v).sum(axis=1) / world.G
        if cache is not None and cache.get("tokens") is tok and cache.get("classes") is state.classes:
            lp = cache["lp"]
        else:
            lp = _committed_logp(world, tok, state.classes)
            if cache is not None:
                cache.update(tokens=tok, classes=state.classes, lp=lp)
        f[:, p + 1 + world.V] = np.clip(lp / np.log(world.V), -FEATURE_CLIP, FEATURE_CLIP)
    else:
        tok = state.tokens
        rows, cols = np.nonzero(tok >= 0)
        f[rows, p + cols * world.V + tok[rows, cols]] = 1.0
    return f


class PolicyAgent:
    """Shared trunk; the last layer's first A outputs are the raw action mean, the final one the value."""

    def __init__(self, paradigm, world, T, config=None, schedule=None, rng=None, net=None):
        self.paradigm = paradigm
        self.world = world
        self.T = int(T)
        self.config = config or AgentConfig()
        self.layout = FeatureLayout(paradigm, world, self.T)
        self.action_dim = len(ACTION_KEYS[paradigm])
        if schedule is None and self.config.init_from_schedule:
            schedule = default_schedule(paradigm, vocab_size=getattr(world, "V", None))
        self.schedule = schedule if self.config.init_from_schedule else None
        if net is None:
            sizes = [self.layout.size, *self.config.hidden, self.action_dim + 1]
            net = DenseNet(sizes, self.config.activation, self.T if self.config.step_cond else None)
            if rng is not None:
                net.init(rng, zero_last=True)
        self.net = net
        self._cache = {}

    @property
    def sigma(self):
        return self.config.sigma

    def features(self, state):
        return featurize(state, self.world, self.layout, self.config.adaptive, self.config.step_cond,
                         self._cache)

    def _steps(self, t):
        return t if self.config.step_cond else None

    def forward(self, features, t):
        out = self.net.forward(features, self._steps(t))
        return out[..., :self.action_dim], out[..., self.action_dim]

    def forward_cache(self, features, t):
        out, cache = self.net.forward_cache(features, self._steps(t))
        return out, cache

    def context(self, state):
        return ActionContext(self.paradigm, state.t, state.T, kappa=state.kappa,
                             vocab_size=getattr(self.world, "V", None),
                             kappa_max=getattr(self.world, "kappa_max", 1000),
                             delta=getattr(self.world, "delta", 1e-4))

    def to_action(self, raw, state):
        """Range-map a (smoothed) raw vector, adding the schedule offset first."""
        ctx = self.context(state)
        raw = np.atleast_2d(raw)
        if self.schedule is not None:
            raw = raw + init_offset(self.schedule, ctx, self.config.output)
        if self.config.output == "clamp":
            return clamp_variant(raw, ctx)
        return activate(raw, ctx)

    def copy(self):
        return PolicyAgent(self.paradigm, self.world, self.T, self.config, self.schedule, net=self.net.copy())


def policy_mean(agent, features, t):
    return agent.forward(features, t)[0]


def value(agent, features, t):
    return agent.forward(features, t)[1]


def gaussian_log_prob(a, mean, sigma):
    z = (a - mean) / sigma
    return -0.5 * np.sum(z * z, axis=-1) - a.shape[-1] * (np.log(sigma) + 0.5 * LOG_2PI)


def sample_action(agent, mean, rng, inference=False):
    """Draw raw = mean + sigma * z; in inference mode return the mean with log-prob 0."""
    mean = np.asarray(mean, dtype=np.float64)
    if inference:
        return mean.copy(), np.zeros(mean.shape[:-1])
    a = mean + agent.sigma * rng.standard_normal(mean.shape)
    return a, gaussian_log_prob(a, mean, agent.sigma)


def is_stochastic(paradigm):
    return paradigm in STOCHASTIC
