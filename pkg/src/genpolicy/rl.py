"""Rollouts and clipped-surrogate policy optimisation."""
from __future__ import annotations

from dataclasses import asdict, dataclass, field

import numpy as np

from .agent import gaussian_log_prob, sample_action
from .nets import AdamState, adam_step
from .samplers import TransitionError, initial_state, transition
from .transforms import SmootherState, smooth


@dataclass
class PpoConfig:
    clip_eps: float = 0.2
    value_coef: float = 0.5
    batch_size: int = 256
    policy_updates: int = 5
    reward_updates: int = 5
    iterations: int = 1000
    policy_lr: float = 1e-3
    reward_lr: float = 1e-3
    policy_betas: tuple = (0.9, 0.999)
    reward_betas: tuple = (0.5, 0.999)
    normalize_advantages: bool = False

    def __post_init__(self):
        self.policy_betas = tuple(self.policy_betas)
        self.reward_betas = tuple(self.reward_betas)
        if self.clip_eps <= 0:
            raise ValueError("clip_eps must be > 0")
        if self.value_coef < 0:
            raise ValueError("value_coef must be >= 0")
        if self.batch_size < 1:
            raise ValueError("batch_size must be >= 1")

    def to_dict(self):
        d = asdict(self)
        d["policy_betas"] = list(self.policy_betas)
        d["reward_betas"] = list(self.reward_betas)
        return d


@dataclass
class Rollout:
    """A batch of N trajectories of length T (arrays are step-major)."""
    features: np.ndarray        # (T, N, F)
    raw: np.ndarray             # (T, N, A) sampled raw actions
    smoothed: np.ndarray        # (T, N, A) executed pre-mapping actions
    log_probs: np.ndarray       # (T, N)
    values: np.ndarray          # (T, N)
    actions: list               # T dicts of (N,) arrays
    classes: np.ndarray
    final: object
    rewards: np.ndarray | None = None
    lam: np.ndarray | None = None
    aborted: bool = False
    extra: dict = field(default_factory=dict)

    @property
    def T(self):
        return self.features.shape[0]

    @property
    def n(self):
        return self.features.shape[1]


def rollout(world, agent, T, classes, rng, reward_fn=None, beta=0.0, inference=False,
            partner=None, lam=None, transition_fn=None):
    """Run T transitions from the initial state, recording everything PPO needs.

    With ``partner`` (a frozen agent) the executed raw action is
    ``(1 - lam) * partner_mean + lam * raw`` where ``raw`` comes from ``agent``.
    """
    step = transition_fn or (lambda s, a, r: transition(s, a, world, r))
    classes = np.asarray(classes, dtype=np.int64)
    state = initial_state(agent.paradigm, world, classes, rng, T)
    smoother = SmootherState(beta)
    feats, raws, smooths, lps, vals, acts = [], [], [], [], [], []
    aborted = False
    for t in range(T):
        f = agent.features(state)
        mean, v = agent.forward(f, t)
        a, lp = sample_action(agent, mean, rng, inference=inference)
        executed = a
        if partner is not None:
            pmean, _ = partner.forward(partner.features(state), t)
            executed = blend_raw(pmean, a, lam)
        s_raw, smoother = smooth(smoother, executed)
        action = agent.to_action(s_raw, state)
        feats.append(f)
        raws.append(a)
        smooths.append(s_raw)
        lps.append(lp)
        vals.append(v)
        acts.append(action)
        try:
            state = step(state, action, rng)
        except TransitionError:
            aborted = True
            break
    ro = Rollout(np.array(feats), np.array(raws), np.array(smooths), np.array(lps), np.array(vals),
                 acts, classes, state, lam=lam, aborted=aborted)
    if reward_fn is not None and not aborted:
        ro.rewards = np.asarray(reward_fn(state), dtype=np.float64)
    return ro


def blend_raw(a, a_prime, lam):
    lam = np.asarray(lam, dtype=np.float64)
    if lam.ndim == 1:
        lam = lam[:, None]
    return (1.0 - lam) * a + lam * a_prime


def advantage(ro):
    """A_t = R - V(s_t), terminal reward, no discounting."""
    return ro.rewards[None, :] - ro.values


@dataclass
class PpoLoss:
    loss: float
    grad: np.ndarray
    ratios: np.ndarray
    surrogate: np.ndarray
    unclipped: np.ndarray
    value_loss: float
    excluded: int


def ppo_loss(ro, agent, eps=0.2, c=0.5, normalize=False):
    """Negative clipped surrogate plus value regression, and its parameter gradient.

    Old log-probs and values are the ones recorded at rollout time.
    """
    T, N, F = ro.features.shape
    A = agent.action_dim
    X = ro.features.reshape(T * N, F)
    steps = np.repeat(np.arange(T), N)
    out, cache = agent.forward_cache(X, steps)
    mean, V = out[:, :A], out[:, A]
    raw = ro.raw.reshape(T * N, A)
    old = ro.log_probs.reshape(-1)
    R = np.tile(ro.rewards, T)
    adv = advantage(ro).reshape(-1)
    if normalize and adv.size > 1:
        adv = (adv - adv.mean()) / (adv.std() + 1e-8)
    with np.errstate(over="ignore", invalid="ignore"):
        ratio = np.exp(gaussian_log_prob(raw, mean, agent.sigma) - old)
    valid = np.isfinite(ratio)
    M = max(int(valid.sum()), 1)
    r = np.where(valid, ratio, 1.0)
    s1 = r * adv
    s2 = np.clip(r, 1.0 - eps, 1.0 + eps) * adv
    surr = np.minimum(s1, s2)
    obj = surr - c * (V - R) ** 2
    loss = -float(np.sum(np.where(valid, obj, 0.0)) / M)

    active = (s1 <= s2) & valid
    dmean = -(np.where(active, adv * r, 0.0)[:, None] * (raw - mean) / agent.sigma ** 2) / M
    dV = np.where(valid, 2.0 * c * (V - R), 0.0) / M
    cot = np.concatenate([dmean, dV[:, None]], axis=1)
    grad = agent.net.backward_cache(cache, cot)
    return PpoLoss(loss, grad, ratio.reshape(T, N), surr.reshape(T, N), s1.reshape(T, N),
                   float(np.mean((V - R)[valid] ** 2)) if valid.any() else float("nan"),
                   int((~valid).sum()))


def ppo_update(ro, agent, opt, cfg):
    """``cfg.policy_updates`` Adam steps on the PPO loss for one rollout batch."""
    losses = []
    for _ in range(cfg.policy_updates):
        res = ppo_loss(ro, agent, cfg.clip_eps, cfg.value_coef, cfg.normalize_advantages)
        agent.net.params, opt = adam_step(agent.net.params, res.grad, opt)
        losses.append(res.loss)
    return opt, float(np.mean(losses)) if losses else float("nan")


def policy_optimizer(agent, cfg):
    return AdamState.zeros(agent.net.n_params, lr=cfg.policy_lr,
                           beta1=cfg.policy_betas[0], beta2=cfg.policy_betas[1])


def reward_optimizer(model, cfg):
    return AdamState.zeros(model.net.n_params, lr=cfg.reward_lr,
                           beta1=cfg.reward_betas[0], beta2=cfg.reward_betas[1])
