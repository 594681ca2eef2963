"""From raw policy output to executed action.

Hand-crafted schedules, EMA smoothing of raw outputs, and the two range
mappings (smooth activations or hard clamping).

Schedules are written with the unified step index ``t`` in ``1..T``; the
action executed at 0-based step ``s`` is ``baseline_action(schedule, s + 1, T)``.
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from scipy.special import expit, logit

from .samplers import ACTION_KEYS

RULES = {
    "maskgit": {
        "m": ("cosine", "arccos"),
        "tau": ("constant", "tau_decay"),
        "zeta": ("linear_down",),
        "w": ("linear_up", "cosine_power", "constant"),
    },
    "ar": {
        "tau": ("constant",),
        "w": ("constant", "linear_up"),
        "k": ("constant",),
        "rho": ("constant",),
    },
    "diffusion": {
        "kappa": ("uniform", "quadratic"),
        "w": ("constant", "cosine_power_kappa"),
    },
    "flow": {
        "kappa": ("linear",),
        "w": ("constant",),
    },
}


@dataclass(frozen=True)
class Rule:
    name: str
    C: float = 1.0
    C2: float = 1.0


def evaluate_rule(rule, t, T, kappa_max=1000, kappa_t=None):
    u = t / T
    n, C, C2 = rule.name, rule.C, rule.C2
    if n == "cosine":
        return np.cos(0.5 * np.pi * u)
    if n == "arccos":
        return 2.0 * np.arccos(u) / np.pi
    if n == "constant":
        return C
    if n == "tau_decay":
        return 0.5 + 0.8 * (1.0 - u)
    if n == "linear_down":
        return C * (1.0 - u)
    if n == "linear_up":
        return C * u
    if n == "cosine_power":
        return C * (1.0 - np.cos(np.pi * u ** C2)) / 2.0
    if n == "cosine_power_kappa":
        return C * (1.0 - np.cos(np.pi * (kappa_t / kappa_max) ** C2)) / 2.0
    if n == "uniform":
        return float(np.floor((1.0 - u) * kappa_max))
    if n == "quadratic":
        return float(np.floor((1.0 - u) ** 2 * kappa_max))
    if n == "linear":
        return 1.0 - u
    raise ValueError(f"unknown rule {n!r}")


@dataclass
class Schedule:
    paradigm: str
    rules: dict = field(default_factory=dict)

    def __post_init__(self):
        allowed = RULES.get(self.paradigm)
        if allowed is None:
            raise ValueError(f"unknown paradigm {self.paradigm!r}")
        for key, rule in self.rules.items():
            if key not in allowed or rule.name not in allowed[key]:
                raise ValueError(f"rule {rule.name!r} is not valid for {self.paradigm}.{key}")
        missing = set(ACTION_KEYS[self.paradigm]) - set(self.rules)
        if missing:
            raise ValueError(f"schedule lacks rules for {sorted(missing)}")

    def to_dict(self):
        return {k: {"rule": r.name, "C": r.C, "C2": r.C2} for k, r in self.rules.items()}

    @classmethod
    def from_dict(cls, paradigm, d):
        return cls(paradigm, {k: Rule(v["rule"], v.get("C", 1.0), v.get("C2", 1.0)) for k, v in d.items()})


def default_schedule(paradigm, vocab_size=None, **overrides):
    """Common settings; ``overrides`` map a parameter to a :class:`Rule`."""
    if paradigm == "maskgit":
        rules = {"m": Rule("cosine"), "tau": Rule("constant", 1.0),
                 "zeta": Rule("linear_down", 1.0), "w": Rule("linear_up", 1.0)}
    elif paradigm == "ar":
        rules = {"tau": Rule("constant", 1.0), "w": Rule("constant", 0.0),
                 "k": Rule("constant", float(vocab_size or 1)), "rho": Rule("constant", 1.0)}
    elif paradigm == "diffusion":
        rules = {"kappa": Rule("uniform"), "w": Rule("constant", 0.0)}
    elif paradigm == "flow":
        rules = {"kappa": Rule("linear"), "w": Rule("constant", 0.0)}
    else:
        raise ValueError(f"unknown paradigm {paradigm!r}")
    rules.update(overrides)
    return Schedule(paradigm, rules)


def baseline_action(schedule, t, T, kappa_max=1000):
    """Evaluate every rule of ``schedule`` at unified step ``t`` (0 <= t <= T)."""
    if not 0 <= t <= T:
        raise ValueError(f"t={t} outside [0, {T}]")
    out = {}
    kap = None
    if "kappa" in schedule.rules:
        kap = evaluate_rule(schedule.rules["kappa"], t, T, kappa_max)
        out["kappa"] = kap
    for key, rule in schedule.rules.items():
        if key != "kappa":
            out[key] = float(evaluate_rule(rule, t, T, kappa_max, kappa_t=kap))
    return out


# -- smoothing --------------------------------------------------------------

@dataclass
class SmootherState:
    beta: float
    prev: np.ndarray | None = None

    def __post_init__(self):
        if not 0.0 <= self.beta <= 1.0:
            raise ValueError("smoothing weight must lie in [0, 1]")


def smooth(state, raw):
    """EMA a_t = beta * a_{t-1} + (1 - beta) * raw_t; the first raw output passes through."""
    raw = np.asarray(raw, dtype=np.float64)
    out = raw.copy() if state.prev is None else state.beta * state.prev + (1.0 - state.beta) * raw
    return out, SmootherState(state.beta, out)


# -- range mappings -----------------------------------------------------------

@dataclass
class ActionContext:
    """What the range mapping needs beyond the raw vector."""
    paradigm: str
    t: int
    T: int
    kappa: np.ndarray | None = None
    vocab_size: int | None = None
    kappa_max: int = 1000
    delta: float = 1e-4


def softplus(x):
    return np.logaddexp(0.0, x)


def inv_softplus(y, floor=0.1):
    y = np.maximum(np.asarray(y, dtype=np.float64), floor)
    return y + np.log(-np.expm1(-y))


def _kappa_bounds(ctx):
    """Admissible kappa_next interval keeping every later step strictly decreasing."""
    remaining = ctx.T - ctx.t - 1
    if ctx.paradigm == "diffusion":
        return np.full_like(ctx.kappa, float(remaining)), ctx.kappa - 1.0
    lo = ctx.delta * remaining
    return np.full_like(ctx.kappa, lo), ctx.kappa - 0.5 * ctx.delta


def _finish_kappa(frac, ctx):
    kap = ctx.kappa * frac
    if ctx.paradigm == "diffusion":
        kap = np.floor(kap + 0.5)
    lo, hi = _kappa_bounds(ctx)
    kap = np.clip(kap, lo, hi)
    if ctx.t + 1 >= ctx.T:
        kap = np.zeros_like(kap)
    return kap


def activate(raw, ctx):
    """Smooth range mapping of a (N, A) raw array to an action dict."""
    raw = np.atleast_2d(raw)
    keys = ACTION_KEYS[ctx.paradigm]
    out = {}
    for i, key in enumerate(keys):
        x = raw[:, i]
        if key in ("m", "rho"):
            out[key] = expit(x)
        elif key in ("tau", "zeta", "w"):
            out[key] = softplus(x)
        elif key == "k":
            out[key] = np.clip(np.floor(1.0 + softplus(x) + 0.5), 1, ctx.vocab_size).astype(np.int64)
        elif key == "kappa":
            out[key] = _finish_kappa(expit(x), ctx)
    return out


def clamp_variant(raw, ctx):
    """Hard clipping of raw values to the valid ranges (ablation of :func:`activate`)."""
    raw = np.atleast_2d(raw)
    keys = ACTION_KEYS[ctx.paradigm]
    out = {}
    for i, key in enumerate(keys):
        x = raw[:, i]
        if key in ("m", "rho"):
            out[key] = np.clip(x, 0.0, 1.0)
        elif key in ("tau", "zeta", "w"):
            out[key] = np.maximum(x, 0.0)
        elif key == "k":
            out[key] = np.clip(np.floor(x + 0.5), 1, ctx.vocab_size).astype(np.int64)
        elif key == "kappa":
            out[key] = _finish_kappa(np.clip(x, 0.0, 1.0), ctx)
    return out


def init_offset(schedule, ctx, mode="activation"):
    """Pre-mapping offset that makes a zero raw output reproduce ``schedule``.

    Returns (N, A). Values on the boundary of a range are pulled inside so the
    inverse of the smooth mapping stays finite.
    """
    n = 1 if ctx.kappa is None else len(ctx.kappa)
    base = baseline_action(schedule, ctx.t + 1, ctx.T, ctx.kappa_max)
    cols = []
    for key in ACTION_KEYS[ctx.paradigm]:
        y = base[key]
        if key == "kappa":
            y = np.clip(y / ctx.kappa, 0.0, 1.0)
        y = np.broadcast_to(np.asarray(y, dtype=np.float64), (n,))
        if mode == "clamp":
            cols.append(y.astype(np.float64))
        elif key in ("m", "rho", "kappa"):
            cols.append(logit(np.clip(y, 0.02, 0.98)))
        elif key == "k":
            cols.append(inv_softplus(y - 1.0, floor=0.1))
        else:
            cols.append(inv_softplus(y))
    return np.stack(cols, axis=1)
