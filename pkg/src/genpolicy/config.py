"""Run configuration: nested dataclasses parsed from a single JSON document."""
from __future__ import annotations

import json
import typing
from dataclasses import MISSING, asdict, dataclass, field, fields, is_dataclass

from .agent import AgentConfig
from .rl import PpoConfig
from .samplers import PARADIGMS
from .transforms import Schedule, default_schedule
from .worlds import build_discrete_world, build_gmm_world


class ConfigError(ValueError):
    """A config field is missing, unknown or out of range; ``field`` names it."""

    def __init__(self, field_name, message):
        super().__init__(f"{field_name}: {message}")
        self.field = field_name


@dataclass
class WorldConfig:
    seed: int = 0
    class_count: int = 4
    grid_size: int = 4
    vocab_size: int = 3
    energy_scale: float = 1.0
    components: int = 3


@dataclass
class RewardConfig:
    kind: str = "adversarial"
    hidden: tuple = (128, 128)
    activation: str = "tanh"
    label_smoothing: bool = False
    fidelity_samples: int = 10_000


@dataclass
class RefineConfig:
    M: int = 3
    K: int = 2
    lookahead: bool = False


@dataclass
class BlendConfig:
    iterations: int = 200
    lambdas: tuple = (0.0, 0.25, 0.5, 0.75, 1.0)


@dataclass
class EvalConfig:
    every: int = 10
    samples: int = 256
    radius_multiplier: float = 1.0


@dataclass
class RunConfig:
    paradigm: str
    T: int
    seed: int
    world: WorldConfig = field(default_factory=WorldConfig)
    agent: AgentConfig = field(default_factory=AgentConfig)
    ppo: PpoConfig = field(default_factory=PpoConfig)
    reward: RewardConfig = field(default_factory=RewardConfig)
    smoothing_beta: float = 0.8
    schedule: dict | None = None
    refine: RefineConfig = field(default_factory=RefineConfig)
    blend: BlendConfig = field(default_factory=BlendConfig)
    eval: EvalConfig = field(default_factory=EvalConfig)
    out_dir: str = "runs/default"
    checkpoint_every: int = 0

    def validate(self):
        if self.paradigm not in PARADIGMS:
            raise ConfigError("paradigm", f"must be one of {PARADIGMS}, got {self.paradigm!r}")
        if self.T < 1:
            raise ConfigError("T", "must be >= 1")
        if not 0.0 <= self.smoothing_beta <= 1.0:
            raise ConfigError("smoothing_beta", "must lie in [0, 1]")
        if self.reward.kind not in ("adversarial", "fidelity_proxy", "metric"):
            raise ConfigError("reward.kind", f"unknown reward kind {self.reward.kind!r}")
        if self.reward.kind == "metric" and self.paradigm in ("maskgit", "ar"):
            raise ConfigError("reward.kind", "metric reward is defined for continuous worlds only")
        if self.paradigm == "ar" and self.T != self.world.grid_size:
            raise ConfigError("T", "autoregressive decoding needs T == world.grid_size")
        if self.paradigm == "diffusion" and self.T > 1000:
            raise ConfigError("T", "diffusion needs T <= kappa_max")
        if self.refine.M < 0 or self.refine.K < 1:
            raise ConfigError("refine", "need M >= 0 and K >= 1")
        if self.refine.lookahead and self.paradigm in ("diffusion", "flow"):
            raise ConfigError("refine.lookahead", "state transition is deterministic for ODE paradigms")
        if self.world.vocab_size ** self.world.grid_size > 2 ** 20:
            raise ConfigError("world", "V**G exceeds the enumeration bound 2**20")
        try:
            self.make_schedule()
        except ValueError as e:
            raise ConfigError("schedule", str(e)) from None
        return self

    @property
    def discrete(self):
        return self.paradigm in ("maskgit", "ar")

    def make_world(self):
        w = self.world
        if self.discrete:
            return build_discrete_world(w.grid_size, w.vocab_size, w.class_count, w.seed, w.energy_scale)
        return build_gmm_world(w.class_count, w.components, w.seed)

    def make_schedule(self):
        base = default_schedule(self.paradigm, vocab_size=self.world.vocab_size)
        if not self.schedule:
            return base
        merged = {**base.to_dict(), **self.schedule}
        return Schedule.from_dict(self.paradigm, merged)

    def to_dict(self):
        return _plain(asdict(self))


def _plain(obj):
    if isinstance(obj, dict):
        return {k: _plain(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_plain(v) for v in obj]
    return obj


def _build(cls, data, path):
    if not isinstance(data, dict):
        raise ConfigError(path or "<root>", "expected an object")
    hints = typing.get_type_hints(cls)
    known = {f.name: f for f in fields(cls)}
    for key in data:
        if key not in known:
            raise ConfigError(f"{path}{key}", "unknown key")
    kwargs = {}
    for name, f in known.items():
        full = f"{path}{name}"
        if name not in data:
            if f.default is MISSING and f.default_factory is MISSING:
                raise ConfigError(full, "missing required key")
            continue
        val = data[name]
        hint = hints[name]
        if is_dataclass(hint):
            val = _build(hint, val, f"{full}.")
        elif hint is tuple and isinstance(val, list):
            val = tuple(val)
        elif hint is int and not (isinstance(val, int) and not isinstance(val, bool)):
            raise ConfigError(full, f"expected an integer, got {val!r}")
        elif hint is float and isinstance(val, int) and not isinstance(val, bool):
            val = float(val)
        kwargs[name] = val
    try:
        return cls(**kwargs)
    except ConfigError:
        raise
    except (TypeError, ValueError) as e:
        raise ConfigError(path.rstrip(".") or "<root>", str(e)) from None


def config_from_dict(data):
    return _build(RunConfig, data, "").validate()


def parse_config(path):
    with open(path) as fh:
        try:
            data = json.load(fh)
        except json.JSONDecodeError as e:
            raise ConfigError("<file>", f"invalid JSON: {e}") from None
    return config_from_dict(data)


def dump_config(cfg):
    return json.dumps(cfg.to_dict(), indent=2)
