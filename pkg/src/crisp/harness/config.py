"""Run configuration: a flat ``key = value`` text file.

Blank lines and lines starting with ``#`` are ignored.  Unknown keys are an
error.  ``method`` picks a preset for ``parser``, ``regularizer`` and
``variant``; keys given explicitly in the file win over the preset.

Keys (defaults in brackets; ``0`` for a horizon, threshold or p, and a
negative psi, mean "use the per-environment default"):

    env [maze]           maze | blockpush | rope | point
    method [crisp-irl]   crisp-irl | crisp-bc | crisp-rpl | hier | hier-neg | flat
    seed [0]
    total_steps [150000]
    T, c [0]             episode horizon and steps per subgoal
    delta_low, delta_high [0]
    psi [-1]             imitation weight
    regularizer          irl | bc | none
    conditioned [true]   higher discriminator also sees (state, goal)
    lower_pairs [verified]  verified | all
    parser               pip | window | none
    k [5]                window size for the window parser
    p [0]                repopulation period in env steps
    higher [sac]         sac | identity
    variant              HIER | HIER-NEG
    warmup [1000]        env steps before updates start
    update_every [1]     env steps per lower update
    batch_size [256], buffer_capacity [100000]
    lr [0.0003], alpha [0.1], gamma [0.98], higher_gamma [0.98], tau [0.005]
    hidden [64,64]
    demos []             demo file; empty means generate demo_count demos
    demo_count [100], demo_seed [500000]
    train_mazes [100], test_mazes [100]   fixed maze splits (maze only)
    eval_every [2000], eval_rollouts [20]
    checkpoint_every [0] env steps between checkpoints (0 = only at the end)
    step_scale [0]       env step size override
    precision [float32]  float32 | float64 network parameters
"""
from __future__ import annotations

import dataclasses
from dataclasses import dataclass

from ..core import ConfigError

METHODS = {
    "crisp-irl": {"parser": "pip", "regularizer": "irl", "variant": "HIER"},
    "crisp-bc": {"parser": "pip", "regularizer": "bc", "variant": "HIER"},
    "crisp-rpl": {"parser": "window", "regularizer": "irl", "variant": "HIER"},
    "hier": {"parser": "none", "regularizer": "none", "variant": "HIER"},
    "hier-neg": {"parser": "none", "regularizer": "none", "variant": "HIER-NEG"},
    "flat": {"parser": "none", "regularizer": "none", "variant": "HIER"},
}

ENV_DEFAULTS = {
    "maze": {"T": 225, "c": 15, "psi": 1e-3, "p": 5000},
    "blockpush": {"T": 50, "c": 7, "psi": 5e-3, "p": 2500},
    "rope": {"T": 25, "c": 5, "psi": 5e-3, "p": 2500},
    "point": {"T": 50, "c": 50, "psi": 1e-3, "p": 2500},
}


@dataclass
class RunConfig:
    env: str = "maze"
    method: str = "crisp-irl"
    seed: int = 0
    total_steps: int = 150_000
    T: int = 0
    c: int = 0
    delta_low: float = 0.0
    delta_high: float = 0.0
    psi: float = -1.0
    regularizer: str = ""
    conditioned: bool = True
    lower_pairs: str = "verified"
    parser: str = ""
    k: int = 5
    p: int = 0
    higher: str = "sac"
    variant: str = ""
    warmup: int = 1000
    update_every: int = 1
    batch_size: int = 256
    buffer_capacity: int = 100_000
    lr: float = 3e-4
    alpha: float = 0.1
    gamma: float = 0.98
    higher_gamma: float = 0.98
    tau: float = 0.005
    hidden: tuple = (64, 64)
    demos: str = ""
    demo_count: int = 100
    demo_seed: int = 500_000
    train_mazes: int = 100
    test_mazes: int = 100
    eval_every: int = 2000
    eval_rollouts: int = 20
    checkpoint_every: int = 0
    step_scale: float = 0.0
    precision: str = "float32"

    def __post_init__(self):
        self.resolve()

    def resolve(self) -> None:
        # keys the method/env presets fill in; remembered so a changed method or env can re-derive them
        self._given = frozenset(k for k in _DERIVED if getattr(self, k) != _FIELDS[k].default)
        if self.method not in METHODS:
            raise ConfigError(f"unknown method {self.method!r}; choose from {sorted(METHODS)}")
        if self.env not in ENV_DEFAULTS:
            raise ConfigError(f"unknown env {self.env!r}; choose from {sorted(ENV_DEFAULTS)}")
        for key, value in METHODS[self.method].items():
            if not getattr(self, key):
                setattr(self, key, value)
        d = ENV_DEFAULTS[self.env]
        for key in ("T", "c", "p"):
            if not getattr(self, key):
                setattr(self, key, d[key])
        if self.psi < 0:
            self.psi = d["psi"]
        if self.method == "flat":
            self.c = self.T
        if self.parser not in ("pip", "window", "none"):
            raise ConfigError(f"parser must be pip, window or none, got {self.parser!r}")
        if self.regularizer not in ("irl", "bc", "none"):
            raise ConfigError(f"regularizer must be irl, bc or none, got {self.regularizer!r}")
        if self.variant not in ("HIER", "HIER-NEG"):
            raise ConfigError(f"variant must be HIER or HIER-NEG, got {self.variant!r}")
        if self.higher not in ("sac", "identity"):
            raise ConfigError(f"higher must be sac or identity, got {self.higher!r}")
        if self.lower_pairs not in ("verified", "all"):
            raise ConfigError(f"lower_pairs must be verified or all, got {self.lower_pairs!r}")
        if self.parser != "none" and self.p <= 0:
            raise ConfigError("population period p must be positive when a parser is set")
        if not 1 <= self.c <= self.T:
            raise ConfigError(f"need 1 <= c <= T, got c={self.c}, T={self.T}")
        if self.precision not in ("float32", "float64"):
            raise ConfigError(f"precision must be float32 or float64, got {self.precision!r}")
        if self.update_every < 1 or self.eval_every < 1 or self.eval_rollouts < 1:
            raise ConfigError("update_every, eval_every and eval_rollouts must be >= 1")

    @property
    def flat(self) -> bool:
        return self.method == "flat"

    @property
    def needs_demos(self) -> bool:
        return self.parser != "none" and self.regularizer != "none" and self.psi > 0

    def replace(self, **changes) -> "RunConfig":
        """New config with ``changes`` applied; preset-derived keys not set explicitly are derived afresh."""
        d = self.to_dict(resolved=False)
        d.update(changes)
        return from_dict(d)

    def to_dict(self, resolved: bool = True) -> dict:
        d = {f.name: getattr(self, f.name) for f in dataclasses.fields(self)}
        if not resolved:
            for k in _DERIVED:
                if k not in self._given:
                    d[k] = _FIELDS[k].default
        return d

    def dumps(self) -> str:
        lines = []
        for k, v in self.to_dict().items():
            if isinstance(v, tuple):
                v = ",".join(str(x) for x in v)
            elif isinstance(v, bool):
                v = "true" if v else "false"
            lines.append(f"{k} = {v}")
        return "\n".join(lines) + "\n"


_FIELDS = {f.name: f for f in dataclasses.fields(RunConfig)}
_DERIVED = ("parser", "regularizer", "variant", "T", "c", "p", "psi")


def _coerce(key: str, raw):
    f = _FIELDS[key]
    default = f.default if f.default is not dataclasses.MISSING else f.default_factory()
    if isinstance(raw, str):
        raw = raw.strip()
    try:
        if isinstance(default, bool):
            if isinstance(raw, bool):
                return raw
            if raw.lower() in ("1", "true", "yes", "on"):
                return True
            if raw.lower() in ("0", "false", "no", "off"):
                return False
            raise ValueError(raw)
        if isinstance(default, int):
            return int(float(raw)) if isinstance(raw, str) else int(raw)
        if isinstance(default, float):
            return float(raw)
        if isinstance(default, tuple):
            if isinstance(raw, str):
                return tuple(int(x) for x in raw.split(",") if x.strip())
            return tuple(int(x) for x in raw)
        return str(raw)
    except ValueError:
        raise ConfigError(f"bad value for {key}: {raw!r}") from None


def from_dict(d: dict) -> RunConfig:
    unknown = set(d) - set(_FIELDS)
    if unknown:
        raise ConfigError(f"unknown config keys: {sorted(unknown)}")
    vals = {k: _coerce(k, v) for k, v in d.items()}
    return RunConfig(**vals)


def parse_config(text: str) -> RunConfig:
    d = {}
    for n, line in enumerate(text.splitlines(), 1):
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"line {n}: expected key = value, got {line!r}")
        k, v = (x.strip() for x in line.split("=", 1))
        if k in d:
            raise ConfigError(f"line {n}: duplicate key {k!r}")
        d[k] = v
    return from_dict(d)


def load_config(path) -> RunConfig:
    with open(path) as fh:
        return parse_config(fh.read())
