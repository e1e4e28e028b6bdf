"""Experiment configuration: flat ``key = value`` files or JSON."""
from __future__ import annotations

import dataclasses
import json
from dataclasses import dataclass, field
from pathlib import Path

__all__ = ["ConfigError", "ExperimentConfig", "KINDS", "load_config", "parse_config_text"]

KINDS = ("identify", "phase-transition", "whitening-curve", "compare-gd")


class ConfigError(ValueError):
    pass


@dataclass
class ExperimentConfig:
    kind: str = "identify"
    m: int = 20
    d: int = 20
    eps: list = field(default_factory=lambda: [1.0])
    m_X: list = field(default_factory=lambda: [20])
    trials: int = 60
    n_rep: int = 180
    gamma: float = 2.0
    steps: int = 100
    h: float = 1e-3
    dedup_delta: float = 0.05
    noise_bound: float = 0.0
    n_grid: int = 256
    seed: int = 0
    clustering: str = "greedy"
    whitening: bool = False
    k_max: int = 6
    eta: float = 0.1
    reconstruct: bool = True
    exact_hessians: bool = False
    n_test: int = 100_000
    gd_steps: int = 1000
    gd_stepsize: float = 0.1

    def validate(self) -> "ExperimentConfig":
        if self.kind not in KINDS:
            raise ConfigError(f"unknown experiment kind {self.kind!r}; expected one of {', '.join(KINDS)}")
        if not self.eps or not self.m_X:
            raise ConfigError("eps and m_X grids must be non-empty")
        if self.trials < 1:
            raise ConfigError("trials must be >= 1")
        if self.m < 1 or self.d < self.m:
            raise ConfigError(f"need 1 <= m <= d, got m={self.m}, d={self.d}")
        if self.n_rep < 1 or self.steps < 0:
            raise ConfigError("n_rep must be >= 1 and steps >= 0")
        if self.gamma <= 2**0.5:
            raise ConfigError("gamma must exceed sqrt(2)")
        if self.h <= 0 or self.noise_bound < 0 or self.dedup_delta <= 0:
            raise ConfigError("h and dedup_delta must be positive, noise_bound non-negative")
        if any(e < 0 for e in self.eps) or any(k < 1 for k in self.m_X):
            raise ConfigError("eps values must be >= 0 and m_X values >= 1")
        if self.clustering not in ("greedy", "kmeans"):
            raise ConfigError(f"unknown clustering {self.clustering!r}")
        if not 0 <= self.eta <= 1:
            raise ConfigError("eta must lie in [0, 1]")
        if self.n_grid < 16 or self.n_test < 1:
            raise ConfigError("n_grid must be >= 16 and n_test >= 1")
        if self.seed < 0 or self.seed >= 2**64:
            raise ConfigError("seed must be an unsigned 64-bit integer")
        return self

    def to_dict(self) -> dict:
        return dataclasses.asdict(self)

    def updated(self, **changes) -> "ExperimentConfig":
        return _coerce(self.to_dict() | {k: v for k, v in changes.items() if v is not None})


_FIELDS = {f.name: f for f in dataclasses.fields(ExperimentConfig)}
_LISTS = {"eps": float, "m_X": int}
_BOOL_WORDS = {"true": True, "yes": True, "1": True, "on": True, "false": False, "no": False, "0": False, "off": False}


def _scalar(name: str, value):
    typ = {"int": int, "float": float, "bool": bool, "str": str}[_FIELDS[name].type]
    if typ is bool:
        if isinstance(value, bool):
            return value
        word = str(value).strip().lower()
        if word not in _BOOL_WORDS:
            raise ConfigError(f"{name}: expected a boolean, got {value!r}")
        return _BOOL_WORDS[word]
    try:
        if typ is int and isinstance(value, str):
            return int(value.strip())
        if typ is int and isinstance(value, float):
            if not value.is_integer():
                raise ValueError
            return int(value)
        return typ(value.strip() if isinstance(value, str) else value)
    except (TypeError, ValueError):
        raise ConfigError(f"{name}: cannot parse {value!r} as {typ.__name__}") from None


def _coerce(raw: dict) -> ExperimentConfig:
    out = {}
    for key, value in raw.items():
        name = key.strip().replace("-", "_")
        if name == "m_x":
            name = "m_X"
        if name not in _FIELDS:
            raise ConfigError(f"unknown config key {key!r}")
        if name in _LISTS:
            items = value if isinstance(value, list) else [v for v in str(value).split(",") if v.strip()]
            try:
                out[name] = [_LISTS[name](str(v).strip()) if isinstance(v, str) else _LISTS[name](v) for v in items]
            except ValueError:
                raise ConfigError(f"{name}: cannot parse {value!r} as a list") from None
        else:
            out[name] = _scalar(name, value)
    return ExperimentConfig(**out).validate()


def parse_config_text(text: str) -> ExperimentConfig:
    stripped = text.strip()
    if stripped.startswith("{"):
        try:
            raw = json.loads(stripped)
        except json.JSONDecodeError as exc:
            raise ConfigError(f"invalid JSON config: {exc}") from None
        if not isinstance(raw, dict):
            raise ConfigError("JSON config must be an object")
        return _coerce(raw)
    raw = {}
    for lineno, line in enumerate(text.splitlines(), 1):
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"line {lineno}: expected 'key = value'")
        key, value = line.split("=", 1)
        raw[key.strip()] = value.strip()
    return _coerce(raw)


def load_config(path) -> ExperimentConfig:
    try:
        text = Path(path).read_text()
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc}") from None
    return parse_config_text(text)
