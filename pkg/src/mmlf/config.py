"""Run configuration: flat ``key = value`` files merged with CLI overrides.

Precedence is command-line flag > config file > built-in default.
"""
from __future__ import annotations

import math
from dataclasses import asdict, dataclass, fields, replace
from pathlib import Path

from .data import DELIMITERS, SplitSpec, short_float
from .model import Hyperparams


class ConfigError(ValueError):
    pass


_DEFAULT_HP = Hyperparams()


@dataclass(frozen=True)
class RunConfig:
    train: str | None = None
    test: str | None = None
    format: str = "tab"
    train_fraction: float = 0.8
    seed: int = 0
    eta: float = _DEFAULT_HP.eta
    lam: float = _DEFAULT_HP.lam
    d: int = _DEFAULT_HP.d
    zeta: float | None = None
    epochs: int = _DEFAULT_HP.epochs
    init_scale: float = _DEFAULT_HP.init_scale
    dist_eps: float = _DEFAULT_HP.dist_eps
    clamp: bool = False
    clamp_min: float | None = None
    clamp_max: float | None = None
    out: str | None = None

    def validate(self) -> "RunConfig":
        if self.format not in DELIMITERS:
            raise ConfigError(f"format must be one of {sorted(DELIMITERS)}")
        try:
            SplitSpec(self.train_fraction, self.seed)
            self.hyperparams()
        except ValueError as exc:
            raise ConfigError(str(exc)) from None
        if self.eta <= 0:
            raise ConfigError("eta must be > 0")
        if self.epochs < 1:
            raise ConfigError("epochs must be >= 1")
        if (self.clamp_min is not None and self.clamp_max is not None
                and self.clamp_min > self.clamp_max):
            raise ConfigError("clamp_min exceeds clamp_max")
        return self

    def hyperparams(self) -> Hyperparams:
        return Hyperparams(
            eta=self.eta, lam=self.lam, d=self.d, zeta=self.zeta, epochs=self.epochs,
            seed=self.seed, init_scale=self.init_scale, dist_eps=self.dist_eps,
        )

    def clamp_range(self) -> tuple[float, float] | None:
        if not self.clamp:
            return None
        if self.clamp_min is None or self.clamp_max is None:
            raise ConfigError("clamp range is unresolved")
        return self.clamp_min, self.clamp_max

    def merged(self, **overrides) -> "RunConfig":
        """Copy with every non-None override applied."""
        return replace(self, **{k: v for k, v in overrides.items() if v is not None})


# file key -> dataclass field
_ALIASES = {"lambda": "lam"}
_FIELD_TYPES = {f.name: f.type for f in fields(RunConfig)}


def _convert(name: str, raw: str):
    kind = _FIELD_TYPES[name]
    if raw == "" or raw.lower() in ("none", "auto"):
        if "None" in kind:
            return None
        raise ConfigError(f"{name} needs a value")
    try:
        if kind.startswith("bool"):
            low = raw.lower()
            if low in ("1", "true", "yes", "on"):
                return True
            if low in ("0", "false", "no", "off"):
                return False
            raise ValueError(raw)
        if kind.startswith("int"):
            return int(raw)
        if kind.startswith("float"):
            value = float(raw)
            if not math.isfinite(value):
                raise ValueError(raw)
            return value
    except ValueError:
        raise ConfigError(f"bad value for {name}: {raw!r}") from None
    return raw


def parse_config(text: str) -> dict:
    values: dict = {}
    for lineno, line in enumerate(text.splitlines(), start=1):
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"config line {lineno}: expected 'key = value'")
        key, raw = (s.strip() for s in line.split("=", 1))
        name = _ALIASES.get(key, key)
        if name not in _FIELD_TYPES:
            raise ConfigError(f"config line {lineno}: unknown key {key!r}")
        values[name] = _convert(name, raw)
    return values


def load_config(path) -> RunConfig:
    try:
        text = Path(path).read_text(encoding="utf-8")
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc}") from None
    return RunConfig(**parse_config(text))


def format_config(cfg: RunConfig) -> str:
    lines = []
    for name, value in asdict(cfg).items():
        key = "lambda" if name == "lam" else name
        if value is None:
            text = "auto" if name == "zeta" else ""
        elif isinstance(value, bool):
            text = "true" if value else "false"
        elif isinstance(value, float):
            text = short_float(value)
        else:
            text = str(value)
        lines.append(f"{key} = {text}")
    return "\n".join(lines) + "\n"
