"""Strict JSON configuration for the command-line tools.

A config file is a flat JSON object; every key is validated at load and
unknown keys are rejected outright, so typos fail loudly instead of being
silently ignored. The ``POWER_ATTEST_CONFIG`` environment variable points at
a default config file when no explicit path is given.
"""

from __future__ import annotations

import dataclasses
import json
import os
from dataclasses import dataclass
from pathlib import Path

from .errors import ConfigError
from .synth import TriggerConfig
from .template import (
    DEFAULT_FILTER_ORDER,
    DEFAULT_FILTER_WINDOW,
    DEFAULT_PERCENTILE,
)

CONFIG_ENV_VAR = "POWER_ATTEST_CONFIG"

DEFAULT_P_ALPHA = 0.082
DEFAULT_P_BETA = 0.69
DEFAULT_LEVEL_BITS = 32

_TRIGGER_KEYS = frozenset(
    ("amplitude", "width_samples", "min_excursion", "tolerance_samples")
)


@dataclass(frozen=True)
class Config:
    filter_window: int = DEFAULT_FILTER_WINDOW
    filter_order: int = DEFAULT_FILTER_ORDER
    percentile: float = DEFAULT_PERCENTILE
    trigger: TriggerConfig = dataclasses.field(default_factory=TriggerConfig)
    p_alpha: float = DEFAULT_P_ALPHA
    p_beta: float = DEFAULT_P_BETA
    level_bits: int = DEFAULT_LEVEL_BITS
    template_dir: str = "templates"
    corpus_dir: str = "corpus"
    seed: int = 0

    def __post_init__(self) -> None:
        if self.filter_window < 1 or self.filter_window % 2 == 0:
            raise ConfigError(
                f"filter_window must be odd and positive, got {self.filter_window}"
            )
        if not 0 <= self.filter_order < self.filter_window:
            raise ConfigError(
                f"filter_order must lie in [0, {self.filter_window}), "
                f"got {self.filter_order}"
            )
        if not 0 <= self.percentile <= 100:
            raise ConfigError(
                f"percentile must lie in [0, 100], got {self.percentile}"
            )
        if not 0.0 < self.p_alpha < 1.0:
            raise ConfigError(f"p_alpha must lie in (0, 1), got {self.p_alpha}")
        if not 0.0 < self.p_beta <= 1.0:
            raise ConfigError(f"p_beta must lie in (0, 1], got {self.p_beta}")
        if self.p_alpha >= self.p_beta:
            raise ConfigError(
                f"p_alpha must be below p_beta, got {self.p_alpha} >= {self.p_beta}"
            )
        if self.level_bits < 1:
            raise ConfigError(f"level_bits must be positive, got {self.level_bits}")
        if self.seed < 0:
            raise ConfigError(f"seed must be non-negative, got {self.seed}")

    def to_dict(self) -> dict:
        return {
            "filter_window": self.filter_window,
            "filter_order": self.filter_order,
            "percentile": self.percentile,
            "trigger": {
                "amplitude": self.trigger.amplitude,
                "width_samples": self.trigger.width_samples,
                "min_excursion": self.trigger.min_excursion,
                "tolerance_samples": self.trigger.tolerance_samples,
            },
            "p_alpha": self.p_alpha,
            "p_beta": self.p_beta,
            "level_bits": self.level_bits,
            "template_dir": self.template_dir,
            "corpus_dir": self.corpus_dir,
            "seed": self.seed,
        }


_EXPECTED_TYPES = {
    "filter_window": int,
    "filter_order": int,
    "percentile": (int, float),
    "p_alpha": (int, float),
    "p_beta": (int, float),
    "level_bits": int,
    "template_dir": str,
    "corpus_dir": str,
    "seed": int,
}


def config_from_dict(data: dict) -> Config:
    if not isinstance(data, dict):
        raise ConfigError(f"config root must be an object, got {type(data).__name__}")
    known = set(_EXPECTED_TYPES) | {"trigger"}
    unknown = sorted(set(data) - known)
    if unknown:
        raise ConfigError(f"unknown config keys: {', '.join(unknown)}")
    kwargs = {}
    for key, expected in _EXPECTED_TYPES.items():
        if key not in data:
            continue
        value = data[key]
        if isinstance(value, bool) or not isinstance(value, expected):
            raise ConfigError(
                f"config key {key!r} has invalid type {type(value).__name__}"
            )
        kwargs[key] = float(value) if expected == (int, float) else value
    if "trigger" in data:
        trig = data["trigger"]
        if not isinstance(trig, dict):
            raise ConfigError("config key 'trigger' must be an object")
        unknown = sorted(set(trig) - _TRIGGER_KEYS)
        if unknown:
            raise ConfigError(f"unknown trigger keys: {', '.join(unknown)}")
        try:
            kwargs["trigger"] = TriggerConfig(**trig)
        except (TypeError, ValueError) as exc:
            raise ConfigError(f"invalid trigger config: {exc}") from exc
    try:
        return Config(**kwargs)
    except TypeError as exc:
        raise ConfigError(f"invalid config: {exc}") from exc


def load_config(path) -> Config:
    path = Path(path)
    try:
        text = path.read_text(encoding="utf-8")
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc}") from exc
    try:
        data = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ConfigError(f"config {path} is not valid JSON: {exc}") from exc
    return config_from_dict(data)


def save_config(config: Config, path) -> None:
    Path(path).write_text(
        json.dumps(config.to_dict(), sort_keys=True, indent=2) + "\n",
        encoding="utf-8",
    )


def resolve_config(explicit_path=None) -> Config:
    """Load the explicit path, else $POWER_ATTEST_CONFIG, else defaults."""
    if explicit_path is not None:
        return load_config(explicit_path)
    env_path = os.environ.get(CONFIG_ENV_VAR)
    if env_path:
        return load_config(env_path)
    return Config()
