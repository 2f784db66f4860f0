"""Scenario configuration: defaults, JSON files, overrides, validation."""

from __future__ import annotations

import dataclasses
import json
import math
from dataclasses import dataclass, fields
from pathlib import Path

from .decision import DpWeights, Scheme, SchemePolicy, ThresholdWeights
from .protocol import OffsetParams

# default mean burst sizes per built-in topology (bytes)
DEFAULT_BURST_SIZE = {"nsfnet": 400e3, "cost239": 4e6}
FALLBACK_BURST_SIZE = 400e3


class ConfigError(ValueError):
    def __init__(self, key, message):
        super().__init__(f"{key}: {message}")
        self.key = key


@dataclass(frozen=True)
class SimConfig:
    topology: str = "nsfnet"
    scheme: str = "ahdr"
    max_deflections_per_burst: int = 1
    alpha_blr: float = 0.5
    alpha_u: float = 0.5
    beta_blr: float = 0.4
    beta_u: float = 0.2
    pinned_threshold: float | None = None
    xi: float = 2.0
    t_conf: float = 10e-6
    t_p: float = 10e-6
    n_ret: int = 1
    retx_idle_max: float = 0.05
    stats_window: float = 1.0
    update_period: float = 0.1
    load: float = 0.5
    mean_burst_size: float | None = None
    burst_size_dist: str = "exponential"
    generators: str = "all"
    generator_fraction: float = 0.5
    scheduling: str = "first-fit"
    duration: float = 10.0
    warmup: float | None = None
    seed: int = 1

    # -- derived -----------------------------------------------------------

    @property
    def policy(self):
        return SchemePolicy(Scheme.parse(self.scheme), self.max_deflections_per_burst)

    @property
    def dp_weights(self):
        return DpWeights(self.alpha_blr, self.alpha_u)

    @property
    def threshold_weights(self):
        return ThresholdWeights(self.beta_blr, self.beta_u)

    @property
    def offset_params(self):
        return OffsetParams(self.t_conf, self.t_p)

    @property
    def effective_warmup(self):
        return 0.1 * self.duration if self.warmup is None else self.warmup

    @property
    def effective_burst_size(self):
        if self.mean_burst_size is not None:
            return self.mean_burst_size
        return DEFAULT_BURST_SIZE.get(str(self.topology).lower(), FALLBACK_BURST_SIZE)

    # -- construction ------------------------------------------------------

    @classmethod
    def keys(cls):
        return [f.name for f in fields(cls)]

    @classmethod
    def defaults(cls):
        return {f.name: f.default for f in fields(cls)}

    @classmethod
    def from_dict(cls, data):
        unknown = sorted(set(data) - set(cls.keys()))
        if unknown:
            raise ConfigError(unknown[0], "unknown configuration key")
        return cls(**{k: _coerce(k, v) for k, v in data.items()})

    @classmethod
    def from_file(cls, path):
        path = Path(path)
        if not path.exists():
            raise ConfigError("config", f"file not found: {path}")
        try:
            data = json.loads(path.read_text())
        except json.JSONDecodeError as exc:
            raise ConfigError("config", f"{path} is not valid JSON ({exc})") from None
        return cls.from_dict(data)

    def replace(self, **overrides):
        overrides = {k: v for k, v in overrides.items() if v is not None}
        unknown = sorted(set(overrides) - set(self.keys()))
        if unknown:
            raise ConfigError(unknown[0], "unknown configuration key")
        return dataclasses.replace(self, **{k: _coerce(k, v) for k, v in overrides.items()})

    def to_dict(self):
        return dataclasses.asdict(self)

    # -- validation --------------------------------------------------------

    def validate(self):
        """Raise :class:`ConfigError` naming the first offending key."""
        def need(ok, key, msg):
            if not ok:
                raise ConfigError(key, msg)

        try:
            Scheme.parse(self.scheme)
        except ValueError as exc:
            raise ConfigError("scheme", str(exc)) from None
        need(self.max_deflections_per_burst >= 0, "max_deflections_per_burst", "must be >= 0")
        for key in ("alpha_blr", "alpha_u", "beta_blr", "beta_u"):
            need(0.0 <= getattr(self, key) <= 1.0, key, "must lie in [0, 1]")
        need(abs(self.alpha_blr + self.alpha_u - 1.0) <= 1e-9, "alpha_u", "alpha_blr + alpha_u must equal 1")
        need(self.beta_blr + self.beta_u <= 1.0 + 1e-9, "beta_u", "beta_blr + beta_u must be <= 1")
        need(self.pinned_threshold is None or self.pinned_threshold >= 0, "pinned_threshold", "must be >= 0")
        need(self.xi >= 1, "xi", "must be >= 1")
        need(self.t_conf >= 0, "t_conf", "must be >= 0")
        need(self.t_p >= 0, "t_p", "must be >= 0")
        need(self.n_ret >= 0, "n_ret", "must be >= 0")
        need(self.retx_idle_max >= 0, "retx_idle_max", "must be >= 0")
        need(self.stats_window > 0, "stats_window", "must be > 0")
        need(self.update_period > 0, "update_period", "must be > 0")
        need(0.0 < self.load <= 1.0, "load", f"must lie in (0, 1], got {self.load}")
        need(self.effective_burst_size > 0, "mean_burst_size", "must be > 0")
        need(self.burst_size_dist in ("exponential", "constant"), "burst_size_dist",
             "must be 'exponential' or 'constant'")
        need(self.generators in ("all", "random"), "generators", "must be 'all' or 'random'")
        need(0.0 < self.generator_fraction <= 1.0, "generator_fraction", "must lie in (0, 1]")
        need(self.scheduling in ("first-fit", "horizon"), "scheduling", "must be 'first-fit' or 'horizon'")
        need(math.isfinite(self.duration) and self.duration >= 0, "duration", "must be a finite value >= 0")
        w = self.effective_warmup
        need(w >= 0, "warmup", "must be >= 0")
        need(self.duration == 0 or self.duration > w, "warmup", "must be smaller than duration")
        return self


_INT_KEYS = {"max_deflections_per_burst", "n_ret", "seed"}
_STR_KEYS = {"topology", "scheme", "burst_size_dist", "generators", "scheduling"}


def _coerce(key, value):
    if value is None:
        return None
    try:
        if key in _INT_KEYS:
            if isinstance(value, float) and not value.is_integer():
                raise ValueError
            return int(value)
        if key in _STR_KEYS:
            return str(value)
        return float(value)
    except (TypeError, ValueError):
        raise ConfigError(key, f"cannot interpret {value!r}") from None


def describe_keys():
    """``key (default)`` lines, used by the CLI help."""
    return [f"{k} (default: {v})" for k, v in SimConfig.defaults().items()]
