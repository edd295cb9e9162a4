"""Run configuration: defaults, INI-style config files and validation.

A config file has up to four sections; every key is optional::

    [geometry]
    W = 20
    H = 20
    delta = 1/50
    m = 3.2
    theta = 3600          # or C = 0.8165

    [distribution]
    setting = 3
    n = 4                 # setting 2
    a = 0.2
    mixture = 5           # setting 3, or: mixture_weights = 1, 2, 1, 1, 1, 1, 1

    [execution]
    replicates = 64
    seed = 1
    max_events = 0        # 0 disables the cap
    front_sample_dt = 5.0 # default: estimated barrier time / 400
    row_window = 170, 1150
    snapshot_times = 100, 500
    snapshot_format = pgm # or rle

    [output]
    out = results/desk1
"""
from __future__ import annotations

import configparser
import dataclasses
import hashlib
import json
from dataclasses import dataclass, field
from fractions import Fraction
from pathlib import Path

from .bounds import gamma_lb_sto
from .events import (DEFAULT_A, MIXTURE_WEIGHTS, DomainGeometry, ShapeDistribution,
                     setting1_distribution, setting2_distribution, setting3_distribution)

# Full-scale parameters; the space-time density follows from theta.
TABLE1 = dict(W=60.0, H=60.0, delta=1 / 200, m=3.2, theta=3600.0, C=None)
DESK = dict(W=20.0, H=20.0, delta=1 / 50, m=3.2, theta=None,
            C=3600.0 / (66.4 * 66.4))

# Front samples per estimated run length.
FRONT_SAMPLES = 400
# Conservative ratio of the measured speed to the stochastic lower bound,
# used only to size the front sampling step.
SPEED_OVER_BOUND = 4.0


class ConfigError(ValueError):
    """Invalid or inconsistent run configuration."""


@dataclass
class RunConfig:
    W: float = TABLE1["W"]
    H: float = TABLE1["H"]
    delta: float = TABLE1["delta"]
    m: float = TABLE1["m"]
    theta: float | None = TABLE1["theta"]
    C: float | None = None
    setting: int = 1
    n: int = 2
    a: float = DEFAULT_A
    mixture: int | None = None
    mixture_weights: tuple | None = None
    replicates: int = 64
    seed: int = 0
    max_events: int = 0
    front_sample_dt: float | None = None
    row_window: tuple | None = None
    snapshot_times: tuple = ()
    snapshot_format: str = "pgm"
    out: str = "results"
    jobs: int | None = field(default=None, compare=False)

    # fields that do not change the content of a run
    _UNHASHED = ("out", "jobs")

    def apply_geometry(self, preset: dict) -> None:
        for k, v in preset.items():
            setattr(self, k, v)

    # -- derived objects ----------------------------------------------------
    def geometry(self) -> DomainGeometry:
        if (self.theta is None) == (self.C is None):
            raise ConfigError("give exactly one of theta and C")
        try:
            if self.theta is not None:
                return DomainGeometry.from_theta(self.W, self.H, self.delta, self.m, self.theta)
            return DomainGeometry(self.W, self.H, self.delta, self.m, self.C)
        except ValueError as exc:
            raise ConfigError(str(exc)) from None

    def weights(self) -> tuple:
        if self.mixture_weights is not None:
            return tuple(self.mixture_weights)
        if self.mixture is None:
            raise ConfigError("setting 3 needs mixture or mixture_weights")
        if self.mixture not in MIXTURE_WEIGHTS:
            raise ConfigError(f"unknown mixture {self.mixture}; choose from 1..5")
        return MIXTURE_WEIGHTS[self.mixture]

    def distribution(self) -> ShapeDistribution:
        try:
            if self.setting == 1:
                return setting1_distribution(self.a)
            if self.setting == 2:
                return setting2_distribution(self.n, self.a)
            if self.setting == 3:
                return setting3_distribution(self.weights(), self.a)
        except ConfigError:
            raise
        except ValueError as exc:
            raise ConfigError(str(exc)) from None
        raise ConfigError(f"setting must be 1, 2 or 3, got {self.setting}")

    def label(self) -> str:
        if self.setting == 1:
            return "1"
        if self.setting == 2:
            return f"2:n={self.n}"
        if self.mixture_weights is None and self.mixture is not None:
            return f"3:mixture={self.mixture}"
        return "3:w=" + "-".join(f"{w:g}" for w in self.weights())

    def sample_dt(self) -> float:
        if self.front_sample_dt is not None:
            return self.front_sample_dt
        g = self.geometry()
        speed = SPEED_OVER_BOUND * gamma_lb_sto(self.distribution(), g.C)
        return (g.W + g.m) / speed / FRONT_SAMPLES

    def validate(self) -> "RunConfig":
        """Check every precondition of a run; raises ``ConfigError``."""
        g = self.geometry()
        mu = self.distribution()
        try:
            g.check_distribution(mu)
        except ValueError as exc:
            raise ConfigError(str(exc)) from None
        if self.replicates < 1:
            raise ConfigError("replicates must be at least 1")
        if not 0 <= self.seed < 2**64:
            raise ConfigError("seed must be an unsigned 64-bit integer")
        if self.max_events < 0:
            raise ConfigError("max_events must be nonnegative")
        if self.front_sample_dt is not None and not self.front_sample_dt > 0:
            raise ConfigError("front_sample_dt must be positive")
        if self.row_window is not None:
            lo, hi = self.row_window
            if not 0 <= lo <= hi < g.ny:
                raise ConfigError(f"row_window {self.row_window} outside 0..{g.ny - 1}")
        if any(t <= 0 for t in self.snapshot_times):
            raise ConfigError("snapshot times must be positive")
        if self.snapshot_format not in ("pgm", "rle"):
            raise ConfigError("snapshot_format must be pgm or rle")
        return self

    # -- serialisation ------------------------------------------------------
    def to_dict(self) -> dict:
        d = dataclasses.asdict(self)
        for k in ("mixture_weights", "row_window", "snapshot_times"):
            if d[k] is not None:
                d[k] = list(d[k])
        return d

    @classmethod
    def from_dict(cls, d: dict) -> "RunConfig":
        d = dict(d)
        for k in ("mixture_weights", "row_window", "snapshot_times"):
            if d.get(k) is not None:
                d[k] = tuple(d[k])
        return cls(**d)

    def config_hash(self) -> str:
        d = {k: v for k, v in self.to_dict().items() if k not in self._UNHASHED}
        blob = json.dumps(d, sort_keys=True, separators=(",", ":"))
        return hashlib.sha256(blob.encode()).hexdigest()


def _number(text: str) -> float:
    text = text.strip()
    try:
        return float(Fraction(text))
    except (ValueError, ZeroDivisionError):
        raise ConfigError(f"not a number: {text!r}") from None


def _integer(text: str) -> int:
    v = _number(text)
    if v != int(v):
        raise ConfigError(f"not an integer: {text!r}")
    return int(v)


def _list(text: str, conv) -> tuple:
    return tuple(conv(p) for p in text.replace(";", ",").split(",") if p.strip())


_KEYS = {
    "geometry": {"W": _number, "H": _number, "delta": _number, "m": _number,
                 "theta": _number, "C": _number},
    "distribution": {"setting": _integer, "n": _integer, "a": _number, "mixture": _integer,
                     "mixture_weights": lambda s: _list(s, _number)},
    "execution": {"replicates": _integer, "seed": _integer, "master_seed": _integer,
                  "max_events": _integer, "front_sample_dt": _number,
                  "row_window": lambda s: _list(s, _integer),
                  "snapshot_times": lambda s: _list(s, _number),
                  "snapshot_format": str.strip, "jobs": _integer},
    "output": {"out": str.strip},
}


def load_config(path, base: RunConfig | None = None) -> RunConfig:
    """Overlay the keys found in the file at ``path`` on ``base`` (defaults if ``None``)."""
    cfg = RunConfig() if base is None else dataclasses.replace(base)
    parser = configparser.ConfigParser(inline_comment_prefixes=("#", ";"))
    parser.optionxform = str  # keep W/H/C case
    try:
        with open(path) as fh:
            parser.read_file(fh)
    except (OSError, configparser.Error) as exc:
        raise ConfigError(f"cannot read config {path}: {exc}") from None
    for section in parser.sections():
        if section not in _KEYS:
            raise ConfigError(f"unknown config section [{section}]")
        keys = _KEYS[section]
        for key, raw in parser.items(section):
            if key not in keys:
                raise ConfigError(f"unknown key {key!r} in [{section}]")
            value = keys[key](raw)
            if key == "master_seed":
                key = "seed"
            setattr(cfg, key, value)
        if section == "geometry":
            # one of theta / C given explicitly overrides the other
            given = {k for k, _ in parser.items(section)}
            if "theta" in given and "C" not in given:
                cfg.C = None
            elif "C" in given and "theta" not in given:
                cfg.theta = None
    if cfg.row_window is not None and len(cfg.row_window) != 2:
        raise ConfigError("row_window needs two integers")
    return cfg


def write_config(cfg: RunConfig, path: str | Path) -> None:
    Path(path).write_text(json.dumps(cfg.to_dict(), indent=2, sort_keys=True) + "\n")
