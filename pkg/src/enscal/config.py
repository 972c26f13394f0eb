"""Run configuration: a single flat INI section ``[enscal]``.

Example::

    [enscal]
    version = 1
    data = sample.csv
    variable_kind = real_line
    method = raw, emos_normal
    grouping = two_group
    training_length = 20
    start = 2012-05-01
    seed = 42
    output_dir = out

Relative paths resolve against the config file's directory.  The environment
variable ``ENSCAL_OUTPUT_DIR`` overrides ``output_dir``.
"""
from __future__ import annotations

import configparser
import datetime as dt
import os
from dataclasses import dataclass, field
from fractions import Fraction

from .data import GroupingScheme
from .errors import ConfigError, GroupingError
from .harness import METHODS, ExperimentSpec

CONFIG_VERSION = "1"
SECTION = "enscal"
KEYS = {
    "version", "data", "variable_kind", "method", "grouping", "bias", "estimator",
    "training_length", "sweep_lo", "sweep_hi", "start", "end", "level", "seed",
    "skip_days", "output_dir", "jobs",
}


@dataclass
class RunConfig:
    data: str
    methods: list
    output_dir: str
    variable_kind: str = "real_line"
    grouping: str = "two_group"
    bias: str = "linear"
    estimator: str = "ml"
    training_length: int = 35
    sweep: tuple | None = None
    start: dt.date | None = None
    end: dt.date | None = None
    level: float = 10 / 12
    seed: int = 0
    skip_days: int = 0
    jobs: int = 1
    source: str | None = field(default=None, repr=False)

    def specs(self) -> list:
        return [
            ExperimentSpec(
                method=m,
                training_length=self.training_length,
                sweep=self.sweep,
                start=self.start,
                end=self.end,
                grouping=self.grouping,
                bias=self.bias,
                estimator=self.estimator,
                level=self.level,
                seed=self.seed,
                skip_days=self.skip_days,
                variable_kind=self.variable_kind,
            )
            for m in self.methods
        ]


def _int(key, v):
    try:
        return int(v)
    except ValueError:
        raise ConfigError(f"{key}: expected an integer, got {v!r}") from None


def _date(key, v):
    try:
        return dt.date.fromisoformat(v)
    except ValueError:
        raise ConfigError(f"{key}: expected an ISO date, got {v!r}") from None


def _level(v):
    try:
        x = float(Fraction(v.strip()))
    except (ValueError, ZeroDivisionError):
        raise ConfigError(f"level: expected a fraction such as 0.8333 or 10/12, got {v!r}") from None
    if not 0 < x < 1:
        raise ConfigError("level: must lie in (0, 1)")
    return x


def load_config(path, require_sweep: bool = False) -> RunConfig:
    if not os.path.exists(path):
        raise ConfigError(f"config file not found: {path}")
    parser = configparser.ConfigParser(interpolation=None)
    try:
        parser.read(path, encoding="utf-8")
    except configparser.Error as exc:
        raise ConfigError(f"cannot parse {path}: {exc}") from None
    if parser.sections() != [SECTION]:
        raise ConfigError(f"config must contain exactly one [{SECTION}] section")
    raw = dict(parser[SECTION])
    unknown = sorted(set(raw) - KEYS)
    if unknown:
        raise ConfigError(f"unknown config key(s): {', '.join(unknown)}")
    if raw.get("version") != CONFIG_VERSION:
        raise ConfigError(f"version: required and must be {CONFIG_VERSION}")
    for key in ("data", "method"):
        if not raw.get(key):
            raise ConfigError(f"{key}: required")
    base = os.path.dirname(os.path.abspath(path))
    data = os.path.join(base, raw["data"])
    if not os.path.exists(data):
        raise ConfigError(f"data: file not found: {data}")
    methods = [m.strip() for m in raw["method"].split(",") if m.strip()]
    bad = [m for m in methods if m not in METHODS]
    if bad:
        raise ConfigError(f"method: unknown method(s) {bad}; choose from {', '.join(METHODS)}")
    out = os.environ.get("ENSCAL_OUTPUT_DIR") or os.path.join(base, raw.get("output_dir", "enscal_out"))
    kind = raw.get("variable_kind", "real_line")
    if kind not in ("real_line", "nonnegative"):
        raise ConfigError(f"variable_kind: must be real_line or nonnegative, got {kind!r}")
    sweep = None
    if "sweep_lo" in raw or "sweep_hi" in raw:
        if not ("sweep_lo" in raw and "sweep_hi" in raw):
            raise ConfigError("sweep_lo and sweep_hi must be given together")
        lo, hi = _int("sweep_lo", raw["sweep_lo"]), _int("sweep_hi", raw["sweep_hi"])
        if lo < 1 or hi < lo:
            raise ConfigError(f"sweep_lo/sweep_hi: invalid range [{lo}, {hi}]")
        sweep = (lo, hi)
    elif require_sweep:
        raise ConfigError("sweep_lo/sweep_hi: required for a sweep")
    cfg = RunConfig(
        data=data,
        methods=methods,
        output_dir=out,
        variable_kind=kind,
        grouping=raw.get("grouping", "two_group"),
        bias=raw.get("bias", "linear"),
        estimator=raw.get("estimator", "ml"),
        training_length=_int("training_length", raw.get("training_length", "35")),
        sweep=sweep,
        start=_date("start", raw["start"]) if raw.get("start") else None,
        end=_date("end", raw["end"]) if raw.get("end") else None,
        level=_level(raw.get("level", "10/12")),
        seed=_int("seed", raw.get("seed", "0")),
        skip_days=_int("skip_days", raw.get("skip_days", "0")),
        jobs=_int("jobs", raw.get("jobs", "1")),
        source=os.path.abspath(path),
    )
    if cfg.jobs < 1:
        raise ConfigError("jobs: must be >= 1")
    if cfg.grouping not in ("two_group", "three_group", "exchangeable"):
        try:
            GroupingScheme.from_string(cfg.grouping)
        except GroupingError as exc:
            raise ConfigError(f"grouping: {exc}") from None
    cfg.specs()  # field-level validation of the experiment settings
    return cfg
