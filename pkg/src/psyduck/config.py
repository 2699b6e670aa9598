"""Flat key=value configuration with section prefixes.

The format is deliberately trivial: one `section.key = value` per line,
'#' comments, no nesting.  `serialize_config(parse_config(text))` is
canonical and idempotent, which makes configs diffable in golden tests.
Environment variables prefixed PSYDUCK_ override file values, e.g.
PSYDUCK_PROTOCOL_D=3 overrides `protocol.d`.
"""

from __future__ import annotations

import os
from dataclasses import dataclass, replace
from typing import Mapping

from .codec import CodecSpec
from .diffusion import BackendSpec, Schedule, SCHEDULE_PRESETS, make_schedule, schedule_from_preset
from .errors import ConfigError, ParameterError
from .protocol import CellMap, ProtocolParams
from .analysis import SweepGrid

ENV_PREFIX = "PSYDUCK_"


@dataclass(frozen=True)
class Config:
    schedule_preset: str | None = "linear-50"
    schedule_t: int | None = None
    beta_start: float | None = None
    beta_end: float | None = None
    backend: str = "analytic"
    prior_mean: float = 0.0
    prior_std: float = 1.0
    d: int = 2
    r: int = 2
    step_mode: str = "stochastic"
    final_step_key_mode: str = "sync"
    precision: str = "f64"
    repetition: int = 1
    cell_shape: tuple[int, ...] | None = None
    sample_shape: tuple[int, ...] = (4128,)
    codec: str = "identity"


@dataclass
class Runtime:
    """Validated objects built from a Config."""

    sched: Schedule
    backend: BackendSpec
    params: ProtocolParams
    codec: CodecSpec


def _parse_shape(text: str) -> tuple[int, ...]:
    try:
        dims = tuple(int(part) for part in text.replace("x", ",").split(",") if part.strip())
    except ValueError as exc:
        raise ConfigError(f"bad shape {text!r}: {exc}") from exc
    if not dims:
        raise ConfigError(f"bad shape {text!r}")
    return dims


def _fmt_shape(shape: tuple[int, ...]) -> str:
    return ",".join(str(s) for s in shape)


_INT = ("schedule.t", "protocol.d", "protocol.r", "protocol.repetition")
_FLOAT = ("schedule.beta_start", "schedule.beta_end", "backend.prior_mean", "backend.prior_std")
_SHAPE = ("protocol.cell_shape", "sample.shape")

_KEY_TO_FIELD = {
    "schedule.preset": "schedule_preset",
    "schedule.t": "schedule_t",
    "schedule.beta_start": "beta_start",
    "schedule.beta_end": "beta_end",
    "backend.kind": "backend",
    "backend.prior_mean": "prior_mean",
    "backend.prior_std": "prior_std",
    "protocol.d": "d",
    "protocol.r": "r",
    "protocol.step_mode": "step_mode",
    "protocol.final_step_key_mode": "final_step_key_mode",
    "protocol.precision": "precision",
    "protocol.repetition": "repetition",
    "protocol.cell_shape": "cell_shape",
    "sample.shape": "sample_shape",
    "codec.spec": "codec",
}


def _coerce(key: str, raw: str):
    raw = raw.strip()
    try:
        if key in _INT:
            return int(raw)
        if key in _FLOAT:
            return float(raw)
    except ValueError as exc:
        raise ConfigError(f"bad value for {key}: {raw!r}") from exc
    if key in _SHAPE:
        return _parse_shape(raw)
    return raw


def parse_config(text: str) -> Config:
    values = {}
    for lineno, line in enumerate(text.splitlines(), start=1):
        body = line.split("#", 1)[0].strip()
        if not body:
            continue
        if "=" not in body:
            raise ConfigError(f"line {lineno}: expected 'section.key = value', got {line!r}")
        key, raw = (part.strip() for part in body.split("=", 1))
        if key not in _KEY_TO_FIELD:
            raise ConfigError(f"line {lineno}: unknown config key {key!r}")
        values[_KEY_TO_FIELD[key]] = _coerce(key, raw)
    cfg = Config(**values)
    if "schedule_t" in values and "schedule_preset" not in values:
        cfg = replace(cfg, schedule_preset=None)
    return cfg


def serialize_config(cfg: Config) -> str:
    lines = []
    if cfg.schedule_preset is not None:
        lines.append(f"schedule.preset = {cfg.schedule_preset}")
    else:
        lines.append(f"schedule.t = {cfg.schedule_t}")
        lines.append(f"schedule.beta_start = {cfg.beta_start:g}")
        lines.append(f"schedule.beta_end = {cfg.beta_end:g}")
    lines.append(f"backend.kind = {cfg.backend}")
    lines.append(f"backend.prior_mean = {cfg.prior_mean:g}")
    lines.append(f"backend.prior_std = {cfg.prior_std:g}")
    lines.append(f"protocol.d = {cfg.d}")
    lines.append(f"protocol.r = {cfg.r}")
    lines.append(f"protocol.step_mode = {cfg.step_mode}")
    lines.append(f"protocol.final_step_key_mode = {cfg.final_step_key_mode}")
    lines.append(f"protocol.precision = {cfg.precision}")
    lines.append(f"protocol.repetition = {cfg.repetition}")
    if cfg.cell_shape is not None:
        lines.append(f"protocol.cell_shape = {_fmt_shape(cfg.cell_shape)}")
    lines.append(f"sample.shape = {_fmt_shape(cfg.sample_shape)}")
    lines.append(f"codec.spec = {cfg.codec}")
    return "\n".join(lines) + "\n"


def load_config(path: str) -> Config:
    with open(path, "r", encoding="utf-8") as fh:
        return parse_config(fh.read())


def apply_env_overrides(cfg: Config, environ: Mapping[str, str] | None = None) -> Config:
    environ = os.environ if environ is None else environ
    updates = {}
    for name, raw in environ.items():
        if not name.startswith(ENV_PREFIX):
            continue
        rest = name[len(ENV_PREFIX):].lower()
        if "_" not in rest:
            raise ConfigError(f"malformed override variable {name}")
        section, key = rest.split("_", 1)
        dotted = f"{section}.{key}"
        if dotted not in _KEY_TO_FIELD:
            raise ConfigError(f"unknown override variable {name} ({dotted})")
        updates[_KEY_TO_FIELD[dotted]] = _coerce(dotted, raw)
    if not updates:
        return cfg
    cfg = replace(cfg, **updates)
    if "schedule_t" in updates and "schedule_preset" not in updates:
        cfg = replace(cfg, schedule_preset=None)
    return cfg


def build_runtime(cfg: Config, bridge=None) -> Runtime:
    """Construct validated schedule/backend/params/codec from a Config."""
    try:
        if cfg.schedule_preset is not None:
            if cfg.schedule_preset not in SCHEDULE_PRESETS:
                raise ConfigError(f"unknown schedule preset {cfg.schedule_preset!r}")
            sched = schedule_from_preset(cfg.schedule_preset)
        else:
            if cfg.schedule_t is None or cfg.beta_start is None or cfg.beta_end is None:
                raise ConfigError("explicit schedule needs schedule.t, beta_start, beta_end")
            sched = make_schedule(cfg.schedule_t, cfg.beta_start, cfg.beta_end)

        if cfg.backend == "analytic":
            backend = BackendSpec(
                kind="analytic_gaussian",
                prior_mean=cfg.prior_mean,
                prior_std=cfg.prior_std,
                step_mode=cfg.step_mode,
            )
        elif cfg.backend.startswith("bridge:"):
            if bridge is None:
                raise ConfigError(
                    "bridge backend configured but no bridge client supplied; "
                    "launch it with --backend bridge:'<command>'"
                )
            backend = BackendSpec(kind="external_bridge", step_mode=cfg.step_mode, bridge=bridge)
        else:
            raise ConfigError(f"unknown backend {cfg.backend!r}")

        cells = (
            CellMap(cfg.sample_shape, cfg.cell_shape)
            if cfg.cell_shape is not None
            else CellMap.unit(cfg.sample_shape)
        )
        params = ProtocolParams(
            d=cfg.d,
            r=cfg.r,
            cells=cells,
            final_step_key_mode=cfg.final_step_key_mode,
            step_mode=cfg.step_mode,
            precision=cfg.precision,
            repetition=cfg.repetition,
        )
        codec = CodecSpec.parse(cfg.codec)
    except ParameterError as exc:
        raise ConfigError(str(exc)) from exc
    return Runtime(sched=sched, backend=backend, params=params, codec=codec)


def parse_grid(text: str) -> tuple[SweepGrid, int | None]:
    """Parse a sweep grid file: comma-separated value lists per axis."""
    axes: dict[str, list[str]] = {}
    trials: int | None = None
    for lineno, line in enumerate(text.splitlines(), start=1):
        body = line.split("#", 1)[0].strip()
        if not body:
            continue
        if "=" not in body:
            raise ConfigError(f"grid line {lineno}: expected 'key = values'")
        key, raw = (part.strip() for part in body.split("=", 1))
        values = [v.strip() for v in raw.split(",") if v.strip()]
        if key == "trials":
            if len(values) != 1:
                raise ConfigError(f"grid line {lineno}: trials takes one value")
            trials = int(values[0])
            continue
        if key not in ("d", "r", "precision", "codec"):
            raise ConfigError(f"grid line {lineno}: unknown grid axis {key!r}")
        if not values:
            raise ConfigError(f"grid line {lineno}: axis {key!r} has no values")
        axes[key] = values
    if not axes:
        raise ConfigError("grid file defines no axes")
    grid = SweepGrid(
        d_values=tuple(int(v) for v in axes.get("d", ["1"])),
        r_values=tuple(int(v) for v in axes.get("r", ["2"])),
        precisions=tuple(axes.get("precision", ["f64"])),
        codecs=tuple(axes.get("codec", ["identity"])),
    )
    return grid, trials


DEFAULT_CONFIG_TEXT = serialize_config(Config())
