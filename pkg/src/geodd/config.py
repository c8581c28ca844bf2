"""Run configuration: a nested YAML/JSON document with unit-suffixed keys.

The defaults are the shipped configuration (25 MHz Rabi frequency, 130 kHz
detuning, 0.3 MHz 13C width, 2.2 MHz 14N splitting, T1 = 2.6 ms).
"""

from __future__ import annotations

import json
import math
from pathlib import Path
from typing import Literal, Optional

import numpy as np
import yaml
from pydantic import BaseModel, ConfigDict, Field, ValidationError, field_validator, model_validator

from .ensemble import EnsembleSpec
from .model import DriveParams, NoiseModel, build_dissipator


class ConfigError(ValueError):
    """Invalid configuration; ``key`` names the offending dotted path."""

    def __init__(self, key: str, message: str):
        super().__init__(f"{key}: {message}")
        self.key = key
        self.message = message


class _Section(BaseModel):
    model_config = ConfigDict(extra="forbid", validate_assignment=True)


class DriveSection(_Section):
    rabi_mhz: float = Field(25.0, gt=0)
    detuning_khz: float = 130.0
    phase_rad: float = 0.0
    pulse_length_error: float = Field(0.0, gt=-0.5, lt=0.5)
    gate_timing: Literal["generalized", "plain"] = "generalized"

    def params(self) -> DriveParams:
        return DriveParams(self.rabi_mhz, self.detuning_khz, self.phase_rad, self.pulse_length_error,
                           self.gate_timing == "generalized")


class NoiseSection(_Section):
    c13_width_1e_mhz: float = Field(0.3, ge=0)
    n14_splitting_mhz: float = Field(2.2, ge=0)
    t1_ms: Optional[float] = Field(2.6, gt=0)
    t1_convention: Literal["coherence", "population"] = "coherence"
    ou_amplitude_mhz: float = Field(0.0, ge=0)
    ou_tau_us: float = Field(100.0, gt=0)
    ou_dt_us: float = Field(0.1, gt=0)
    detuning_jitter_khz: float = Field(0.0, ge=0)

    def model(self) -> NoiseModel:
        return NoiseModel(self.c13_width_1e_mhz, self.n14_splitting_mhz,
                          math.inf if self.t1_ms is None else self.t1_ms,
                          self.ou_amplitude_mhz, self.ou_tau_us, self.detuning_jitter_khz)

    def dissipator(self):
        return build_dissipator(math.inf if self.t1_ms is None else self.t1_ms, self.t1_convention)


class SequenceSection(_Section):
    n_gates: Optional[int] = Field(8, ge=1)
    n_list: Optional[list[int]] = None
    tau_us: Optional[float] = Field(None, ge=0)
    tau_start_us: float = Field(0.5, ge=0)
    tau_stop_us: float = Field(30.0, ge=0)
    tau_step_us: float = Field(0.1, gt=0)
    edge_convention: Literal["half", "full"] = "half"
    initial_state: Literal["plus", "minus", "plus1", "minus1", "zero"] = "plus"
    dt_us: float = Field(0.004, gt=0)

    @field_validator("n_list")
    @classmethod
    def _positive_counts(cls, v):
        if v is not None and any(n < 1 for n in v):
            raise ValueError("gate counts must be at least 1")
        return v

    def gate_counts(self) -> list[int]:
        if self.n_list is not None:
            return list(self.n_list)
        if self.n_gates is None:
            raise ConfigError("sequence.n_gates", "set n_gates or n_list")
        return [self.n_gates]

    def taus(self) -> np.ndarray:
        if self.tau_us is not None:
            return np.array([self.tau_us])
        return arange_inclusive(self.tau_start_us, self.tau_stop_us, self.tau_step_us)


class EnsembleSection(_Section):
    samples: int = Field(2000, ge=1)
    seed: int = Field(0, ge=0)


class SweepSection(_Section):
    splitting_min_mhz: float = -4.0
    splitting_max_mhz: float = 4.0
    splitting_count: int = Field(81, ge=0)
    tau_start_us: float = Field(0.5, ge=0)
    tau_stop_us: float = Field(30.0, ge=0)
    tau_count: int = Field(60, ge=0)
    n_list: list[int] = Field(default_factory=lambda: [1, 2, 4, 8])

    def splittings(self) -> np.ndarray:
        return np.linspace(self.splitting_min_mhz, self.splitting_max_mhz, self.splitting_count)

    def taus(self) -> np.ndarray:
        return np.linspace(self.tau_start_us, self.tau_stop_us, self.tau_count)


class OutputSection(_Section):
    path: str = "geodd_out.csv"
    format: Literal["csv", "json"] = "csv"


class RunConfig(_Section):
    drive: DriveSection = Field(default_factory=DriveSection)
    noise: NoiseSection = Field(default_factory=NoiseSection)
    sequence: SequenceSection = Field(default_factory=SequenceSection)
    ensemble: EnsembleSection = Field(default_factory=EnsembleSection)
    sweep: Optional[SweepSection] = Field(default_factory=SweepSection)
    output: OutputSection = Field(default_factory=OutputSection)

    @model_validator(mode="after")
    def _tau_range(self):
        s = self.sequence
        if s.tau_us is None and s.tau_stop_us < s.tau_start_us:
            raise ValueError("sequence.tau_stop_us is below tau_start_us")
        return self

    def ensemble_spec(self) -> EnsembleSpec:
        return EnsembleSpec(self.ensemble.samples, self.ensemble.seed, self.noise.model(),
                            self.noise.ou_dt_us)

    def to_dict(self) -> dict:
        return self.model_dump(mode="json")


def arange_inclusive(start: float, stop: float, step: float) -> np.ndarray:
    """``start, start + step, ...`` up to and including ``stop`` (to 1e-9 of a step)."""
    count = int(math.floor((stop - start) / step + 1e-9)) + 1
    return np.round(start + step * np.arange(max(count, 0)), 12)


def _error_key(err: ValidationError) -> tuple[str, str]:
    first = err.errors()[0]
    key = ".".join(str(p) for p in first["loc"]) or "<root>"
    return key, first["msg"]


def validate_config(data: dict) -> RunConfig:
    try:
        return RunConfig.model_validate(data or {})
    except ValidationError as err:
        raise ConfigError(*_error_key(err)) from None


def load_config(path: Optional[str | Path]) -> dict:
    """Raw nested dict from a YAML or JSON file (JSON is valid YAML); ``None`` gives ``{}``."""
    if path is None:
        return {}
    try:
        text = Path(path).read_text(encoding="utf-8")
    except OSError as err:
        raise ConfigError("--config", f"cannot read {path}: {err.strerror}") from None
    try:
        data = yaml.safe_load(text)
    except yaml.YAMLError as err:
        raise ConfigError("--config", f"not valid YAML/JSON: {err}") from None
    if data is None:
        return {}
    if not isinstance(data, dict):
        raise ConfigError("--config", "top level must be a mapping")
    return data


def _leaf_paths(model_cls=RunConfig, prefix=()) -> list[tuple[str, ...]]:
    out = []
    for name, info in model_cls.model_fields.items():
        ann = info.annotation
        inner = [a for a in getattr(ann, "__args__", (ann,)) if isinstance(a, type) and issubclass(a, BaseModel)]
        if inner:
            out.extend(_leaf_paths(inner[0], prefix + (name,)))
        else:
            out.append(prefix + (name,))
    return out


def resolve_key(flag: str, prefer: Optional[str] = None) -> tuple[str, ...]:
    """Map ``drive.detuning_khz`` or a bare leaf such as ``detuning-khz`` to a config path.

    A bare leaf found in several sections resolves to the one in ``prefer``
    when given, otherwise it is an error.
    """
    name = flag.lstrip("-").replace("-", "_")
    leaves = _leaf_paths()
    if "." in name:
        path = tuple(name.split("."))
        if path not in leaves:
            raise ConfigError(name, "unknown configuration key")
        return path
    matches = [p for p in leaves if p[-1] == name]
    if not matches:
        raise ConfigError(name, "unknown configuration key")
    if len(matches) > 1 and prefer is not None:
        preferred = [p for p in matches if p[0] == prefer]
        if len(preferred) == 1:
            return preferred[0]
    if len(matches) > 1:
        options = ", ".join(".".join(p) for p in matches)
        raise ConfigError(name, f"ambiguous key; use one of {options}")
    return matches[0]


def apply_override(data: dict, path: tuple[str, ...], raw: str) -> None:
    value = yaml.safe_load(raw) if isinstance(raw, str) else raw
    node = data
    for part in path[:-1]:
        if not isinstance(node.get(part), dict):
            node[part] = {}
        node = node[part]
    node[path[-1]] = value


def dump_json(data) -> str:
    return json.dumps(data, indent=2, sort_keys=True) + "\n"
