"""Pydantic configuration models and YAML loader."""

from __future__ import annotations

import re
from pathlib import Path
from typing import Literal, Optional

import yaml
from pydantic import BaseModel, ConfigDict, Field, field_validator, model_validator

from dfssd.exceptions import ConfigError

_STATE_RE = re.compile(r"^[01]+$")


def _resolve(path_str: str) -> Path:
    """Expand user home and resolve a path string."""
    return Path(path_str).expanduser()


class NetlistConfig(BaseModel):
    model_config = ConfigDict(frozen=True)

    key_prefix: str = "keyinput"
    keep_mux: bool = False

    @field_validator("key_prefix")
    @classmethod
    def _validate_prefix(cls, v: str) -> str:
        if not v or not re.match(r"^[A-Za-z_][\w.\[\]]*$", v):
            raise ValueError(f"key_prefix は空でない識別子で指定してください: {v!r}")
        return v


class SolverConfig(BaseModel):
    model_config = ConfigDict(frozen=True)

    backend: Literal["cdcl", "pysat"] = "cdcl"
    pysat_name: str = "m22"
    conflict_budget: Optional[int] = None
    verify_models: bool = False
    restart_base: int = 100

    @field_validator("conflict_budget")
    @classmethod
    def _validate_budget(cls, v: Optional[int]) -> Optional[int]:
        if v is not None and v < 1:
            raise ValueError(f"conflict_budget は 1 以上で指定してください: {v}")
        return v

    @field_validator("restart_base")
    @classmethod
    def _validate_restart(cls, v: int) -> int:
        if v < 1:
            raise ValueError(f"restart_base は 1 以上で指定してください: {v}")
        return v


class ReachConfig(BaseModel):
    model_config = ConfigDict(frozen=True)

    explicit_ff_limit: int = 24
    max_input_bits: int = 16
    max_states: int = 1 << 20
    bmc_depth: int = 32
    induction_depth: int = 4
    urs_limit: Optional[int] = None

    @field_validator("explicit_ff_limit")
    @classmethod
    def _validate_ff_limit(cls, v: int) -> int:
        if not 0 <= v <= 30:
            raise ValueError(f"explicit_ff_limit は 0〜30 の範囲で指定してください: {v}")
        return v

    @field_validator("max_input_bits", "max_states", "bmc_depth", "induction_depth")
    @classmethod
    def _validate_positive(cls, v: int) -> int:
        if v < 1:
            raise ValueError(f"1 以上で指定してください: {v}")
        return v


class SsdConfig(BaseModel):
    model_config = ConfigDict(frozen=True)

    strict: bool = False
    key_granularity: Literal["pair", "edge"] = "pair"


class DeepFaultConfig(BaseModel):
    model_config = ConfigDict(frozen=True)

    width: int = 2
    tracer: Literal["clock", "transition", "lfsr"] = "clock"
    trigger: Optional[tuple[str, str]] = None
    lfsr_taps: Optional[tuple[int, ...]] = None
    pseudo_counter: bool = False
    target_output: int = 0
    state_bits: Optional[int] = None
    hide: Optional[Literal["covert", "nonoccur"]] = None
    order: Literal["ssd-first", "df-first"] = "ssd-first"

    @field_validator("width")
    @classmethod
    def _validate_width(cls, v: int) -> int:
        if not 1 <= v <= 16:
            raise ValueError(f"width は 1〜16 の範囲で指定してください: {v}")
        return v

    @field_validator("trigger")
    @classmethod
    def _validate_trigger(cls, v: Optional[tuple[str, str]]) -> Optional[tuple[str, str]]:
        if v is None:
            return v
        src, dst = v
        if not (_STATE_RE.match(src) and _STATE_RE.match(dst)) or len(src) != len(dst):
            raise ValueError(f"trigger は同じ幅の 0/1 文字列の組で指定してください: {v!r}")
        return v

    @field_validator("target_output")
    @classmethod
    def _validate_target(cls, v: int) -> int:
        if v < 0:
            raise ValueError(f"target_output は 0 以上で指定してください: {v}")
        return v


class AttackConfig(BaseModel):
    """Outer-loop parameters of the sequential attack."""

    model_config = ConfigDict(frozen=True)

    initial_boundary: int = 1
    boundary_step: int = 8
    time_budget_sec: float = 300.0
    conflict_budget: Optional[int] = None
    umc_mode: Literal["auto", "explicit", "induction", "off"] = "auto"
    max_boundary: Optional[int] = None
    explicit_key_bits: int = 16
    max_key_class: int = 4096

    @field_validator("initial_boundary", "boundary_step")
    @classmethod
    def _validate_boundary(cls, v: int) -> int:
        if v < 1:
            raise ValueError(f"boundary は 1 以上で指定してください: {v}")
        return v

    @field_validator("time_budget_sec")
    @classmethod
    def _validate_time(cls, v: float) -> float:
        if v <= 0:
            raise ValueError(f"time_budget_sec は正の値で指定してください: {v}")
        return v


class BenchConfig(BaseModel):
    model_config = ConfigDict(frozen=True)

    workers: int = 1
    output_dir: str = "~/dfssd/bench"
    db_path: str = "~/dfssd/bench.db"
    lock_path: str = "~/dfssd/.lock"

    @field_validator("workers")
    @classmethod
    def _validate_workers(cls, v: int) -> int:
        if v < 1:
            raise ValueError(f"workers は 1 以上で指定してください: {v}")
        return v

    def resolve_output_dir(self) -> Path:
        return _resolve(self.output_dir)

    def resolve_db_path(self) -> Path:
        return _resolve(self.db_path)

    def resolve_lock_path(self) -> Path:
        return _resolve(self.lock_path)


class AppConfig(BaseModel):
    model_config = ConfigDict(frozen=True)

    netlist: NetlistConfig = Field(default_factory=NetlistConfig)
    solver: SolverConfig = Field(default_factory=SolverConfig)
    reach: ReachConfig = Field(default_factory=ReachConfig)
    ssd: SsdConfig = Field(default_factory=SsdConfig)
    deepfault: DeepFaultConfig = Field(default_factory=DeepFaultConfig)
    attack: AttackConfig = Field(default_factory=AttackConfig)
    bench: BenchConfig = Field(default_factory=BenchConfig)


class NetlistSidecar(BaseModel):
    """Optional per-netlist metadata stored next to a `.bench` file."""

    model_config = ConfigDict(frozen=True)

    key_prefix: Optional[str] = None
    ff_init: dict[str, int] = Field(default_factory=dict)

    @field_validator("ff_init")
    @classmethod
    def _validate_bits(cls, v: dict[str, int]) -> dict[str, int]:
        for net, bit in v.items():
            if bit not in (0, 1):
                raise ValueError(f"ff_init の値は 0 か 1 です: {net}={bit}")
        return v


class SchemeSpec(BaseModel):
    """One obfuscation scheme column of a bench manifest."""

    model_config = ConfigDict(frozen=True)

    ssd: int = 0
    df: int = 0
    tracer: Literal["clock", "transition", "lfsr"] = "clock"

    @model_validator(mode="after")
    def _validate_scheme(self) -> SchemeSpec:
        if self.ssd < 0 or self.df < 0:
            raise ValueError("ssd / df は 0 以上で指定してください")
        if self.ssd == 0 and self.df == 0:
            raise ValueError("ssd か df の少なくとも一方を指定してください")
        return self

    @property
    def label(self) -> str:
        parts = []
        if self.ssd:
            parts.append("SSD" if self.ssd == 1 else f"SSD{self.ssd}")
        if self.df:
            suffix = "" if self.tracer == "clock" else f"-{self.tracer}"
            parts.append(f"DF{self.df}{suffix}")
        return "+".join(parts)


class BenchManifest(BaseModel):
    model_config = ConfigDict(frozen=True)

    circuits: list[str] = Field(default_factory=list)
    schemes: list[SchemeSpec] = Field(default_factory=list)
    seed: int = 0
    time_budget_sec: Optional[float] = None


def _read_yaml(config_path: Path) -> dict:
    if not config_path.exists():
        raise ConfigError(f"Config file not found: {config_path}")
    try:
        with open(config_path) as f:
            data = yaml.safe_load(f) or {}
    except yaml.YAMLError as exc:
        raise ConfigError(f"Invalid YAML in {config_path}: {exc}") from exc
    if not isinstance(data, dict):
        raise ConfigError(f"Top level of {config_path} must be a mapping")
    return data


def load_config(path: str | Path) -> AppConfig:
    """Load configuration from a YAML file."""
    config_path = Path(path).expanduser()
    data = _read_yaml(config_path)
    try:
        return AppConfig.model_validate(data)
    except Exception as exc:
        raise ConfigError(f"Configuration validation failed: {exc}") from exc


def load_manifest(path: str | Path) -> BenchManifest:
    """Load a bench manifest; relative circuit paths resolve against the manifest."""
    manifest_path = Path(path).expanduser()
    data = _read_yaml(manifest_path)
    try:
        manifest = BenchManifest.model_validate(data)
    except Exception as exc:
        raise ConfigError(f"Manifest validation failed: {exc}") from exc
    base = manifest_path.parent
    circuits = [
        str(p if (p := Path(c).expanduser()).is_absolute() else base / p)
        for c in manifest.circuits
    ]
    return manifest.model_copy(update={"circuits": circuits})
