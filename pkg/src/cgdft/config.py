"""Run configuration: schema, loading, tolerance overrides."""

from __future__ import annotations

import hashlib
import json
from pathlib import Path
from typing import Literal, Optional

from pydantic import BaseModel, ConfigDict, Field, ValidationError, field_validator

try:  # Python 3.11+
    import tomllib
except ModuleNotFoundError:  # pragma: no cover
    import tomli as tomllib

__all__ = [
    "ConfigError",
    "ModelSection",
    "DensitySection",
    "RunConfig",
    "Tolerances",
    "load_config",
    "parse_config",
    "apply_tolerance_overrides",
    "config_hash",
]


class ConfigError(ValueError):
    """Schema violation or unreadable config; the CLI maps it to exit code 2."""


class _Strict(BaseModel):
    model_config = ConfigDict(extra="forbid", frozen=True)


class ModelSection(_Strict):
    L: float = Field(1.0, gt=0)
    M: int = 128
    N: int = Field(1, ge=1, le=2)
    strength: float = Field(1.0, ge=0)
    softening: float = Field(0.5, gt=0)

    @field_validator("M")
    @classmethod
    def _power_of_two(cls, m: int) -> int:
        if m < 16 or m & (m - 1):
            raise ValueError("M must be a power of two >= 16")
        return m


class DensitySection(_Strict):
    kind: Literal["smooth", "box", "node", "flat_top", "harmonic", "forward", "csv"] = "smooth"
    amplitude: float = 1.0  # smooth: log-amplitude; forward: potential scale
    modes: int = Field(4, ge=1)
    node: float = Field(0.5, gt=0, lt=1)
    omega: float = Field(20.0, gt=0)
    ramp: float = Field(0.2, gt=0, le=0.5)
    path: Optional[str] = None
    potential_level: Optional[int] = Field(None, ge=0)  # forward: level of the random potential


class Tolerances(_Strict):
    inversion: float = Field(1e-6, gt=0)
    inner: float = Field(1e-10, gt=0)  # inversion tolerance inside experiments
    gauge: float = Field(1e-8, gt=0)
    monotone: float = Field(1e-7, ge=0)
    derivative: float = Field(1e-4, gt=0)
    quotient: float = Field(1e-6, ge=0)
    duality: float = Field(1e-8, ge=0)
    convexity: float = Field(1e-7, ge=0)
    identity: float = Field(1e-12, ge=0)
    grid_gap: float = Field(0.02, gt=0)


class InvertParams(_Strict):
    level: int = Field(4, ge=0)


class SweepParams(_Strict):
    levels: list[int] = [1, 2, 3, 4, 5]
    perturbed: bool = False
    amplitude: float = Field(0.5, ge=0)


class ProbeParams(_Strict):
    levels: list[int] = [1, 2, 3, 4, 5]
    v_cap: float = Field(1e4, gt=0)
    stabilization: float = Field(0.05, gt=0)
    growth: float = Field(2.0, gt=1)


class QuasiParams(_Strict):
    level: int = Field(3, ge=1)
    radius_max: float = Field(1e-1, gt=0)
    radius_min: float = Field(1e-3, gt=0)
    radii: int = Field(5, ge=2)
    samples: int = Field(20, ge=1)


class ModulusParams(_Strict):
    level: int = Field(3, ge=1)
    radii: list[float] = [1e-2, 1e-3, 1e-4, 1e-5, 1e-6]
    samples: int = Field(20, ge=1)
    mode: Literal["both", "lower"] = "both"


class BlowupParams(_Strict):
    level: int = Field(3, ge=0)
    amplitude: float = Field(10.0, ge=0)
    ell_max: float = Field(0.06, gt=0)
    ell_min: Optional[float] = None  # default: four grid spacings
    ells: int = Field(5, ge=2)
    support_end: float = Field(0.99, gt=0, le=1)
    node_levels: list[int] = [1, 2, 3, 4, 5]


class KsParams(_Strict):
    level: int = Field(3, ge=0)
    directions: int = Field(10, ge=0)


class VerifyParams(_Strict):
    inversions_per_level: int = Field(10, ge=1)
    densities: int = Field(10, ge=1)  # duality suite: densities x potentials pairs
    potentials: int = Field(10, ge=1)
    triples: int = Field(20, ge=1)
    bound_densities: int = Field(50, ge=1)
    directions: int = Field(10, ge=1)
    ks_directions: int = Field(3, ge=1)
    samples: int = Field(10, ge=1)


class ExperimentSection(_Strict):
    invert: InvertParams = InvertParams()
    sweep: SweepParams = SweepParams()
    probe: ProbeParams = ProbeParams()
    quasi: QuasiParams = QuasiParams()
    modulus: ModulusParams = ModulusParams()
    blowup: BlowupParams = BlowupParams()
    ks: KsParams = KsParams()
    verify: VerifyParams = VerifyParams()


class RunConfig(_Strict):
    model: ModelSection = ModelSection()
    density: DensitySection = DensitySection()
    experiment: ExperimentSection = ExperimentSection()
    tolerances: Tolerances = Tolerances()
    seed: int = 0

    def canonical(self) -> dict:
        return self.model_dump(mode="json")


def parse_config(data: dict) -> RunConfig:
    try:
        return RunConfig.model_validate(data)
    except ValidationError as exc:
        raise ConfigError(str(exc)) from None


def load_config(path: str | Path | None) -> RunConfig:
    """Read a TOML (``.toml``) or JSON config; ``None`` gives all defaults."""
    if path is None:
        return RunConfig()
    path = Path(path)
    try:
        raw = path.read_bytes()
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc}") from None
    try:
        if path.suffix.lower() == ".json":
            data = json.loads(raw.decode("utf-8"))
        else:
            data = tomllib.loads(raw.decode("utf-8"))
    except (ValueError, UnicodeDecodeError) as exc:
        raise ConfigError(f"cannot parse config {path}: {exc}") from None
    if not isinstance(data, dict):
        raise ConfigError("config root must be a table")
    return parse_config(data)


def apply_tolerance_overrides(config: RunConfig, overrides: list[str]) -> RunConfig:
    """Apply ``name=value`` strings to the tolerance table."""
    if not overrides:
        return config
    updates = {}
    for item in overrides:
        name, sep, value = item.partition("=")
        if not sep:
            raise ConfigError(f"tolerance override must be name=value, got {item!r}")
        try:
            updates[name.strip()] = float(value)
        except ValueError:
            raise ConfigError(f"tolerance {name!r} is not a number: {value!r}") from None
    data = config.canonical()
    data["tolerances"].update(updates)
    return parse_config(data)


def config_hash(config: RunConfig) -> str:
    text = json.dumps(config.canonical(), sort_keys=True, separators=(",", ":"))
    return hashlib.sha256(text.encode("utf-8")).hexdigest()
