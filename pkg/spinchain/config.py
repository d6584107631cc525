"""Run configuration loading, overrides and canonical hashing."""

import hashlib
import json
import math
import os
import sys
import types
import typing
from dataclasses import dataclass, field, fields, asdict, is_dataclass
from pathlib import Path

if sys.version_info >= (3, 11):
    import tomllib
else:
    import tomli as tomllib


DEFAULT_L_MAX = 14
OUTPUT_ENV = "SPINCHAIN_OUTPUT"
DEFAULT_OUTPUT_DIR = Path("results")

MODEL_KINDS = ("degenerate", "pxp")
RAMP_KINDS = {
    "degenerate": ("linear-degen", "cosine-degen"),
    "pxp": ("linear-pxp", "cosine-pxp"),
}
ENGINES = ("eigenbasis-ode", "direct-rk4", "eigen-exponential")
AVERAGE_MODES = ("stride", "all", "literal")


class ConfigError(Exception):
    """Invalid run configuration."""
    pass


@dataclass
class ModelConfig:
    kind: str = "degenerate"
    L: int = 8
    V0: float = 1.0
    w: float = 1.0
    l_max: int = DEFAULT_L_MAX


@dataclass
class SpectrumConfig:
    h_min: float = -1.0
    h_max: float = 1.0
    points: int = 101


@dataclass
class RampConfig:
    kind: str = "linear-degen"
    # h0 for degenerate kinds, lambda_0 for PXP kinds
    amplitude: float = 5.0
    tau: float = 10.0
    start_fraction: float = 0.0
    end_fraction: float = 1.0
    samples: int = 201
    engine: str = "eigenbasis-ode"
    steps_per_tau: int = 5000
    norm_tol: float = 1e-6


@dataclass
class SweepConfig:
    # Explicit list wins over the log-spaced grid.
    taus: list[float] = field(default_factory=list)
    tau_min: float = 0.01
    tau_max: float = 100.0
    tau_points: int = 40


@dataclass
class FloquetConfig:
    h0: float = 25.0
    # Drive frequency: either the special index p (omega = h0/p) or an explicit
    # h0/omega ratio, or omega_d directly.
    p: int | None = 1
    h0_over_omega: float | None = None
    omega_d: float | None = None
    theta: float = 0.0
    m_max: int = 2500
    m0: int = 1500
    window: int = 1000
    stride: int = 5
    average_mode: str = "stride"
    # Long runs go to m0 + horizon_factor * window periods and also report the
    # average over their last window.
    long_horizon: bool = False
    horizon_factor: int = 10
    # floquet-sweep grid
    h0_values: list[float] = field(default_factory=lambda: [5.0, 10.0, 15.0, 20.0, 25.0])
    thetas: list[float] = field(default_factory=lambda: [0.0])


@dataclass
class FptConfig:
    # (V0, h0, T) triples; fixed so runs stay deterministic.
    points: list[list[float]] = field(default_factory=lambda: [
        [0.3, 2.0, 1.3],
        [0.2, 1.0, 2 * math.pi],
        [0.5, 3.0, 0.7],
        [0.1, 2.5, 5.026548245743669],  # h0 T = 4 pi
        [0.25, 1.7, 2.1],
    ])


@dataclass
class FitConfig:
    tau_min: float | None = None
    tau_max: float | None = None
    column: str = "Q"
    exponents: list[float] = field(default_factory=lambda: [2.0, 1.0, 0.0])


@dataclass
class ToleranceConfig:
    degeneracy: float = 1e-10
    identity: float = 1e-12
    commutator: float = 1e-10
    unitarity: float = 1e-10
    hf_cross: float = 1e-10
    parity: float = 1e-9


@dataclass
class NotifyConfig:
    url: str | None = None


@dataclass
class RunConfig:
    model: ModelConfig = field(default_factory=ModelConfig)
    spectrum: SpectrumConfig = field(default_factory=SpectrumConfig)
    ramp: RampConfig = field(default_factory=RampConfig)
    sweep: SweepConfig = field(default_factory=SweepConfig)
    floquet: FloquetConfig = field(default_factory=FloquetConfig)
    fpt: FptConfig = field(default_factory=FptConfig)
    fit: FitConfig = field(default_factory=FitConfig)
    tolerances: ToleranceConfig = field(default_factory=ToleranceConfig)
    notify: NotifyConfig = field(default_factory=NotifyConfig)
    output_dir: Path = DEFAULT_OUTPUT_DIR
    workers: int = 1


_SECTIONS = {
    "model": ModelConfig,
    "spectrum": SpectrumConfig,
    "ramp": RampConfig,
    "sweep": SweepConfig,
    "floquet": FloquetConfig,
    "fpt": FptConfig,
    "fit": FitConfig,
    "tolerances": ToleranceConfig,
    "notify": NotifyConfig,
}


def _coerce(value, annotation, where: str):
    """Check a parsed value against a field annotation; ints widen to float."""
    if isinstance(annotation, types.UnionType):
        options = typing.get_args(annotation)
        if type(None) in options and (value is None or value == "none"):
            return None
        (annotation,) = [a for a in options if a is not type(None)]
    if typing.get_origin(annotation) is list:
        if not isinstance(value, list):
            raise ConfigError(f"{where} must be a list, got {value!r}")
        (item,) = typing.get_args(annotation)
        return [_coerce(v, item, f"{where}[{i}]") for i, v in enumerate(value)]
    if annotation is float:
        if isinstance(value, (int, float)) and not isinstance(value, bool):
            return float(value)
    elif annotation is int:
        if isinstance(value, int) and not isinstance(value, bool):
            return value
    elif annotation is str:
        if isinstance(value, str):
            return value
    elif annotation is bool:
        if isinstance(value, bool):
            return value
    else:
        raise ConfigError(f"{where} has unsupported type {annotation}")
    raise ConfigError(f"{where} must be {annotation.__name__}, got {value!r}")


def _parse_section(cls, data: dict, name: str):
    types_by_name = {f.name: f.type for f in fields(cls)}
    unknown = set(data) - set(types_by_name)
    if unknown:
        raise ConfigError(f"Unknown keys in [{name}]: {', '.join(sorted(unknown))}")
    return cls(**{key: _coerce(value, types_by_name[key], f"{name}.{key}") for key, value in data.items()})


def config_from_dict(data: dict) -> RunConfig:
    """Build a RunConfig from parsed TOML, filling defaults."""
    sections = {}
    for name, cls in _SECTIONS.items():
        section = data.get(name, {})
        if not isinstance(section, dict):
            raise ConfigError(f"[{name}] must be a table")
        sections[name] = _parse_section(cls, section, name)

    top_level = set(data) - set(_SECTIONS) - {"output_dir", "workers"}
    if top_level:
        raise ConfigError(f"Unknown top-level keys: {', '.join(sorted(top_level))}")

    output_dir = data.get("output_dir")
    if output_dir is not None:
        output_dir = _coerce(output_dir, str, "output_dir")
    return RunConfig(
        **sections,
        output_dir=Path(output_dir) if output_dir else _default_output_dir(),
        workers=_coerce(data.get("workers", 1), int, "workers"),
    )


def _default_output_dir() -> Path:
    env = os.environ.get(OUTPUT_ENV)
    return Path(env) if env else DEFAULT_OUTPUT_DIR


def load_config(path: Path | None = None) -> RunConfig:
    """Load a run config file; no path means all defaults."""
    if path is None:
        return config_from_dict({})
    try:
        with open(path, "rb") as f:
            data = tomllib.load(f)
    except FileNotFoundError:
        raise ConfigError(f"Config file not found: {path}")
    except tomllib.TOMLDecodeError as e:
        raise ConfigError(f"Cannot parse {path}: {e}")
    return config_from_dict(data)


def _parse_value(text: str):
    """Parse an override value with TOML scalar/array syntax."""
    try:
        return tomllib.loads(f"v = {text}")["v"]
    except tomllib.TOMLDecodeError:
        return text


def apply_overrides(config: RunConfig, overrides: list[str]) -> RunConfig:
    """Apply `section.key=value` (or top-level `key=value`) overrides in place."""
    for item in overrides:
        if "=" not in item:
            raise ConfigError(f"Override must look like section.key=value, got {item!r}")
        key, raw = item.split("=", 1)
        value = _parse_value(raw.strip())
        parts = key.strip().split(".")

        if len(parts) == 1:
            name = parts[0]
            if name == "output_dir":
                config.output_dir = Path(_coerce(value, str, name))
            elif name == "workers":
                config.workers = _coerce(value, int, name)
            else:
                raise ConfigError(f"Unknown top-level key {name!r}")
            continue

        if len(parts) != 2 or parts[0] not in _SECTIONS:
            raise ConfigError(f"Unknown config section in {key!r}")
        section = getattr(config, parts[0])
        types_by_name = {f.name: f.type for f in fields(section)}
        if parts[1] not in types_by_name:
            raise ConfigError(f"Unknown key {parts[1]!r} in [{parts[0]}]")
        setattr(section, parts[1], _coerce(value, types_by_name[parts[1]], key.strip()))
    return config


def validate_config(config: RunConfig) -> None:
    """Check every precondition that can be checked before computing."""
    m = config.model
    if m.kind not in MODEL_KINDS:
        raise ConfigError(f"Unknown model {m.kind!r}; expected one of {MODEL_KINDS}")
    if not isinstance(m.L, int) or not 3 <= m.L <= m.l_max:
        raise ConfigError(f"Chain length L={m.L} outside [3, {m.l_max}]")
    if m.V0 <= 0:
        raise ConfigError(f"V0 must be positive, got {m.V0}")
    if m.w <= 0:
        raise ConfigError(f"w must be positive, got {m.w}")

    s = config.spectrum
    if s.points < 1:
        raise ConfigError("Spectrum scan needs at least one h point")

    r = config.ramp
    if r.kind not in RAMP_KINDS[m.kind]:
        raise ConfigError(f"Ramp kind {r.kind!r} does not belong to model {m.kind!r}")
    if r.tau <= 0:
        raise ConfigError(f"Ramp time tau must be positive, got {r.tau}")
    if not 0.0 <= r.start_fraction < r.end_fraction <= 1.0:
        raise ConfigError("Ramp window must satisfy 0 <= start_fraction < end_fraction <= 1")
    if r.samples < 2:
        raise ConfigError("A ramp trace needs at least two samples")
    if r.engine not in ENGINES:
        raise ConfigError(f"Unknown engine {r.engine!r}; expected one of {ENGINES}")
    if r.steps_per_tau < 1 or r.norm_tol <= 0:
        raise ConfigError("steps_per_tau and norm_tol must be positive")

    sw = config.sweep
    if sw.taus:
        if any(t <= 0 for t in sw.taus) or sorted(sw.taus) != list(sw.taus):
            raise ConfigError("Sweep taus must be positive and ascending")
    elif not 0 < sw.tau_min < sw.tau_max or sw.tau_points < 1:
        raise ConfigError("Sweep grid needs 0 < tau_min < tau_max and tau_points >= 1")

    f = config.floquet
    if f.h0 <= 0:
        raise ConfigError(f"Drive amplitude h0 must be positive, got {f.h0}")
    if f.omega_d is None and f.h0_over_omega is None and f.p is None:
        raise ConfigError("Set one of floquet.p, floquet.h0_over_omega or floquet.omega_d")
    if f.omega_d is not None and f.omega_d <= 0:
        raise ConfigError("floquet.omega_d must be positive")
    if f.h0_over_omega is not None and f.h0_over_omega <= 0:
        raise ConfigError("floquet.h0_over_omega must be positive")
    if f.p is not None and f.p < 1:
        raise ConfigError("floquet.p must be a positive integer")
    if not 0.0 <= f.theta <= math.pi / 2 or any(not 0.0 <= t <= math.pi / 2 for t in f.thetas):
        raise ConfigError("Initial-state angles must lie in [0, pi/2]")
    if f.m_max < 1:
        raise ConfigError("floquet.m_max must be at least 1")
    if f.m0 + f.window > f.m_max:
        raise ConfigError(f"Averaging window m0+window={f.m0 + f.window} exceeds m_max={f.m_max}")
    if f.stride < 1 or f.average_mode not in AVERAGE_MODES:
        raise ConfigError(f"floquet.stride must be >= 1 and average_mode one of {AVERAGE_MODES}")
    if f.horizon_factor < 1:
        raise ConfigError("floquet.horizon_factor must be at least 1")

    for point in config.fpt.points:
        if len(point) != 3 or point[1] <= 0 or point[2] <= 0:
            raise ConfigError(f"fpt points are (V0, h0>0, T>0) triples, got {point}")

    fc = config.fit
    if (fc.tau_min is None) != (fc.tau_max is None):
        raise ConfigError("Set both fit.tau_min and fit.tau_max, or neither")
    if fc.tau_min is not None and not 0 < fc.tau_min < fc.tau_max:
        raise ConfigError("Fit window needs 0 < tau_min < tau_max")

    for name, value in asdict(config.tolerances).items():
        if not value > 0:
            raise ConfigError(f"tolerances.{name} must be positive, got {value}")

    if config.workers < 1:
        raise ConfigError("workers must be at least 1")


def _canonical(value):
    if is_dataclass(value):
        return _canonical(asdict(value))
    if isinstance(value, dict):
        return {str(k): _canonical(v) for k, v in value.items()}
    if isinstance(value, (list, tuple)):
        return [_canonical(v) for v in value]
    if isinstance(value, Path):
        return str(value)
    if isinstance(value, bool) or value is None or isinstance(value, str):
        return value
    if isinstance(value, (int, float)):
        # 1 and 1.0 hash the same
        return repr(float(value))
    return str(value)


def canonical_json(value) -> str:
    return json.dumps(_canonical(value), sort_keys=True, separators=(",", ":"))


def config_hash(value) -> str:
    """Deterministic short hash of a config (or any config fragment)."""
    return hashlib.sha256(canonical_json(value).encode()).hexdigest()[:16]


def physics_hash(config: RunConfig) -> str:
    """Hash of everything except where outputs go and how many workers run."""
    data = asdict(config)
    data.pop("output_dir")
    data.pop("workers")
    data.pop("notify")
    return config_hash(data)
