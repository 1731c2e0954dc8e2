"""
Configuration for the sub-threshold 8T SRAM read-window simulator.

Defaults are module constants. A run overrides them through a flat
``key.path = value`` file (grammar in docs/protocol/Config_Grammar.md) and
through ``SRAMSIM_<KEY_PATH>`` environment variables.
"""
from __future__ import annotations

import math
import os
from dataclasses import dataclass, field, fields, replace
from enum import Enum
from pathlib import Path
from typing import Any, Callable, Dict, List, Mapping, Optional, Tuple

from src.errors import ConfigError

# === Device (subthreshold transistor model) ===
DEFAULT_I0 = 1e-7            # A
DEFAULT_VTH0 = 0.35          # V
DEFAULT_SLOPE_FACTOR = 1.4
DEFAULT_DIBL = 0.1
DEFAULT_VTH_TEMPCO = -1e-3   # V/K
REFERENCE_TEMPERATURE = 300.0

# === Operating Point ===
DEFAULT_VDD = 0.25
DEFAULT_TEMPERATURE = 300.0
MAX_VDD = 1.0
MIN_TEMPERATURE = 200.0
MAX_TEMPERATURE = 400.0

# === Column / Bank Geometry ===
DEFAULT_DEPTH = 256
MAX_DEPTH = 4096
DEFAULT_C_RBL = 10e-15       # F
DEFAULT_V_REF_RATIO = 0.5
BANK_ARRAYS = 4
ARRAY_COLUMNS = 64

# === Variation (Monte Carlo) ===
DEFAULT_SIGMA_VTH = 0.030
DEFAULT_SIGMA_OS = 0.0114
DEFAULT_SEED = 1
DEFAULT_TRIALS = 1000

# === Digitized Timing (replica columns) ===
REPLICA_DEPTH = 256
REPLICA_RC_COUNT = 64
REPLICA_DC_COUNT = 192
DEFAULT_V_TRIP_FLOOR = 0.1
SWITCH_OVERHEAD = 0.05

# === SOSA ===
SOSA_PHASES = (2, 2, 4)      # precharge, sample, amplify (clock periods)
SIGMA_OS_CAP = 0.0114

# === Calibration (test mode) ===
COUNTER_MAX = 512
CR_MARGIN = 1.2
DVTH_SIGMAS = 5.0
TEST_R01 = 1.0
CALIBRATION_VDD_GRID = (0.20, 0.25, 0.30, 0.35, 0.40, 0.45)

# === Read Mode ===
RWL_RATIO = 0.5
READ_CHIPS = 4
READ_FILL_R01 = 0.5

# === Sweep / Clock Grids ===
GRID_VDD = (0.25, 0.30, 0.35, 0.40, 0.45)
GRID_TEMPERATURE = (250.0, 300.0, 350.0)
GRID_DEPTH = (64, 128, 256, 512)
GRID_R01 = (0.0, 0.25, 0.5, 0.75, 1.0)
CLOCK_VDD_GRID = (0.25, 0.30, 0.35, 0.40, 0.45, 0.50, 0.55, 0.60, 0.65, 0.70, 0.75, 0.80)

# === Output ===
OUTPUT_DIR = "results"
LOG_DIR = "logs"
ENV_PREFIX = "SRAMSIM_"
AUTO = "auto"


# === Global Process Corners ===
class Corner(str, Enum):
    SSG = "SSG"     # slow: vth0 raised
    TTG = "TTG"     # typical
    FFG = "FFG"     # fast: vth0 lowered

    @property
    def vth_shift(self) -> float:
        return CORNER_VTH_SHIFT[self]


CORNER_VTH_SHIFT = {
    Corner.SSG: 0.03,
    Corner.TTG: 0.0,
    Corner.FFG: -0.03,
}


# === Bank Fill Patterns (setup-time data) ===
class FillPattern(str, Enum):
    CHECKERBOARD = "checkerboard"
    ZEROS = "zeros"
    ONES = "ones"
    RANDOM = "random"


def _param(default: Any, kind: str, key: Optional[str] = None, enum: Optional[type] = None):
    """Dataclass field carrying its config-file kind (and key name if it differs)."""
    return field(default=default, metadata={"kind": kind, "key": key, "enum": enum})


def _require(condition: bool, key_path: str, message: str):
    if not condition:
        raise ConfigError(message, key_path)


def _ascending(values: Tuple[float, ...]) -> bool:
    return all(a < b for a, b in zip(values, values[1:]))


@dataclass(frozen=True)
class DeviceParams:
    """Subthreshold drain-current constants. v_t is derived from temperature, never stored."""
    i0: float = _param(DEFAULT_I0, "float")
    vth0: float = _param(DEFAULT_VTH0, "float")
    n: float = _param(DEFAULT_SLOPE_FACTOR, "float")
    lam: float = _param(DEFAULT_DIBL, "float", key="lambda")
    vth_tempco: float = _param(DEFAULT_VTH_TEMPCO, "float")
    corner: Corner = _param(Corner.TTG, "word", enum=Corner)

    def __post_init__(self):
        _require(self.i0 > 0, "device.i0", "must be > 0")
        _require(self.vth0 > 0, "device.vth0", "must be > 0")
        _require(self.n >= 1, "device.n", "must be >= 1")
        _require(0 <= self.lam < 1, "device.lambda", "must be in [0, 1)")
        _require(math.isfinite(self.vth_tempco), "device.vth_tempco", "must be finite")
        _require(self.vth_nominal > 0, "device.corner", "corner shift leaves vth0 <= 0")

    @property
    def vth_nominal(self) -> float:
        """Nominal threshold at the configured global corner."""
        return self.vth0 + self.corner.vth_shift


@dataclass(frozen=True)
class Environment:
    vdd: float = _param(DEFAULT_VDD, "float")
    temperature: float = _param(DEFAULT_TEMPERATURE, "float")

    def __post_init__(self):
        _require(0 < self.vdd <= MAX_VDD, "env.vdd", f"must be in (0, {MAX_VDD}]")
        _require(MIN_TEMPERATURE <= self.temperature <= MAX_TEMPERATURE, "env.temperature",
                 f"must be in [{MIN_TEMPERATURE}, {MAX_TEMPERATURE}] K")

    def with_vdd(self, vdd: float) -> "Environment":
        return replace(self, vdd=vdd)


@dataclass(frozen=True)
class ColumnSettings:
    depth: int = _param(DEFAULT_DEPTH, "int")
    c_rbl: float = _param(DEFAULT_C_RBL, "float")
    v_ref_ratio: float = _param(DEFAULT_V_REF_RATIO, "float")

    def __post_init__(self):
        _require(1 <= self.depth <= MAX_DEPTH, "column.depth", f"must be in [1, {MAX_DEPTH}]")
        _require(self.c_rbl > 0, "column.c_rbl", "must be > 0")
        _require(0 < self.v_ref_ratio < 1, "column.v_ref_ratio", "must be in (0, 1)")


@dataclass(frozen=True)
class VariationModel:
    """
    Per-cell Vth mismatch and SA offset statistics.

    A trial is one chip realization; every random draw is keyed by
    (seed, trial, stream) so trials can be evaluated in any order.
    """
    sigma_vth: float = _param(DEFAULT_SIGMA_VTH, "float")
    sigma_os: float = _param(DEFAULT_SIGMA_OS, "float")
    seed: int = _param(DEFAULT_SEED, "int")
    trials: int = _param(DEFAULT_TRIALS, "int")

    def __post_init__(self):
        _require(self.sigma_vth >= 0, "variation.sigma_vth", "must be >= 0")
        _require(self.sigma_os >= 0, "variation.sigma_os", "must be >= 0")
        _require(0 <= self.seed < 2 ** 64, "variation.seed", "must be a 64-bit unsigned integer")
        _require(self.trials >= 1, "variation.trials", "must be >= 1")

    def without_variation(self) -> "VariationModel":
        return replace(self, sigma_vth=0.0, sigma_os=0.0)


@dataclass(frozen=True)
class ReplicaConfig:
    """
    Replica column of the digitized-timing clock: rc_count replica cells
    read '0' in parallel while dc_count dummy cells hold '1'.
    v_trip = None means max(vdd - vth0, v_trip_floor).
    """
    depth: int = _param(REPLICA_DEPTH, "int")
    rc_count: int = _param(REPLICA_RC_COUNT, "int")
    dc_count: int = _param(REPLICA_DC_COUNT, "int")
    v_trip: Optional[float] = _param(None, "optional_float")
    v_trip_floor: float = _param(DEFAULT_V_TRIP_FLOOR, "float")
    overhead: float = _param(SWITCH_OVERHEAD, "float")

    def __post_init__(self):
        _require(self.rc_count >= 1, "replica.rc_count", "must be >= 1")
        _require(self.dc_count >= 0, "replica.dc_count", "must be >= 0")
        _require(self.rc_count + self.dc_count == self.depth, "replica.depth",
                 "must equal rc_count + dc_count")
        _require(self.v_trip is None or self.v_trip > 0, "replica.v_trip", "must be > 0 or auto")
        _require(self.v_trip_floor > 0, "replica.v_trip_floor", "must be > 0")
        _require(self.overhead >= 0, "replica.overhead", "must be >= 0")


@dataclass(frozen=True)
class SosaModel:
    """
    Behavioral SOSA: threshold comparator with a Gaussian offset drawn
    (from VariationModel.sigma_os) once per SA instance per trial.
    """
    phase_lengths: Tuple[int, ...] = _param(SOSA_PHASES, "ints", key="phases")
    sigma_os_cap: float = _param(SIGMA_OS_CAP, "float")

    def __post_init__(self):
        _require(len(self.phase_lengths) == 3, "sosa.phases", "expects precharge, sample, amplify")
        _require(all(p >= 1 for p in self.phase_lengths), "sosa.phases", "phase lengths must be >= 1")
        _require(self.sigma_os_cap >= 0, "sosa.sigma_os_cap", "must be >= 0")

    @property
    def cycles(self) -> int:
        return sum(self.phase_lengths)


@dataclass(frozen=True)
class CalibrationSettings:
    counter_max: int = _param(COUNTER_MAX, "int")
    margin: float = _param(CR_MARGIN, "float")
    dvth_sigmas: float = _param(DVTH_SIGMAS, "float")
    dvth: Optional[float] = _param(None, "optional_float")
    test_r01: float = _param(TEST_R01, "float")
    vdd_grid: Tuple[float, ...] = _param(CALIBRATION_VDD_GRID, "floats")

    def __post_init__(self):
        _require(self.counter_max >= 1, "calibration.counter_max", "must be >= 1")
        _require(self.margin >= 1, "calibration.margin", "must be >= 1")
        _require(self.dvth_sigmas >= 0, "calibration.dvth_sigmas", "must be >= 0")
        _require(self.dvth is None or self.dvth >= 0, "calibration.dvth", "must be >= 0 or auto")
        _require(0 <= self.test_r01 <= 1, "calibration.test_r01", "must be in [0, 1]")
        _require(all(0 < v <= MAX_VDD for v in self.vdd_grid), "calibration.vdd_grid",
                 f"values must be in (0, {MAX_VDD}]")
        _require(_ascending(self.vdd_grid), "calibration.vdd_grid", "must be strictly ascending")

    def delta_vth(self, sigma_vth: float) -> float:
        """Worst accessed-cell Vth mismatch used for the PVT-reduced window."""
        if self.dvth is not None:
            return self.dvth
        return self.dvth_sigmas * sigma_vth


@dataclass(frozen=True)
class ReadSettings:
    rwl_ratio: float = _param(RWL_RATIO, "float")
    chips: int = _param(READ_CHIPS, "int")
    fill: FillPattern = _param(FillPattern.CHECKERBOARD, "word", enum=FillPattern)
    fill_r01: float = _param(READ_FILL_R01, "float")

    def __post_init__(self):
        _require(self.rwl_ratio >= 0, "read.rwl_ratio", "must be >= 0")
        _require(self.chips >= 1, "read.chips", "must be >= 1")
        _require(0 <= self.fill_r01 <= 1, "read.fill_r01", "must be in [0, 1]")


@dataclass(frozen=True)
class GridSpec:
    """Cartesian sweep grid."""
    vdd: Tuple[float, ...] = _param(GRID_VDD, "floats")
    temperature: Tuple[float, ...] = _param(GRID_TEMPERATURE, "floats")
    depth: Tuple[int, ...] = _param(GRID_DEPTH, "ints")
    r01: Tuple[float, ...] = _param(GRID_R01, "floats")

    def __post_init__(self):
        _require(all(0 < v <= MAX_VDD for v in self.vdd), "grid.vdd", f"values must be in (0, {MAX_VDD}]")
        _require(all(MIN_TEMPERATURE <= t <= MAX_TEMPERATURE for t in self.temperature),
                 "grid.temperature", f"values must be in [{MIN_TEMPERATURE}, {MAX_TEMPERATURE}]")
        _require(all(1 <= d <= MAX_DEPTH for d in self.depth), "grid.depth", f"values must be in [1, {MAX_DEPTH}]")
        _require(all(0 <= r <= 1 for r in self.r01), "grid.r01", "values must be in [0, 1]")

    @property
    def size(self) -> int:
        return len(self.vdd) * len(self.temperature) * len(self.depth) * len(self.r01)


@dataclass(frozen=True)
class ClockSettings:
    vdd_grid: Tuple[float, ...] = _param(CLOCK_VDD_GRID, "floats")

    def __post_init__(self):
        _require(all(0 < v <= MAX_VDD for v in self.vdd_grid), "clock.vdd_grid", f"values must be in (0, {MAX_VDD}]")
        _require(_ascending(self.vdd_grid), "clock.vdd_grid", "must be strictly ascending")


@dataclass(frozen=True)
class OutputSettings:
    dir: str = _param(OUTPUT_DIR, "text")
    log_dir: str = _param(LOG_DIR, "text")


# Canonical section order for parsing, serialization and hashing.
SECTIONS = (
    ("device", DeviceParams),
    ("env", Environment),
    ("column", ColumnSettings),
    ("variation", VariationModel),
    ("replica", ReplicaConfig),
    ("sosa", SosaModel),
    ("calibration", CalibrationSettings),
    ("read", ReadSettings),
    ("grid", GridSpec),
    ("clock", ClockSettings),
    ("output", OutputSettings),
)

# Keys that determine a calibrated lookup table.
TABLE_SECTIONS = ("device", "column", "variation", "replica", "sosa", "calibration")


@dataclass(frozen=True)
class RunConfig:
    device: DeviceParams = field(default_factory=DeviceParams)
    env: Environment = field(default_factory=Environment)
    column: ColumnSettings = field(default_factory=ColumnSettings)
    variation: VariationModel = field(default_factory=VariationModel)
    replica: ReplicaConfig = field(default_factory=ReplicaConfig)
    sosa: SosaModel = field(default_factory=SosaModel)
    calibration: CalibrationSettings = field(default_factory=CalibrationSettings)
    read: ReadSettings = field(default_factory=ReadSettings)
    grid: GridSpec = field(default_factory=GridSpec)
    clock: ClockSettings = field(default_factory=ClockSettings)
    output: OutputSettings = field(default_factory=OutputSettings)
    applied_defaults: Tuple[str, ...] = field(default=(), compare=False)

    def __post_init__(self):
        _require(self.variation.sigma_os <= self.sosa.sigma_os_cap, "variation.sigma_os",
                 f"exceeds sosa.sigma_os_cap ({self.sosa.sigma_os_cap})")

    @property
    def seed(self) -> int:
        return self.variation.seed

    @property
    def dvth(self) -> float:
        return self.calibration.delta_vth(self.variation.sigma_vth)

    def column_config(self, vdd: Optional[float] = None, temperature: Optional[float] = None,
                      depth: Optional[int] = None):
        """ColumnConfig at an operating point; v_ref follows vdd through column.v_ref_ratio."""
        from src.column import ColumnConfig

        env = Environment(
            vdd=self.env.vdd if vdd is None else vdd,
            temperature=self.env.temperature if temperature is None else temperature,
        )
        return ColumnConfig(
            depth=self.column.depth if depth is None else depth,
            c_rbl=self.column.c_rbl,
            v_ref=self.column.v_ref_ratio * env.vdd,
            env=env,
            params=self.device,
        )

    def with_overrides(self, seed: Optional[int] = None, trials: Optional[int] = None,
                       out: Optional[str] = None) -> "RunConfig":
        """Apply command-line flags (highest precedence)."""
        variation = self.variation
        if seed is not None:
            variation = replace(variation, seed=seed)
        if trials is not None:
            variation = replace(variation, trials=trials)
        output = self.output if out is None else replace(self.output, dir=out)
        flagged = {key for key, value in (("variation.seed", seed), ("variation.trials", trials),
                                          ("output.dir", out)) if value is not None}
        defaults = tuple(key for key in self.applied_defaults if key not in flagged)
        return replace(self, variation=variation, output=output, applied_defaults=defaults)


# =============================================================================
# Flat key-path file format
# =============================================================================

def _key_name(section: str, f) -> str:
    return f"{section}.{f.metadata.get('key') or f.name}"


def config_keys() -> List[str]:
    """Every accepted key path, in canonical order."""
    return [_key_name(section, f) for section, cls in SECTIONS for f in fields(cls)]


def _convert(raw: str, f, key_path: str, line: Optional[int]) -> Any:
    kind = f.metadata["kind"]
    try:
        if kind == "float":
            value = float(raw)
            if not math.isfinite(value):
                raise ValueError(raw)
            return value
        if kind == "int":
            return int(raw, 10)
        if kind == "optional_float":
            return None if raw.lower() == AUTO else _convert(raw, _FLOAT_FIELD, key_path, line)
        if kind in ("floats", "ints"):
            items = [item.strip() for item in raw.split(",")]
            if not items or any(not item for item in items):
                raise ValueError(raw)
            element = _FLOAT_FIELD if kind == "floats" else _INT_FIELD
            return tuple(_convert(item, element, key_path, line) for item in items)
        if kind == "word":
            enum_cls = f.metadata["enum"]
            for member in enum_cls:
                if member.value.lower() == raw.lower():
                    return member
            choices = ", ".join(m.value for m in enum_cls)
            raise ConfigError(f"unknown value '{raw}' (expected one of: {choices})", key_path, line)
        if kind == "text":
            return raw
    except ValueError:
        raise ConfigError(f"cannot parse '{raw}' as {kind}", key_path, line) from None
    raise ConfigError(f"unsupported kind {kind}", key_path, line)


@dataclass
class _Scalar:
    metadata: Dict[str, Any]


_FLOAT_FIELD = _Scalar({"kind": "float"})
_INT_FIELD = _Scalar({"kind": "int"})


def _format(value: Any, kind: str) -> str:
    if value is None:
        return AUTO
    if kind in ("floats", "ints"):
        element = "float" if kind == "floats" else "int"
        return ", ".join(_format(v, element) for v in value)
    if kind in ("float", "optional_float"):
        return repr(float(value))
    if isinstance(value, Enum):
        return value.value
    return str(value)


def parse_config_lines(text: str) -> Dict[str, Tuple[str, Optional[int]]]:
    """Split config text into {key_path: (raw value, line number)}."""
    known = set(config_keys())
    entries: Dict[str, Tuple[str, Optional[int]]] = {}
    for number, raw_line in enumerate(text.splitlines(), start=1):
        line = raw_line.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError("expected 'key = value'", line=number)
        key, value = (part.strip() for part in line.split("=", 1))
        if not key or not value:
            raise ConfigError("expected 'key = value'", key or None, number)
        if key not in known:
            raise ConfigError("unknown key", key, number)
        if key in entries:
            raise ConfigError(f"duplicate key (first set on line {entries[key][1]})", key, number)
        entries[key] = (value, number)
    return entries


def environment_overrides(environ: Mapping[str, str]) -> Dict[str, Tuple[str, Optional[int]]]:
    """SRAMSIM_ENV__VDD=0.3 -> {'env.vdd': ('0.3', None)}."""
    known = set(config_keys())
    entries: Dict[str, Tuple[str, Optional[int]]] = {}
    for name in sorted(environ):
        if not name.startswith(ENV_PREFIX):
            continue
        key = name[len(ENV_PREFIX):].lower().replace("__", ".")
        if key not in known:
            raise ConfigError(f"unknown key from environment variable {name}", key)
        entries[key] = (environ[name].strip(), None)
    return entries


def build_config(entries: Mapping[str, Tuple[str, Optional[int]]]) -> RunConfig:
    """Convert raw entries to a validated RunConfig, filling and recording defaults."""
    sections: Dict[str, Any] = {}
    defaults: List[str] = []
    for section, cls in SECTIONS:
        kwargs = {}
        for f in fields(cls):
            key_path = _key_name(section, f)
            if key_path in entries:
                raw, line = entries[key_path]
                kwargs[f.name] = _convert(raw, f, key_path, line)
            else:
                defaults.append(key_path)
        sections[section] = cls(**kwargs)
    return RunConfig(**sections, applied_defaults=tuple(defaults))


def parse_config(path: Optional[str] = None, environ: Optional[Mapping[str, str]] = None) -> RunConfig:
    """
    Load a RunConfig from a key-path file plus SRAMSIM_* environment overrides.

    Args:
        path: Config file; None means all defaults
        environ: Environment mapping (defaults to os.environ)

    Returns:
        Validated RunConfig; ``applied_defaults`` lists every key left at its default
    """
    text = ""
    if path is not None:
        try:
            text = Path(path).read_text(encoding="utf-8")
        except OSError as e:
            raise ConfigError(f"cannot read config file {path}: {e.strerror}") from e
    entries = parse_config_lines(text)
    entries.update(environment_overrides(os.environ if environ is None else environ))
    return build_config(entries)


def config_items(config: RunConfig, include: Optional[Callable[[str], bool]] = None) -> List[Tuple[str, str]]:
    """(key_path, formatted value) pairs in canonical order."""
    items = []
    for section, cls in SECTIONS:
        block = getattr(config, section)
        for f in fields(cls):
            key_path = _key_name(section, f)
            if include is None or include(key_path):
                items.append((key_path, _format(getattr(block, f.name), f.metadata["kind"])))
    return items


def serialize_config(config: RunConfig, include: Optional[Callable[[str], bool]] = None) -> str:
    """Canonical text form; parse_config of this text reproduces ``config``."""
    return "".join(f"{key} = {value}\n" for key, value in config_items(config, include))


def is_table_key(key_path: str) -> bool:
    return key_path.split(".", 1)[0] in TABLE_SECTIONS or key_path == "env.temperature"
