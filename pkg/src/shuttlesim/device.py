"""Device geometry, clavier drive waveforms, and run configuration.

The simulated device is one unit cell of a conveyor-belt shuttling channel:
four clavier gates of width ``gate_width`` separated by ``gate_gap`` repeat
periodically along x, flanked in y by two screening-gate strips that run the
full length of the cell.  Below the gate stack sits an oxide layer, a thin Si
cap, and a strained Si quantum well embedded in SiGe barriers.  All lengths
here are nm; surface roughness amplitudes are quoted in Angstrom because
they are compared against the a0/4 atomic layer pitch.

The four clavier gates are driven with 90-degree phase-shifted cosines,

    V_j(t) = A * cos(2*pi*t/T - (pi/2)*(j-1)) + B + dB * ((j+1) mod 2)

which drags a single potential well across the cell once per period.  The
``alt_offset`` term dB exists for devices where alternate gates sit further
from the channel; for the single-layer gate model used here its default is
zero, otherwise gates 2 and 4 would form their own wells.

Configuration files are INI-style with sections [geometry], [drive],
[roughness], [alloy], [vff], [valley], [run] and an optional [schema]
section carrying the format version.  Every key has a default; a minimal
file may contain only the sections it overrides.
"""

from __future__ import annotations

import configparser
import dataclasses
import hashlib
import io
import math
from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .constants import A0_NM, LAYER_SPACING_ANGSTROM
from .errors import ConfigError

SCHEMA_VERSION = 1

# default number of trace steps keeps roughly one sample per 5 atomic layers
# of dot travel; finer sampling mostly resamples the same terraces.
_STEP_PITCH_NM = 5.0 * LAYER_SPACING_ANGSTROM * 0.1


def _require(cond: bool, message: str) -> None:
    if not cond:
        raise ConfigError(message)


@dataclass(frozen=True)
class DeviceGeometry:
    """Static geometry of one conveyor-belt unit cell (lengths in nm)."""

    gate_width: float = 10.0
    gate_gap: float = 2.5
    cell_length: float = 0.0        # 0 means derive 4*(gate_width+gate_gap)
    y_extent: float = 60.0
    screen_width: float = 15.0
    screen_gap: float = 2.5
    well_thickness: float = 6.0
    barrier_thickness: float = 3.0
    cap_thickness: float = 2.0
    oxide_thickness: float = 3.0
    box_x: float = 12.0
    box_y: float = 1.1
    box_z: float = 0.0              # 0 means well + 2*barrier
    grid_spacing: float = 1.0

    def __post_init__(self):
        derived = 4.0 * (self.gate_width + self.gate_gap)
        if self.cell_length == 0.0:
            object.__setattr__(self, "cell_length", derived)
        if self.box_z == 0.0:
            object.__setattr__(self, "box_z", self.stack_z_atoms)
        _require(self.gate_width > 0, "geometry.gate_width must be positive")
        _require(self.gate_gap > 0, "geometry.gate_gap must be positive")
        if abs(self.cell_length - derived) > 1e-9 * derived:
            raise ConfigError(
                "geometry.cell_length must equal 4*(gate_width+gate_gap) "
                f"= {derived:g} nm, got {self.cell_length:g}"
            )
        for name in ("well_thickness", "barrier_thickness", "cap_thickness",
                     "oxide_thickness", "y_extent", "screen_width",
                     "screen_gap", "grid_spacing"):
            _require(getattr(self, name) > 0, f"geometry.{name} must be positive")
        _require(
            self.y_extent - 2.0 * (self.screen_width + self.screen_gap)
            > self.grid_spacing,
            "geometry.y_extent leaves no room for clavier gates between "
            "the screening strips",
        )
        _require(self.box_x <= self.cell_length,
                 "geometry.box_x exceeds cell_length")
        _require(self.box_y <= self.y_extent,
                 "geometry.box_y exceeds y_extent")
        _require(self.box_z <= self.stack_z_atoms + 1e-12,
                 "geometry.box_z exceeds well + 2*barrier")
        _require(self.grid_spacing < self.gate_gap + 1e-12,
                 "geometry.grid_spacing must resolve gate_gap")

    @property
    def stack_z_atoms(self) -> float:
        """Thickness of the atomistic region: well plus both barriers (nm)."""
        return self.well_thickness + 2.0 * self.barrier_thickness

    @property
    def stack_height(self) -> float:
        """Full electrostatic stack height (nm)."""
        return self.stack_z_atoms + self.cap_thickness + self.oxide_thickness

    def gate_footprints_x(self) -> list[tuple[float, float]]:
        """x intervals [x0, x0+width] of the four clavier gates."""
        pitch = self.gate_width + self.gate_gap
        return [(j * pitch, j * pitch + self.gate_width) for j in range(4)]

    def clavier_span_y(self) -> tuple[float, float]:
        """y interval covered by the clavier gates between the screens."""
        lo = self.screen_width + self.screen_gap
        return (lo, self.y_extent - lo)


@dataclass(frozen=True)
class DriveWaveform:
    """Clavier drive parameters (V, s)."""

    amplitude: float = 0.1
    base_offset: float = 0.5
    alt_offset: float = 0.0
    screen_voltage: float = -0.3
    period: float = 1.0

    def __post_init__(self):
        _require(self.period > 0, "drive.period must be positive")
        _require(self.amplitude > 0, "drive.amplitude must be positive")


def clavier_voltage(drive: DriveWaveform, j: int, t: float) -> float:
    """Voltage on clavier gate j (1-based) at time t."""
    if j < 1 or j > 4:
        raise ConfigError(f"clavier gate index must be 1..4, got {j}")
    phase = 2.0 * math.pi * t / drive.period - 0.5 * math.pi * (j - 1)
    return (drive.amplitude * math.cos(phase) + drive.base_offset
            + drive.alt_offset * ((j + 1) % 2))


def voltage_vector(drive: DriveWaveform, t: float) -> np.ndarray:
    """All six gate voltages at time t: four clavier gates then both screens."""
    v = [clavier_voltage(drive, j, t) for j in (1, 2, 3, 4)]
    v.extend([drive.screen_voltage, drive.screen_voltage])
    return np.asarray(v)


@dataclass(frozen=True)
class RoughnessSpec:
    """Self-affine interface statistics.

    hurst is the Hurst exponent H of the isotropic height-height PSD
    C(k) ~ |k|^(-2(1+H)); lambda_min/lambda_max bound the self-similar
    band (nm); rms is the target sample roughness (Angstrom).
    """

    hurst: float = 0.3
    lambda_min: float = 0.1
    lambda_max: float = 100.0
    rms: float = 3.0
    mean_height: float = 0.0
    num_modes: int = 1000
    seed: int = 1

    def __post_init__(self):
        _require(0.0 < self.hurst < 1.0, "roughness.hurst must be in (0, 1)")
        _require(self.lambda_min > 0, "roughness.lambda_min must be positive")
        _require(self.lambda_max > self.lambda_min,
                 "roughness.lambda_max must exceed lambda_min")
        _require(self.rms >= 0, "roughness.rms must be non-negative")
        _require(self.num_modes >= 1, "roughness.num_modes must be >= 1")


@dataclass(frozen=True)
class AlloySpec:
    """Random-alloy barrier composition."""

    ge_fraction: float = 0.3
    seed: int = 2

    def __post_init__(self):
        _require(0.0 <= self.ge_fraction <= 1.0,
                 "alloy.ge_fraction must be in [0, 1]")


@dataclass(frozen=True)
class VffParams:
    """Keating valence-force-field constants.

    Bond-stretch alpha and bond-bend beta are in N/m, equilibrium bond
    lengths d0 in Angstrom.  Mixed Si-Ge values default to the arithmetic
    mean of the pure constants; bend constants for mixed triples average
    the per-species values of the three atoms involved.
    """

    alpha_si_si: float = 48.5
    alpha_ge_ge: float = 38.7
    alpha_si_ge: float = 0.0        # 0 means arithmetic mean
    beta_si: float = 13.8
    beta_ge: float = 11.3
    # sqrt(3)/4 times the Si and Ge lattice constants, so the unstrained
    # reference crystals are exactly stress free
    d0_si_si: float = 2.3512589712748
    d0_ge_ge: float = 2.4495528546043
    d0_si_ge: float = 0.0           # 0 means arithmetic mean
    substrate_strain: float = 0.0115
    tol: float = 1.0e-4
    max_iter: int = 5000

    def __post_init__(self):
        if self.alpha_si_ge == 0.0:
            object.__setattr__(self, "alpha_si_ge",
                               0.5 * (self.alpha_si_si + self.alpha_ge_ge))
        if self.d0_si_ge == 0.0:
            object.__setattr__(self, "d0_si_ge",
                               0.5 * (self.d0_si_si + self.d0_ge_ge))
        for name in ("alpha_si_si", "alpha_ge_ge", "alpha_si_ge",
                     "beta_si", "beta_ge", "d0_si_si", "d0_ge_ge",
                     "d0_si_ge", "tol"):
            _require(getattr(self, name) > 0, f"vff.{name} must be positive")
        _require(self.max_iter >= 1, "vff.max_iter must be >= 1")
        _require(abs(self.substrate_strain) < 0.1,
                 "vff.substrate_strain outside plausible range")


@dataclass(frozen=True)
class ValleyConfig:
    """Inputs for the reduced valley tight-binding model.

    k0_fraction places the conduction minima at +/- k0_fraction * 2*pi/a0
    along z.  The chain hoppings themselves are derived from the masses by
    :func:`shuttlesim.valley.calibrate_chain_hoppings`.
    """

    k0_fraction: float = 0.84
    longitudinal_mass: float = 0.916
    transverse_mass: float = 0.19
    barrier_offset: float = 0.15    # virtual-crystal barrier height, eV
    strain_coupling: float = 2.0    # on-site shift per unit hydrostatic strain, eV
    eig_tol: float = 1.0e-10
    phase_floor: float = 1.0e-12

    def __post_init__(self):
        _require(0.0 < self.k0_fraction < 1.0,
                 "valley.k0_fraction must be in (0, 1)")
        _require(self.longitudinal_mass > 0,
                 "valley.longitudinal_mass must be positive")
        _require(self.transverse_mass > 0,
                 "valley.transverse_mass must be positive")
        _require(self.barrier_offset > 0,
                 "valley.barrier_offset must be positive")
        _require(self.eig_tol > 0, "valley.eig_tol must be positive")
        _require(self.phase_floor > 0, "valley.phase_floor must be positive")


@dataclass(frozen=True)
class RunSettings:
    """Trace sampling, ensemble seeds, and sweep grids."""

    num_steps: int = 0              # 0 means derive from cell_length
    seeds: tuple[int, ...] = (101, 102, 103, 104, 105, 106, 107, 108)
    speeds: tuple[float, ...] = (1.0, 3.16, 10.0, 31.6, 100.0, 316.0, 1000.0)
    rms_list: tuple[float, ...] = (0.0, 2.0, 3.0, 5.0, 10.0)

    def __post_init__(self):
        _require(self.num_steps == 0 or self.num_steps >= 2,
                 "run.num_steps must be >= 2")
        _require(len(self.seeds) >= 1, "run.seeds must not be empty")
        _require(all(v > 0 for v in self.speeds),
                 "run.speeds must all be positive")
        _require(all(r >= 0 for r in self.rms_list),
                 "run.rms_list must all be non-negative")


@dataclass(frozen=True)
class SimulationConfig:
    geometry: DeviceGeometry = DeviceGeometry()
    drive: DriveWaveform = DriveWaveform()
    roughness: RoughnessSpec = RoughnessSpec()
    alloy: AlloySpec = AlloySpec()
    vff: VffParams = VffParams()
    valley: ValleyConfig = ValleyConfig()
    run: RunSettings = RunSettings()

    def __post_init__(self):
        if self.run.num_steps == 0:
            steps = max(2, round(self.geometry.cell_length / _STEP_PITCH_NM))
            object.__setattr__(self, "run",
                               dataclasses.replace(self.run, num_steps=steps))


# ---------------------------------------------------------------------------
# config file I/O

_SECTIONS = {
    "geometry": DeviceGeometry,
    "drive": DriveWaveform,
    "roughness": RoughnessSpec,
    "alloy": AlloySpec,
    "vff": VffParams,
    "valley": ValleyConfig,
    "run": RunSettings,
}

_INT_FIELDS = {"num_modes", "seed", "max_iter", "num_steps"}
_TUPLE_INT_FIELDS = {"seeds"}
_TUPLE_FLOAT_FIELDS = {"speeds", "rms_list"}


def _parse_value(section: str, key: str, raw: str):
    try:
        if key in _TUPLE_INT_FIELDS:
            return tuple(int(tok) for tok in raw.replace(",", " ").split())
        if key in _TUPLE_FLOAT_FIELDS:
            return tuple(float(tok) for tok in raw.replace(",", " ").split())
        if key in _INT_FIELDS:
            return int(raw)
        return float(raw)
    except ValueError as exc:
        raise ConfigError(
            f"could not parse [{section}] {key} = {raw!r}: {exc}") from exc


def load_config(path) -> SimulationConfig:
    """Load a config file, filling unspecified keys with defaults."""
    parser = configparser.ConfigParser(inline_comment_prefixes=("#", ";"))
    try:
        with open(path, "r", encoding="utf-8") as fh:
            parser.read_file(fh)
    except FileNotFoundError:
        raise
    except (OSError, configparser.Error) as exc:
        raise ConfigError(f"cannot parse config {path}: {exc}") from exc

    kwargs_by_section: dict[str, dict] = {}
    for section in parser.sections():
        if section == "schema":
            version = parser.get(section, "version", fallback=str(SCHEMA_VERSION))
            if int(version) != SCHEMA_VERSION:
                raise ConfigError(
                    f"unsupported config schema version {version}")
            extra = set(parser[section]) - {"version"}
            if extra:
                raise ConfigError(
                    f"unknown key in [schema]: {sorted(extra)[0]}")
            continue
        if section not in _SECTIONS:
            raise ConfigError(
                f"unknown config section [{section}]; expected one of "
                f"{sorted(_SECTIONS)}")
        cls = _SECTIONS[section]
        names = {f.name for f in dataclasses.fields(cls)}
        kwargs = {}
        for key, raw in parser[section].items():
            if key not in names:
                raise ConfigError(
                    f"unknown key {key!r} in section [{section}]")
            kwargs[key] = _parse_value(section, key, raw)
        kwargs_by_section[section] = kwargs

    return SimulationConfig(**{
        name: cls(**kwargs_by_section.get(name, {}))
        for name, cls in _SECTIONS.items()
    })


def _format_value(value) -> str:
    if isinstance(value, tuple):
        return ", ".join(_format_value(v) for v in value)
    if isinstance(value, bool):
        return str(int(value))
    if isinstance(value, int):
        return str(value)
    return format(float(value), ".17g")


def serialize_config(config: SimulationConfig) -> str:
    """Canonical text form of a config; also the input to config_hash."""
    out = io.StringIO()
    out.write("[schema]\nversion = %d\n" % SCHEMA_VERSION)
    for name in sorted(_SECTIONS):
        out.write(f"\n[{name}]\n")
        section = getattr(config, name)
        for field in sorted(dataclasses.fields(section), key=lambda f: f.name):
            out.write(f"{field.name} = "
                      f"{_format_value(getattr(section, field.name))}\n")
    return out.getvalue()


def save_config(config: SimulationConfig, path) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        fh.write(serialize_config(config))


def config_hash(config: SimulationConfig) -> str:
    """sha256 of the canonical serialization; keys are sorted so the hash
    is insensitive to file formatting and key order."""
    return hashlib.sha256(serialize_config(config).encode()).hexdigest()


def derive_member_seeds(base_seed: int, rms_index: int) -> tuple[int, int, int]:
    """Deterministic (top-surface, bottom-surface, alloy) seeds for one
    ensemble member.  Independent streams come from numpy's SeedSequence
    spawning, keyed on the member seed and the roughness grid index."""
    children = np.random.SeedSequence(entropy=(base_seed, rms_index)).spawn(3)
    return tuple(int(c.generate_state(1)[0]) for c in children)
