"""Desk-scale simulator of conveyor-belt electron shuttling in Si/SiGe.

The package links microscopic disorder (self-affine interface roughness,
random-alloy barriers, lattice strain) to valley splitting and valley phase
along the shuttling path, and from there to leakage infidelity versus
shuttling speed.  Modules are organized along the pipeline:

    device          geometry, drive waveforms, config files
    roughness       self-affine rough interface synthesis and PSD analysis
    lattice         disordered diamond-lattice construction
    strain          Keating valence-force-field relaxation
    electrostatics  finite-difference gate potentials
    valley          reduced valley tight-binding solver, Ev / phi_v traces
    dynamics        two-level leakage dynamics and speed sweeps
    pipeline        staged runs, caching, ensemble sweeps
    io              text artifact formats
    cli             shuttle-sim command line front end
"""

from .device import (
    AlloySpec,
    DeviceGeometry,
    DriveWaveform,
    RoughnessSpec,
    RunSettings,
    SimulationConfig,
    ValleyConfig,
    VffParams,
    clavier_voltage,
    config_hash,
    load_config,
    save_config,
    voltage_vector,
)
from .errors import (
    ArtifactFormatError,
    ConfigError,
    ConvergenceError,
    PhaseUnwrapError,
    WellDistortionWarning,
)

__version__ = "0.1.0"

from .pipeline import run_ensemble, run_pipeline, slab_shape  # noqa: E402
