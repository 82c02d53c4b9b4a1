"""Two-level leakage dynamics along an interpolated valley trace.

The trace samples (valley splitting and valley phase versus drive phase
s = t/T) are interpolated with shape-preserving cubics; the electron is
then propagated through one shuttle period with exact 2x2 step unitaries
built from the Hamiltonian frozen at each step midpoint.  Shuttling speed
enters only through the period T = L / v: the splitting profile is fixed
by the device, while the phase-velocity coupling scales linearly with v.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from scipy.interpolate import PchipInterpolator

from .constants import HBAR_EVS
from .errors import ConfigError, PhaseUnwrapError

# the distance the well travels in one period equals one gate-array cell,
# so per-period leakage resolved on >= 1000 steps samples every feature
# the step-size cap lets through
MIN_STEPS_PER_PERIOD = 1000


def unwrap_phases(phi: np.ndarray, atol: float = 1e-9) -> np.ndarray:
    """Add 2 pi multiples so adjacent jumps lie strictly inside (-pi, pi).

    A raw jump of exactly pi (within atol) has no preferred winding
    direction and raises PhaseUnwrapError.
    """
    phi = np.asarray(phi, dtype=float)
    if phi.ndim != 1 or phi.size < 2:
        raise ConfigError("phase unwrapping needs a 1-d array of >= 2 samples")
    d = np.diff(phi)
    jumps = np.angle(np.exp(1j * d))
    if np.any(np.abs(np.abs(jumps) - np.pi) <= atol):
        raise PhaseUnwrapError(
            "adjacent phase samples differ by pi; winding is ambiguous")
    return np.concatenate([phi[:1], phi[0] + np.cumsum(jumps)])


@dataclass
class InterpolatedTrace:
    """Smooth splitting/phase profiles over one period, s = t/T in [0, 1]."""

    ev_ueV: PchipInterpolator
    phiv: PchipInterpolator
    dphiv_ds: PchipInterpolator
    length_nm: float
    num_samples: int

    @classmethod
    def from_samples(cls, s: np.ndarray, ev_ueV: np.ndarray,
                     phiv_rad: np.ndarray, length_nm: float,
                     periodic: bool = True) -> "InterpolatedTrace":
        s = np.asarray(s, dtype=float)
        ev = np.asarray(ev_ueV, dtype=float)
        ph = np.asarray(phiv_rad, dtype=float)
        if s.size < 4:
            raise ConfigError("trace interpolation needs >= 4 samples")
        if not (s.shape == ev.shape == ph.shape):
            raise ConfigError("trace sample arrays must share one shape")
        if np.any(np.diff(s) <= 0):
            raise ConfigError("trace samples must be strictly increasing in s")
        if length_nm <= 0:
            raise ConfigError("trace length must be positive")
        if periodic:
            # samples cover [0, 1); close the loop so evaluation at s = 1
            # interpolates instead of extrapolating the last cubic
            if abs(s[0]) > 1e-12 or s[-1] >= 1.0:
                raise ConfigError(
                    "periodic traces must start at s = 0 and end below 1")
            s = np.concatenate([s, [s[0] + 1.0]])
            ev = np.concatenate([ev, ev[:1]])
            ph = np.concatenate([ph, ph[:1]])
        ph = unwrap_phases(ph)
        pe = PchipInterpolator(s, ev)
        pp = PchipInterpolator(s, ph)
        return cls(ev_ueV=pe, phiv=pp, dphiv_ds=pp.derivative(),
                   length_nm=float(length_nm), num_samples=int(s.size))


def interpolate_trace(trace: np.ndarray, length_nm: float,
                      periodic: bool = True) -> InterpolatedTrace:
    """Interpolate a structured valley trace (fields t_over_T, Ev_ueV,
    phiv_rad) over one shuttle period."""
    return InterpolatedTrace.from_samples(
        trace["t_over_T"], trace["Ev_ueV"], trace["phiv_rad"],
        length_nm, periodic=periodic)


@dataclass
class TwoLevelState:
    alpha0: complex
    alpha1: complex

    def norm_sq(self) -> float:
        return abs(self.alpha0) ** 2 + abs(self.alpha1) ** 2


@dataclass
class Evolution:
    """Stored time series of the doublet amplitudes over one period."""

    t_over_T: np.ndarray      # (n+1,)
    amplitudes: np.ndarray    # (n+1, 2) complex
    speed_mps: float
    period_s: float
    dt_s: float

    @property
    def ground_population(self) -> np.ndarray:
        return np.abs(self.amplitudes[:, 0]) ** 2

    def state(self, k: int) -> TwoLevelState:
        return TwoLevelState(complex(self.amplitudes[k, 0]),
                             complex(self.amplitudes[k, 1]))


def _hamiltonian_scale(itrace: InterpolatedTrace, period_s: float) -> float:
    """Largest instantaneous eigenvalue magnitude of H over the period, eV."""
    s = np.linspace(0.0, 1.0, max(8 * itrace.num_samples, 2049))
    ez = 0.5e-6 * itrace.ev_ueV(s)
    cx = 0.5 * HBAR_EVS * itrace.dphiv_ds(s) / period_s
    return float(np.sqrt(ez * ez + cx * cx).max())


def evolve(itrace: InterpolatedTrace, speed_mps: float,
           dt_max: float | None = None,
           initial_state: np.ndarray | None = None) -> Evolution:
    """Integrate the two-level Schrodinger equation over one period.

    H(t) = 1/2 [[-Ev, hbar dphi/dt], [hbar dphi/dt, Ev]] with Ev taken
    from the splitting interpolant and dphi/dt = (v/L) dphi/ds.  Each
    step applies the exact unitary of H frozen at the step midpoint, so
    the norm is conserved to rounding and the scheme is second order.
    """
    if speed_mps <= 0:
        raise ConfigError("shuttling speed must be positive")
    if dt_max is not None and dt_max <= 0:
        raise ConfigError("dt_max must be positive when given")
    period = itrace.length_nm * 1e-9 / speed_mps

    caps = [period / MIN_STEPS_PER_PERIOD]
    hmax = _hamiltonian_scale(itrace, period)
    if hmax > 0.0:
        caps.append(HBAR_EVS / (10.0 * hmax))
    if dt_max is not None:
        caps.append(float(dt_max))
    n = int(np.ceil(period / min(caps) - 1e-9))
    dt = period / n

    sm = (np.arange(n) + 0.5) / n
    hz = -0.5e-6 * itrace.ev_ueV(sm)            # eV, diagonal of H
    hx = 0.5 * HBAR_EVS * itrace.dphiv_ds(sm) / period
    mag = np.hypot(hx, hz)
    theta = mag * (dt / HBAR_EVS)
    cos_t = np.cos(theta)
    sin_t = np.sin(theta)
    safe = np.where(mag > 0.0, mag, 1.0)
    fx = sin_t * hx / safe
    fz = sin_t * hz / safe

    amps = np.empty((n + 1, 2), dtype=complex)
    if initial_state is None:
        a0, a1 = 1.0 + 0.0j, 0.0 + 0.0j
    else:
        a0, a1 = complex(initial_state[0]), complex(initial_state[1])
    amps[0] = (a0, a1)
    for k in range(n):
        # U = cos(theta) I - i sin(theta) (nx sx + nz sz)
        b0 = (cos_t[k] - 1j * fz[k]) * a0 - 1j * fx[k] * a1
        a1 = -1j * fx[k] * a0 + (cos_t[k] + 1j * fz[k]) * a1
        a0 = b0
        amps[k + 1] = (a0, a1)

    return Evolution(t_over_T=np.arange(n + 1) / n, amplitudes=amps,
                     speed_mps=float(speed_mps), period_s=period, dt_s=dt)


@dataclass
class FidelityResult:
    fidelity: float
    infidelity: float
    t_star_over_T: float


def fidelity(evolution: Evolution) -> FidelityResult:
    """Minimum ground population over the stored series, with its time."""
    p0 = evolution.ground_population
    k = int(np.argmin(p0))
    f = float(p0[k])
    return FidelityResult(fidelity=f, infidelity=1.0 - f,
                          t_star_over_T=float(evolution.t_over_T[k]))


@dataclass
class SpeedSweepResult:
    speed_mps: np.ndarray
    fidelity: np.ndarray
    infidelity: np.ndarray
    t_star_over_T: np.ndarray


def speed_sweep(itrace: InterpolatedTrace, speeds,
                dt_max: float | None = None) -> SpeedSweepResult:
    """Fidelity across shuttling speeds for one fixed trace.

    The splitting interpolant is shared by all speeds; only the period
    and with it the phase-velocity coupling change.
    """
    speeds = np.asarray(speeds, dtype=float)
    if speeds.ndim != 1 or speeds.size == 0:
        raise ConfigError("speed grid must be a non-empty 1-d array")
    if np.any(speeds <= 0):
        raise ConfigError("all speeds must be positive")
    fid = np.empty(speeds.size)
    tstar = np.empty(speeds.size)
    for i, v in enumerate(speeds):
        r = fidelity(evolve(itrace, v, dt_max=dt_max))
        fid[i] = r.fidelity
        tstar[i] = r.t_star_over_T
    return SpeedSweepResult(speed_mps=speeds, fidelity=fid,
                            infidelity=1.0 - fid, t_star_over_T=tstar)


@dataclass
class EnsembleResult:
    """Infidelity statistics on the (roughness, speed) grid."""

    rms_values: np.ndarray        # (R,) Angstrom
    speeds: np.ndarray            # (V,) m/s
    infidelity_mean: np.ndarray   # (R, V), NaN where no member finished
    infidelity_std: np.ndarray    # (R, V) sample std, NaN where n < 2
    n: np.ndarray                 # (R, V) members aggregated
    failures: list = field(default_factory=list)

    @property
    def incomplete(self) -> np.ndarray:
        return self.n < self.n.max(initial=0)


class EnsembleAccumulator:
    """Order-independent aggregation of per-member infidelity vectors."""

    def __init__(self, rms_values, speeds):
        self.rms_values = np.asarray(rms_values, dtype=float)
        self.speeds = np.asarray(speeds, dtype=float)
        self._cells: dict[int, list[np.ndarray]] = {
            i: [] for i in range(self.rms_values.size)}
        self._failures: list[tuple[float, int, str]] = []

    def _row(self, rms: float) -> int:
        i = int(np.argmin(np.abs(self.rms_values - rms)))
        if abs(self.rms_values[i] - rms) > 1e-9:
            raise ConfigError(f"rms {rms} is not on the ensemble grid")
        return i

    def add(self, rms: float, infidelity: np.ndarray) -> None:
        vec = np.asarray(infidelity, dtype=float)
        if vec.shape != self.speeds.shape:
            raise ConfigError("member infidelity vector does not match "
                              "the speed grid")
        self._cells[self._row(rms)].append(vec)

    def add_failure(self, rms: float, seed: int, message: str) -> None:
        self._failures.append((float(rms), int(seed), str(message)))

    def result(self) -> EnsembleResult:
        shape = (self.rms_values.size, self.speeds.size)
        mean = np.full(shape, np.nan)
        std = np.full(shape, np.nan)
        n = np.zeros(shape, dtype=np.int64)
        for i, members in self._cells.items():
            if not members:
                continue
            block = np.vstack(members)
            n[i, :] = block.shape[0]
            mean[i, :] = block.mean(axis=0)
            if block.shape[0] >= 2:
                std[i, :] = block.std(axis=0, ddof=1)
        return EnsembleResult(rms_values=self.rms_values, speeds=self.speeds,
                              infidelity_mean=mean, infidelity_std=std,
                              n=n, failures=list(self._failures))


def ensemble_sweep(config, speeds, rms_values=None,
                   seeds_per_rms: int | None = None) -> EnsembleResult:
    """Full pipeline per (rms, seed) member, aggregated over the ensemble.

    Thin entry point; the stage orchestration lives in the pipeline
    module and this simply forwards to it.
    """
    from .pipeline import run_ensemble
    return run_ensemble(config, speeds=speeds, rms_values=rms_values,
                        seeds_per_rms=seeds_per_rms)
