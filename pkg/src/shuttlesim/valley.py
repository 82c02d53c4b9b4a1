"""Two-lowest-state solver for the conduction-valley doublet.

One orbital per atom with three coupling families reproduces the two
z valleys of strained silicon on the zigzag-chain lattice:

* ``t1`` couples chain neighbors one atomic layer apart (the bonded pair),
* ``t2`` couples chain neighbors two layers apart,
* ``t_xy`` couples the four same-layer in-plane neighbors.

Calibration pins the chain dispersion 2*t1*cos(k a) + 2*t2*cos(2 k a),
a = a0/4, to have minima at +-k0 with the silicon longitudinal mass, and
the in-plane dispersion to the transverse mass:

    t2   =  hbar^2 / (8 m_l a^2 sin^2(k0 a))
    t1   = -4 t2 cos(k0 a)
    t_xy = -hbar^2 / (m_t a0^2)

The ground doublet (E0, E1) then holds the valley splitting
Ev = E1 - E0, and the interference of the doublet densities along z holds
the valley phase: with D(m) the layer mean of |psi0|^2 - |psi1|^2, the
phase is arg sum_m D(m) exp(-2i k0 z_m).
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import scipy.sparse as sp
from scipy.linalg import eigh
from scipy.sparse.linalg import LinearOperator, eigsh, lobpcg, splu

from .constants import HBAR2_OVER_ME_A2_EV
from .device import AlloySpec, DeviceGeometry, DriveWaveform, ValleyConfig
from .errors import ConvergenceError
from .lattice import GE, AtomLattice

DENSE_LIMIT = 2000


@dataclass(frozen=True)
class ChainHoppings:
    t1: float
    t2: float
    t_xy: float
    theta0: float  # k0 * a0/4 in radians


def calibrate_chain_hoppings(valley: ValleyConfig,
                             a0: float = 5.43) -> ChainHoppings:
    a = a0 / 4.0
    theta0 = valley.k0_fraction * np.pi / 2.0
    t2 = HBAR2_OVER_ME_A2_EV / (8.0 * valley.longitudinal_mass * a * a
                                * np.sin(theta0) ** 2)
    t1 = -4.0 * t2 * np.cos(theta0)
    t_xy = -HBAR2_OVER_ME_A2_EV / (valley.transverse_mass * a0 * a0)
    return ChainHoppings(t1=t1, t2=t2, t_xy=t_xy, theta0=theta0)


def chain_band(hop: ChainHoppings, ka: np.ndarray) -> np.ndarray:
    """Chain dispersion at dimensionless momentum ka (a = a0/4)."""
    return 2.0 * hop.t1 * np.cos(ka) + 2.0 * hop.t2 * np.cos(2.0 * ka)


def onsite_energies(lat: AtomLattice, valley: ValleyConfig,
                    alloy: AlloySpec, phi_atoms: np.ndarray,
                    bond_strain: np.ndarray | None = None) -> np.ndarray:
    """Per-atom energy: gate potential, alloy band offset, strain shift."""
    e = -phi_atoms.astype(float).copy()
    if alloy.ge_fraction > 0.0:
        dec = valley.barrier_offset / alloy.ge_fraction
        e[lat.species == GE] += dec
    if bond_strain is not None:
        e = e + valley.strain_coupling * bond_strain
    return e


def select_window(lat: AtomLattice, x_atoms_nm: np.ndarray,
                  center_nm: float, half_width_nm: float,
                  period_nm: float) -> np.ndarray:
    """Indices of atoms within a periodic x window around the dot."""
    d = np.mod(x_atoms_nm - center_nm + 0.5 * period_nm, period_nm) \
        - 0.5 * period_nm
    return np.where(np.abs(d) <= half_width_nm)[0]


def build_hamiltonian(lat: AtomLattice, onsite: np.ndarray,
                      hop: ChainHoppings,
                      atom_subset: np.ndarray | None = None
                      ) -> tuple[sp.csr_matrix, np.ndarray]:
    """Sparse Hamiltonian over all atoms or a subset.

    Couplings leaving the subset are dropped (hard wall).  Returns the
    matrix and the atom indices forming its basis.
    """
    n_all = lat.num_atoms
    if atom_subset is None:
        atom_subset = np.arange(n_all)
    atom_subset = np.asarray(atom_subset)
    local = np.full(n_all, -1, dtype=np.int64)
    local[atom_subset] = np.arange(atom_subset.size)

    rows, cols, vals = [], [], []

    def add_pairs(src, dst, t):
        ls, ld = local[src], local[dst]
        ok = (ls >= 0) & (ld >= 0)
        rows.append(ls[ok])
        cols.append(ld[ok])
        vals.append(np.full(int(ok.sum()), t))

    ca = lat.chain_atoms
    for step, t in ((1, hop.t1), (2, hop.t2)):
        src = ca[:, :-step].ravel()
        dst = ca[:, step:].ravel()
        add_pairs(src, dst, t)
        add_pairs(dst, src, t)
    idx = np.arange(n_all)
    for slot in range(4):
        add_pairs(idx, lat.in_plane[:, slot], hop.t_xy)

    ls = local[atom_subset]
    rows.append(ls)
    cols.append(ls)
    vals.append(onsite[atom_subset].astype(float))

    n = atom_subset.size
    h = sp.coo_matrix((np.concatenate(vals),
                       (np.concatenate(rows), np.concatenate(cols))),
                      shape=(n, n)).tocsr()
    return h, atom_subset


def lowest_pair(h: sp.csr_matrix, tol: float = 1e-10,
                guess: np.ndarray | None = None
                ) -> tuple[np.ndarray, np.ndarray]:
    """Two lowest eigenpairs of a sparse symmetric Hamiltonian.

    Small systems go through a dense solve.  Large systems use Lanczos,
    or warm-started LOBPCG when eigenvectors from a nearby configuration
    are supplied.
    """
    n = h.shape[0]
    if n <= DENSE_LIMIT:
        w, v = eigh(h.toarray())
        return w[:2], v[:, :2]
    if guess is not None and guess.shape == (n, 2):
        d = h.diagonal()
        shift = d.min() - 8.0
        minv = 1.0 / (d - shift)

        def prec(x):
            return minv[:, None] * x

        w, v = lobpcg(h, guess, M=sp.linalg.LinearOperator(
            (n, n), matvec=lambda x: minv * x if x.ndim == 1 else prec(x),
            matmat=prec), largest=False, tol=tol, maxiter=400)
        order = np.argsort(w)
        return w[order[:2]], v[:, order[:2]]
    # fixed start: the library default draws from the global random state,
    # which would make reruns differ in the last digits
    w, v = eigsh(h, k=2, which="SA", tol=tol, maxiter=5000,
                 v0=np.random.default_rng(n).standard_normal(n))
    order = np.argsort(w)
    return w[order], v[:, order]


def layer_contrast(lat: AtomLattice, atom_idx: np.ndarray,
                   psi0: np.ndarray, psi1: np.ndarray) -> np.ndarray:
    """Per-layer density difference of the doublet, (n_layers,).

    Summing (not averaging) within each layer makes the interference
    magnitude a coherence measure bounded by 1.
    """
    m = lat.m[atom_idx]
    diff = psi0 ** 2 - psi1 ** 2
    return np.bincount(m, weights=diff, minlength=lat.n_layers)


def phase_from_contrast(contrast: np.ndarray, k0_fraction: float,
                        floor: float = 1e-12) -> tuple[float, float]:
    """Valley phase and interference magnitude from layer contrast.

    The phase factor per layer is exp(-2i k0 z_m) = exp(-i pi f m) with
    f the valley wavenumber as a fraction of 2 pi / a0.  Returns
    (phase, magnitude); the phase is 0 when the magnitude is below the
    floor.
    """
    m = np.arange(contrast.shape[0])
    z = np.exp(-1j * np.pi * k0_fraction * m)
    s = np.sum(contrast * z)
    mag = float(np.abs(s))
    if mag < floor:
        return 0.0, mag
    return float(np.angle(s)), mag


def extract_valley_phase(lat: AtomLattice, atom_idx: np.ndarray,
                         psi0: np.ndarray, psi1: np.ndarray,
                         valley: ValleyConfig) -> tuple[float, float]:
    d = layer_contrast(lat, atom_idx, psi0, psi1)
    return phase_from_contrast(d, valley.k0_fraction, valley.phase_floor)


@dataclass
class DotSolution:
    energies: np.ndarray     # (2,) eV
    vectors: np.ndarray      # (n, 2)
    atom_idx: np.ndarray
    valley_splitting: float  # eV
    valley_phase: float      # rad
    contrast_magnitude: float


def solve_dot(lat: AtomLattice, onsite: np.ndarray, hop: ChainHoppings,
              valley: ValleyConfig,
              atom_subset: np.ndarray | None = None,
              guess: np.ndarray | None = None) -> DotSolution:
    h, idx = build_hamiltonian(lat, onsite, hop, atom_subset)
    w, v = lowest_pair(h, tol=valley.eig_tol, guess=guess)
    if not np.all(np.isfinite(w)):
        raise ConvergenceError("eigensolver returned non-finite energies")
    phase, mag = extract_valley_phase(lat, idx, v[:, 0], v[:, 1], valley)
    return DotSolution(energies=w, vectors=v, atom_idx=idx,
                       valley_splitting=float(w[1] - w[0]),
                       valley_phase=phase, contrast_magnitude=mag)


class PairTracker:
    """Ground-doublet solver reused along a trace.

    The first step runs Lanczos from scratch and factors H - sigma once;
    later steps run LOBPCG warm-started from the previous doublet with the
    factored operator as preconditioner.  The factorization is refreshed
    on a fixed stride so preconditioner quality cannot drift far, and any
    step whose residual misses the tolerance falls back to Lanczos.
    """

    def __init__(self, tol: float = 1e-10, refactor_every: int = 8):
        self.tol = tol
        self.refactor_every = refactor_every
        self._lu = None
        self._vectors = None
        self._since_factor = 0

    @staticmethod
    def _start(n: int) -> np.ndarray:
        # fixed Lanczos start; the library default draws from the global
        # random state, which would make reruns differ in the last digits
        return np.random.default_rng(n).standard_normal(n)

    def _factor(self, h: sp.csr_matrix, e0: float) -> None:
        sigma = e0 - 5e-3
        self._lu = splu((h - sigma * sp.identity(h.shape[0])).tocsc())
        self._since_factor = 0

    def solve(self, h: sp.csr_matrix) -> tuple[np.ndarray, np.ndarray]:
        n = h.shape[0]
        if n <= DENSE_LIMIT:
            w, v = eigh(h.toarray())
            return w[:2], v[:, :2]
        if self._vectors is None or self._vectors.shape[0] != n:
            w, v = eigsh(h, k=2, which="SA", tol=self.tol, maxiter=5000,
                         v0=self._start(n))
            order = np.argsort(w)
            w, v = w[order], v[:, order]
            self._factor(h, w[0])
            self._vectors = v
            return w, v
        if self._since_factor >= self.refactor_every:
            wq = float(np.einsum("i,i->", self._vectors[:, 0],
                                 h @ self._vectors[:, 0]))
            self._factor(h, wq)
        self._since_factor += 1
        lu = self._lu
        prec = LinearOperator(
            h.shape,
            matvec=lu.solve,
            matmat=lambda x: np.column_stack(
                [lu.solve(x[:, i]) for i in range(x.shape[1])]))
        with np.errstate(all="ignore"):
            w, v = lobpcg(h, self._vectors, M=prec, largest=False,
                          tol=self.tol, maxiter=60)
        order = np.argsort(w)
        w, v = w[order[:2]], v[:, order[:2]]
        res = h @ v - v * w
        if not np.all(np.isfinite(w)) \
                or np.linalg.norm(res, axis=0).max() > 1e-6:
            w, v = eigsh(h, k=2, which="SA", tol=self.tol, maxiter=5000,
                         v0=self._start(n))
            order = np.argsort(w)
            w, v = w[order], v[:, order]
            self._factor(h, w[0])
        self._vectors = v
        return w, v


TRACE_FIELDS = [("p", np.int64), ("t_over_T", float), ("x_dot_nm", float),
                ("E0_eV", float), ("E1_eV", float), ("Ev_ueV", float),
                ("phiv_rad", float)]


def atom_points_nm(lat: AtomLattice, geom: DeviceGeometry) -> np.ndarray:
    """Atom positions in the electrostatic frame (nm), (N, 3).

    The lattice period is commensurate with the gate array only up to a
    fraction of a cell, so x is scaled uniformly onto the electrostatic
    period; the slab is centered across the device width.
    """
    pos = lat.positions()
    out = np.empty_like(pos)
    out[:, 0] = pos[:, 0] * 0.1 * (geom.cell_length / (lat.period_x * 0.1))
    out[:, 1] = pos[:, 1] * 0.1 + 0.5 * (geom.y_extent - lat.period_y * 0.1)
    out[:, 2] = pos[:, 2] * 0.1
    return out


def step_fields(lat: AtomLattice, units, drive: DriveWaveform,
                num_steps: int) -> tuple[np.ndarray, np.ndarray]:
    """Per-step atom potentials and dot positions for one drive period.

    These depend only on the gate stack and drive, not on the disorder
    realization, so ensemble sweeps compute them once and share them
    across members.
    """
    from .electrostatics import sample_potential, track_dot_position

    pts = atom_points_nm(lat, units.geom)
    phi_atoms = np.empty((num_steps, lat.num_atoms))
    x_dot = np.empty(num_steps)
    for p in range(num_steps):
        phi = units.at_time(drive, drive.period * p / num_steps)
        phi_atoms[p] = sample_potential(phi, units.grid, pts)
        x_dot[p] = track_dot_position(phi, units.geom, units.grid)
    return phi_atoms, x_dot


def trace_shuttle(lat: AtomLattice, units, drive: DriveWaveform,
                  valley: ValleyConfig, alloy: AlloySpec,
                  num_steps: int,
                  bond_strain: np.ndarray | None = None,
                  fields: tuple[np.ndarray, np.ndarray] | None = None
                  ) -> np.ndarray:
    """Valley splitting and phase at equally spaced drive phases.

    Solves the full periodic cell at each step; returns a structured array
    with one row per step covering one drive period (one cell of motion).
    fields, when given, must be the output of :func:`step_fields` for the
    same lattice and drive.
    """
    if fields is None:
        fields = step_fields(lat, units, drive, num_steps)
    phi_atoms_steps, x_dot_steps = fields
    if phi_atoms_steps.shape != (num_steps, lat.num_atoms):
        raise ValueError("cached fields do not match the lattice and "
                         "step count")

    hop = calibrate_chain_hoppings(valley, a0=lat.a0)
    tracker = PairTracker(tol=valley.eig_tol)
    out = np.zeros(num_steps, dtype=TRACE_FIELDS)
    for p in range(num_steps):
        onsite = onsite_energies(lat, valley, alloy, phi_atoms_steps[p],
                                 bond_strain)
        h, idx = build_hamiltonian(lat, onsite, hop)
        w, v = tracker.solve(h)
        phase, mag = extract_valley_phase(lat, idx, v[:, 0], v[:, 1], valley)
        out[p] = (p, p / num_steps, x_dot_steps[p],
                  w[0], w[1], (w[1] - w[0]) * 1e6, phase)
    return out

