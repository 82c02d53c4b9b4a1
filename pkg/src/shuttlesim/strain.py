"""Keating valence-force-field relaxation of the atomic slab.

The elastic energy is

    E = sum_bonds  3*alpha/(8*d0^2) * (|r|^2 - d0^2)^2
      + sum_angles 3*beta/(8*d0_ij*d0_ik) * (r_ij . r_ik + d0_ij*d0_ik/3)^2

with bonds counted once and angles owned by their apex atom.  Stretch
constants alpha and bend constants beta are in N/m (times Angstrom^2 the
terms convert to eV); these prefactors reproduce the experimental silicon
elastic constants, c11 = (alpha+3*beta)/a0 and c12/c11 =
(alpha-beta)/(alpha+3*beta).  d0 is the natural bond length of the species
pair; beta follows the apex atom.  Atoms are displaced from their ideal
positions, so periodic wrapping never needs minimum-image logic: a bond
vector is its ideal vector plus the difference of the two endpoint
displacements.  The bottom ``CLAMP_LAYERS`` atomic layers stay at their
ideal positions (the substrate constraint); the top surface is free, so a
biaxially strained film relaxes tetragonally.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.optimize import minimize

from .constants import NM_PER_M_A2_TO_EV
from .device import VffParams
from .errors import ConvergenceError
from .lattice import AtomLattice

CLAMP_LAYERS = 2

_PAIRS = [(0, 1), (0, 2), (0, 3), (1, 2), (1, 3), (2, 3)]


@dataclass
class RelaxationResult:
    displacements: np.ndarray  # (N, 3) Angstrom
    energy: float              # eV
    grad_max: float            # eV / Angstrom, over free atoms
    n_iterations: int


def _pair_table(si_si: float, ge_ge: float, si_ge: float) -> np.ndarray:
    if si_ge == 0.0:
        si_ge = 0.5 * (si_si + ge_ge)
    return np.array([[si_si, si_ge], [si_ge, ge_ge]])


class KeatingSystem:
    """Precomputed coefficient arrays for one lattice and parameter set."""

    def __init__(self, lat: AtomLattice, vff: VffParams):
        self.lat = lat
        self.vff = vff
        n = lat.num_atoms
        self.valid = lat.bonds >= 0
        # clamp index -1 to 0 for safe gathers; masked out of all sums
        self.partner = np.where(self.valid, lat.bonds, 0)
        self.v0 = lat.bond_ideal_vectors()

        d0 = _pair_table(vff.d0_si_si, vff.d0_ge_ge, vff.d0_si_ge)
        alpha = _pair_table(vff.alpha_si_si, vff.alpha_ge_ge, vff.alpha_si_ge)
        beta = np.array([vff.beta_si, vff.beta_ge])

        sp = lat.species.astype(int)
        sp_partner = sp[self.partner]
        self.d0 = d0[sp[:, None], sp_partner]              # (N, 4)
        kb = 3.0 * alpha[sp[:, None], sp_partner] / (8.0 * self.d0 ** 2)
        self.kb = np.where(self.valid, kb * NM_PER_M_A2_TO_EV, 0.0)

        self.ka = np.empty((n, len(_PAIRS)))
        self.d0prod = np.empty((n, len(_PAIRS)))
        pair_ok = np.empty((n, len(_PAIRS)), dtype=bool)
        for p, (s, t) in enumerate(_PAIRS):
            self.d0prod[:, p] = self.d0[:, s] * self.d0[:, t]
            self.ka[:, p] = 3.0 * beta[sp] / (8.0 * self.d0prod[:, p])
            pair_ok[:, p] = self.valid[:, s] & self.valid[:, t]
        self.ka = np.where(pair_ok, self.ka * NM_PER_M_A2_TO_EV, 0.0)

        self.free = lat.m >= CLAMP_LAYERS
        self.n_free = int(self.free.sum())

    def bond_vectors(self, u: np.ndarray) -> np.ndarray:
        return self.v0 + u[self.partner] - u[:, None, :]

    def energy_gradient(self, u: np.ndarray) -> tuple[float, np.ndarray]:
        """Total energy in eV and its gradient w.r.t. all displacements."""
        r = self.bond_vectors(u)
        grad = np.zeros_like(u)

        # bond stretch; every bond appears from both ends, hence the 0.5
        r2 = np.einsum("nsk,nsk->ns", r, r)
        b = np.where(self.valid, r2 - self.d0 ** 2, 0.0)
        e_bond = 0.5 * np.sum(self.kb * b * b)
        cb = (2.0 * self.kb * b)[:, :, None] * r
        grad -= cb.sum(axis=1)
        np.add.at(grad, self.partner, cb)

        # angle bending, apex-owned
        e_angle = 0.0
        for p, (s, t) in enumerate(_PAIRS):
            rs, rt = r[:, s, :], r[:, t, :]
            a = np.einsum("nk,nk->n", rs, rt) + self.d0prod[:, p] / 3.0
            ka = self.ka[:, p]
            e_angle += np.sum(ka * a * a)
            c = 2.0 * ka * a
            gs = c[:, None] * rt
            gt = c[:, None] * rs
            grad -= gs + gt
            np.add.at(grad, self.partner[:, s], gs)
            np.add.at(grad, self.partner[:, t], gt)

        return e_bond + e_angle, grad


def relax_lattice(lat: AtomLattice, vff: VffParams,
                  u0: np.ndarray | None = None) -> RelaxationResult:
    """Minimize the Keating energy over the free-atom displacements."""
    sys = KeatingSystem(lat, vff)
    n = lat.num_atoms
    free = sys.free

    def fun(x):
        u = np.zeros((n, 3))
        u[free] = x.reshape(-1, 3)
        e, g = sys.energy_gradient(u)
        return e, g[free].ravel()

    x0 = np.zeros(sys.n_free * 3)
    if u0 is not None:
        x0 = np.asarray(u0)[free].ravel().copy()
    res = minimize(fun, x0, jac=True, method="L-BFGS-B",
                   options={"maxiter": vff.max_iter, "gtol": vff.tol,
                            "ftol": 1e-14, "maxcor": 20})
    u = np.zeros((n, 3))
    u[free] = res.x.reshape(-1, 3)
    e, g = sys.energy_gradient(u)
    gmax = float(np.abs(g[free]).max()) if sys.n_free else 0.0
    if gmax > 10.0 * vff.tol:
        raise ConvergenceError(
            f"relaxation stalled: max gradient {gmax:.3e} eV/A after "
            f"{res.nit} iterations (tol {vff.tol:.1e})")
    return RelaxationResult(displacements=u, energy=float(e), grad_max=gmax,
                            n_iterations=int(res.nit))


def bond_lengths(lat: AtomLattice, u: np.ndarray,
                 vff: VffParams) -> np.ndarray:
    """Actual bond lengths in Angstrom, (N, 4), nan where no bond."""
    sys = KeatingSystem(lat, vff)
    r = sys.bond_vectors(u)
    lens = np.linalg.norm(r, axis=2)
    return np.where(sys.valid, lens, np.nan)


def bond_strain_per_atom(lat: AtomLattice, u: np.ndarray,
                         vff: VffParams) -> np.ndarray:
    """Mean relative bond stretch (len/d0 - 1) over each atom's bonds."""
    sys = KeatingSystem(lat, vff)
    r = sys.bond_vectors(u)
    lens = np.linalg.norm(r, axis=2)
    rel = np.where(sys.valid, lens / sys.d0 - 1.0, 0.0)
    cnt = sys.valid.sum(axis=1)
    return rel.sum(axis=1) / np.maximum(cnt, 1)


def bulk_tetragonal_response(vff: VffParams, in_plane_strain: float,
                             a0: float = 5.43,
                             ge: bool = False) -> tuple[float, float]:
    """Reference relaxation of a homogeneous crystal under biaxial strain.

    Minimizes the per-atom Keating energy of a bulk diamond crystal over
    the out-of-plane strain and the internal sublattice shift, with the
    in-plane strain held fixed.  Returns (eps_z, zeta) with zeta in
    Angstrom.  Serves as an independent check on the slab relaxation.
    """
    if ge:
        alpha, beta, d0 = vff.alpha_ge_ge, vff.beta_ge, vff.d0_ge_ge
    else:
        alpha, beta, d0 = vff.alpha_si_si, vff.beta_si, vff.d0_si_si
    kb = 3.0 * alpha / (8.0 * d0 ** 2) * NM_PER_M_A2_TO_EV
    ka = 3.0 * beta / (8.0 * d0 ** 2) * NM_PER_M_A2_TO_EV
    q = a0 / 4.0
    p = q * (1.0 + in_plane_strain)

    def per_atom(x):
        eps_z, zeta = x
        h = q * (1.0 + eps_z)
        bonds = np.array([
            [p, p, h + zeta],
            [-p, -p, h + zeta],
            [-p, p, -h + zeta],
            [p, -p, -h + zeta],
        ])
        r2 = (bonds ** 2).sum(axis=1)
        e = 0.5 * np.sum(kb * (r2 - d0 ** 2) ** 2)
        for s, t in _PAIRS:
            a = bonds[s] @ bonds[t] + d0 ** 2 / 3.0
            e += ka * a * a
        return e

    res = minimize(per_atom, x0=np.zeros(2), method="Nelder-Mead",
                   options={"xatol": 1e-12, "fatol": 1e-16,
                            "maxiter": 20000})
    return float(res.x[0]), float(res.x[1])
