"""Diamond-lattice construction for a periodic Si/SiGe slab.

Atoms live on quarter-pitch integer coordinates (cx, cy, m): the position of
an atom is (cx*px, cy*py, m*pz) with px = py = a0*(1+strain)/4 in plane and
pz = a0/4 along growth.  A triple is a lattice site when either all three
coordinates are even and cx+cy+m = 0 (mod 4), or all three are odd and
cx+cy+m = 3 (mod 4).  The slab is periodic in x and y (supercell of
n_cells_x by n_cells_y conventional cells) and finite in z with n_layers
atomic layers.

Each atom belongs to exactly one vertical zigzag chain: following the bond
+(1,1,1) from an even-layer atom and +(1,-1,1) from an odd-layer atom
advances one layer while staying on the chain.  The quantities
u = (cx - m) mod 4*n_cells_x and w = (cy - m%2) mod 4*n_cells_y are chain
invariants, so (u/2, w/2) indexes chains and every chain holds one atom per
layer.  Vertical couplings in the two-band effective Hamiltonian act along
these chains; in-plane couplings connect the four same-layer neighbors at
quarter offsets (+-2, +-2, 0).
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .constants import A0_ANGSTROM
from .device import AlloySpec
from .errors import ConfigError
from .roughness import SurfaceField

SI = 0
GE = 1

# bond slot offsets in quarter coordinates, one row per slot
_BONDS_EVEN = np.array([(1, 1, 1), (-1, -1, 1), (-1, 1, -1), (1, -1, -1)],
                       dtype=np.int64)
_BONDS_ODD = np.array([(1, -1, 1), (-1, 1, 1), (-1, -1, -1), (1, 1, -1)],
                      dtype=np.int64)

_IN_PLANE = np.array([(2, 2, 0), (2, -2, 0), (-2, 2, 0), (-2, -2, 0)],
                     dtype=np.int64)


@dataclass
class AtomLattice:
    """Site table, bond table, and chain index for one periodic slab."""

    n_cells_x: int
    n_cells_y: int
    n_layers: int
    a0: float
    in_plane_strain: float
    cx: np.ndarray          # (N,) int32 quarter coords
    cy: np.ndarray
    m: np.ndarray           # (N,) int32 layer index
    species: np.ndarray     # (N,) uint8, SI or GE
    site_index: np.ndarray  # (4*ncx, 4*ncy, n_layers) int32, -1 = empty
    bonds: np.ndarray       # (N, 4) int32, -1 = missing (z boundary)
    chain_atoms: np.ndarray  # (n_chains, n_layers) int32
    chain_i: np.ndarray     # (n_chains,) int32
    chain_j: np.ndarray
    in_plane: np.ndarray = field(default=None)  # (N, 4) int32

    @property
    def num_atoms(self) -> int:
        return self.cx.shape[0]

    @property
    def num_chains(self) -> int:
        return self.chain_atoms.shape[0]

    @property
    def pitch_xy(self) -> float:
        return self.a0 * (1.0 + self.in_plane_strain) / 4.0

    @property
    def pitch_z(self) -> float:
        return self.a0 / 4.0

    @property
    def period_x(self) -> float:
        """Supercell period along x in Angstrom."""
        return 4 * self.n_cells_x * self.pitch_xy

    @property
    def period_y(self) -> float:
        return 4 * self.n_cells_y * self.pitch_xy

    def positions(self) -> np.ndarray:
        """Ideal (unrelaxed) atom positions in Angstrom, shape (N, 3)."""
        p = np.empty((self.num_atoms, 3))
        p[:, 0] = self.cx * self.pitch_xy
        p[:, 1] = self.cy * self.pitch_xy
        p[:, 2] = self.m * self.pitch_z
        return p

    def bond_offsets(self) -> np.ndarray:
        """Integer quarter-coordinate offset for each bond slot, (N, 4, 3)."""
        out = np.empty((self.num_atoms, 4, 3), dtype=np.int64)
        even = self.m % 2 == 0
        out[even] = _BONDS_EVEN
        out[~even] = _BONDS_ODD
        return out

    def bond_ideal_vectors(self) -> np.ndarray:
        """Ideal bond vectors in Angstrom, (N, 4, 3)."""
        off = self.bond_offsets().astype(float)
        off[:, :, 0] *= self.pitch_xy
        off[:, :, 1] *= self.pitch_xy
        off[:, :, 2] *= self.pitch_z
        return off

    def layer_heights(self) -> np.ndarray:
        """z of each atomic layer in Angstrom, (n_layers,)."""
        return np.arange(self.n_layers) * self.pitch_z


def _site_mask(cxg: np.ndarray, cyg: np.ndarray, m: int) -> np.ndarray:
    if m % 2 == 0:
        ok = (cxg % 2 == 0) & (cyg % 2 == 0)
        return ok & ((cxg + cyg + m) % 4 == 0)
    ok = (cxg % 2 == 1) & (cyg % 2 == 1)
    return ok & ((cxg + cyg + m) % 4 == 3)


def build_lattice(n_cells_x: int, n_cells_y: int, n_layers: int,
                  a0: float = A0_ANGSTROM,
                  in_plane_strain: float = 0.0) -> AtomLattice:
    """Build the periodic slab geometry with all atoms labeled Si."""
    if n_cells_x < 1 or n_cells_y < 1:
        raise ConfigError("lattice needs at least one cell in x and y")
    if n_cells_y < 2:
        # in-plane neighbor offset is 2 quarter pitches; one cell would fold
        # the +2 and -2 partners onto the same atom
        raise ConfigError("lattice needs n_cells_y >= 2")
    if n_layers < 5:
        raise ConfigError("lattice needs n_layers >= 5")

    X, Y = 4 * n_cells_x, 4 * n_cells_y
    cxg, cyg = np.meshgrid(np.arange(X), np.arange(Y), indexing="ij")

    cx_list, cy_list, m_list = [], [], []
    for m in range(n_layers):
        sel = _site_mask(cxg, cyg, m)
        cx_list.append(cxg[sel])
        cy_list.append(cyg[sel])
        m_list.append(np.full(sel.sum(), m))
    cx = np.concatenate(cx_list).astype(np.int32)
    cy = np.concatenate(cy_list).astype(np.int32)
    m = np.concatenate(m_list).astype(np.int32)
    n = cx.shape[0]

    site_index = np.full((X, Y, n_layers), -1, dtype=np.int32)
    site_index[cx, cy, m] = np.arange(n, dtype=np.int32)

    # bond table via wrapped lookup; z out of range stays -1
    bonds = np.full((n, 4), -1, dtype=np.int32)
    even = m % 2 == 0
    for slot in range(4):
        off = np.where(even[:, None], _BONDS_EVEN[slot], _BONDS_ODD[slot])
        px = (cx + off[:, 0]) % X
        py = (cy + off[:, 1]) % Y
        pz = m + off[:, 2]
        ok = (pz >= 0) & (pz < n_layers)
        bonds[ok, slot] = site_index[px[ok], py[ok], pz[ok]]

    in_plane = np.full((n, 4), -1, dtype=np.int32)
    for slot in range(4):
        px = (cx + _IN_PLANE[slot, 0]) % X
        py = (cy + _IN_PLANE[slot, 1]) % Y
        in_plane[:, slot] = site_index[px, py, m]

    # chain bookkeeping: invariants u, w are always even and (u+w)/2 is even
    u = (cx - m) % X
    w = (cy - (m % 2)) % Y
    ci_grid = np.full((X // 2, Y // 2), -1, dtype=np.int32)
    ii, jj = np.meshgrid(np.arange(X // 2), np.arange(Y // 2), indexing="ij")
    valid = (ii + jj) % 2 == 0
    n_chains = int(valid.sum())
    ci_grid[valid] = np.arange(n_chains, dtype=np.int32)
    chain_of_atom = ci_grid[u // 2, w // 2]
    if (chain_of_atom < 0).any():
        raise RuntimeError("chain invariant violated during construction")

    chain_atoms = np.full((n_chains, n_layers), -1, dtype=np.int32)
    chain_atoms[chain_of_atom, m] = np.arange(n, dtype=np.int32)
    if (chain_atoms < 0).any():
        raise RuntimeError("chain layer coverage incomplete")

    return AtomLattice(
        n_cells_x=n_cells_x, n_cells_y=n_cells_y, n_layers=n_layers,
        a0=a0, in_plane_strain=in_plane_strain,
        cx=cx, cy=cy, m=m,
        species=np.zeros(n, dtype=np.uint8),
        site_index=site_index, bonds=bonds,
        chain_atoms=chain_atoms,
        chain_i=ii[valid].astype(np.int32), chain_j=jj[valid].astype(np.int32),
        in_plane=in_plane,
    )


def quantize_interface(height: np.ndarray, pitch_z: float,
                       top: bool) -> np.ndarray:
    """Snap interface heights to integer layer indices.

    Ties round toward the interior of the well: the bottom interface rounds
    half up, the top interface rounds half down.
    """
    x = np.asarray(height, dtype=float) / pitch_z
    if top:
        return np.ceil(x - 0.5).astype(np.int64)
    return np.floor(x + 0.5).astype(np.int64)


def assign_species(lat: AtomLattice, well_bottom: float, well_top: float,
                   alloy: AlloySpec,
                   bottom_surface: SurfaceField | None = None,
                   top_surface: SurfaceField | None = None,
                   seed: int | None = None) -> None:
    """Label atoms Si or Ge from interface heights plus optional roughness.

    ``well_bottom`` and ``well_top`` are nominal interface heights in
    Angstrom; surface fields (sampled in nm at the atom's in-plane position,
    heights in Angstrom) shift them locally.  Atoms outside [bottom, top)
    after layer quantization belong to the alloy barrier and are Ge with
    probability ``alloy.ge_fraction``.
    """
    if well_top <= well_bottom:
        raise ConfigError("well_top must exceed well_bottom")
    n = lat.num_atoms
    x_nm = lat.cx * lat.pitch_xy * 0.1
    y_nm = lat.cy * lat.pitch_xy * 0.1

    zb = np.full(n, well_bottom)
    zt = np.full(n, well_top)
    if bottom_surface is not None:
        zb = zb + bottom_surface.sample(x_nm, y_nm)
    if top_surface is not None:
        zt = zt + top_surface.sample(x_nm, y_nm)

    mb = quantize_interface(zb, lat.pitch_z, top=False)
    mt = quantize_interface(zt, lat.pitch_z, top=True)
    in_well = (lat.m >= mb) & (lat.m < mt)

    rng = np.random.default_rng(alloy.seed if seed is None else seed)
    draws = rng.random(n)
    lat.species[:] = SI
    lat.species[~in_well & (draws < alloy.ge_fraction)] = GE


def layer_ge_fraction(lat: AtomLattice) -> np.ndarray:
    """Ge fraction per atomic layer, (n_layers,)."""
    total = np.bincount(lat.m, minlength=lat.n_layers).astype(float)
    ge = np.bincount(lat.m, weights=(lat.species == GE), minlength=lat.n_layers)
    return ge / np.maximum(total, 1.0)


def chain_positions_x(lat: AtomLattice) -> np.ndarray:
    """Mean in-plane x of each chain in Angstrom, (n_chains,)."""
    x = lat.cx * lat.pitch_xy
    # chains drift in x with period 4 layers; use the circular mean so the
    # wrap at the supercell edge does not bias the result
    ang = 2.0 * np.pi * x / lat.period_x
    zs = np.exp(1j * ang)[lat.chain_atoms]
    mean = zs.mean(axis=1)
    out = (np.angle(mean) / (2.0 * np.pi)) * lat.period_x
    return np.mod(out, lat.period_x)
