"""Gate electrostatics on a node-based finite-volume grid.

The simulation box spans one period of the gate array in x (periodic), the
full device width in y, and the layer stack plus cap and oxide in z.  The
linear Poisson problem div(eps grad phi) = 0 is discretized by box
integration: the flux between two nodes crosses a control-volume face built
from up to four cell quadrants, each carrying its own permittivity, which
reproduces layered parallel-plate fields exactly at the nodes.

Gate electrodes are Dirichlet patches on the top surface; every other
boundary is natural (zero normal flux).  One unit solve per electrode
(that electrode at 1 V, the others at 0 V) is enough to assemble the
potential at any drive time by superposition.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass

import numpy as np
from scipy.sparse.linalg import LinearOperator, cg

from .constants import EPS_OXIDE, EPS_SI, eps_sige
from .device import DeviceGeometry, DriveWaveform, voltage_vector
from .errors import ConvergenceError, WellDistortionWarning

NUM_ELECTRODES = 6
DEGENERACY_VOLTS = 1e-6


@dataclass
class Grid3D:
    """Node grid: x periodic with nx nodes, y and z inclusive node ranges."""

    h: float
    nx: int
    ny: int
    nz: int
    eps_cells: np.ndarray  # (nx, ny-1, nz-1)

    @property
    def xs(self) -> np.ndarray:
        return np.arange(self.nx) * self.h

    @property
    def ys(self) -> np.ndarray:
        return np.arange(self.ny) * self.h

    @property
    def zs(self) -> np.ndarray:
        return np.arange(self.nz) * self.h


def _layer_eps(z: np.ndarray, geom: DeviceGeometry,
               ge_fraction: float) -> np.ndarray:
    """Permittivity of the stack as a function of depth z (nm)."""
    eb = eps_sige(ge_fraction)
    zw0 = geom.barrier_thickness
    zw1 = zw0 + geom.well_thickness
    ztop = geom.stack_height
    zcap = ztop + geom.cap_thickness
    out = np.full(z.shape, eb)
    out[(z >= zw0) & (z < zw1)] = EPS_SI
    out[(z >= zw1) & (z < ztop)] = eb
    out[(z >= ztop) & (z < zcap)] = EPS_SI
    out[z >= zcap] = EPS_OXIDE
    return out


def build_grid(geom: DeviceGeometry, ge_fraction: float,
               resolution: float | None = None) -> Grid3D:
    h = geom.grid_spacing if resolution is None else resolution
    lx = geom.cell_length
    ly = geom.y_extent
    lz = geom.stack_height + geom.cap_thickness + geom.oxide_thickness
    nx = int(round(lx / h))
    ny = int(round(ly / h)) + 1
    nz = int(round(lz / h)) + 1
    zc = (np.arange(nz - 1) + 0.5) * h
    eps_z = _layer_eps(zc, geom, ge_fraction)
    eps = np.broadcast_to(eps_z, (nx, ny - 1, nz - 1)).copy()
    return Grid3D(h=h, nx=nx, ny=ny, nz=nz, eps_cells=eps)


def _face_coefficients(grid: Grid3D):
    """Quadrant-summed face conductances (h/4 * sum of cell eps)."""
    eps = grid.eps_cells
    nx, ny, nz = grid.nx, grid.ny, grid.nz
    q = grid.h / 4.0

    # pad cell eps with zeros outside the y and z extents; x wraps
    pad = np.zeros((nx, ny + 1, nz + 1))
    pad[:, 1:ny, 1:nz] = eps

    # x faces: between (i,j,k) and (i+1,j,k); quadrants at cells
    # (i, j-1..j, k-1..k)
    cx = q * (pad[:, :-1, :-1] + pad[:, 1:, :-1]
              + pad[:, :-1, 1:] + pad[:, 1:, 1:])

    # y faces: between (i,j,k) and (i,j+1,k); quadrants wrap in x
    s = pad[:, 1:ny, :]
    sm = np.roll(s, 1, axis=0)
    cy = q * (s[:, :, :-1] + s[:, :, 1:] + sm[:, :, :-1] + sm[:, :, 1:])

    # z faces: between (i,j,k) and (i,j,k+1)
    t = pad[:, :, 1:nz]
    tm = np.roll(t, 1, axis=0)
    cz = q * (t[:, :-1, :] + t[:, 1:, :] + tm[:, :-1, :] + tm[:, 1:, :])

    return cx, cy, cz


def _apply_stencil(phi: np.ndarray, cx, cy, cz) -> np.ndarray:
    """Action of the (negated, SPD) box-integration Laplacian."""
    out = np.zeros_like(phi)
    dx = cx * (np.roll(phi, -1, axis=0) - phi)
    out += dx
    out -= np.roll(dx, 1, axis=0)
    dy = cy * (phi[:, 1:, :] - phi[:, :-1, :])
    out[:, :-1, :] += dy
    out[:, 1:, :] -= dy
    dz = cz * (phi[:, :, 1:] - phi[:, :, :-1])
    out[:, :, :-1] += dz
    out[:, :, 1:] -= dz
    return -out


def solve_poisson(grid: Grid3D, fixed_mask: np.ndarray,
                  fixed_vals: np.ndarray, rtol: float = 1e-10,
                  maxiter: int = 20000) -> np.ndarray:
    """Solve the discrete problem with given Dirichlet nodes.

    ``fixed_mask`` marks Dirichlet nodes; ``fixed_vals`` supplies their
    potentials.  All remaining boundaries are natural.  Returns the full
    node potential array (nx, ny, nz).
    """
    cx, cy, cz = _face_coefficients(grid)
    shape = (grid.nx, grid.ny, grid.nz)
    free = ~fixed_mask
    nfree = int(free.sum())
    if nfree == 0:
        return fixed_vals.astype(float).copy()

    base = np.where(fixed_mask, fixed_vals, 0.0)
    rhs_full = -_apply_stencil(base, cx, cy, cz)
    b = rhs_full[free]

    diag_full = np.zeros(shape)
    dx_sum = cx + np.roll(cx, 1, axis=0)
    diag_full += dx_sum
    diag_full[:, :-1, :] += cy
    diag_full[:, 1:, :] += cy
    diag_full[:, :, :-1] += cz
    diag_full[:, :, 1:] += cz
    dinv = 1.0 / diag_full[free]

    def matvec(x):
        full = np.zeros(shape)
        full[free] = x
        return _apply_stencil(full, cx, cy, cz)[free]

    op = LinearOperator((nfree, nfree), matvec=matvec)
    prec = LinearOperator((nfree, nfree), matvec=lambda x: dinv * x)
    x, info = cg(op, b, rtol=rtol, atol=0.0, maxiter=maxiter, M=prec)
    if info != 0:
        raise ConvergenceError(f"potential solve failed to reach rtol "
                               f"{rtol:.1e} in {maxiter} iterations")
    phi = base.copy()
    phi[free] = x
    return phi


def electrode_masks(geom: DeviceGeometry, grid: Grid3D) -> np.ndarray:
    """Top-surface node masks for the four gates and two screens, (6, nx, ny)."""
    xs = grid.xs
    ys = grid.ys
    masks = np.zeros((NUM_ELECTRODES, grid.nx, grid.ny), dtype=bool)
    y0, y1 = geom.clavier_span_y()
    in_span = (ys >= y0 - 1e-9) & (ys <= y1 + 1e-9)
    for j, (lo, hi) in enumerate(geom.gate_footprints_x()):
        xin = (xs >= lo - 1e-9) & (xs <= hi + 1e-9)
        masks[j] = xin[:, None] & in_span[None, :]
    sw = geom.screen_width
    masks[4] = (ys <= sw + 1e-9)[None, :]
    masks[5] = (ys >= geom.y_extent - sw - 1e-9)[None, :]
    masks[4] |= np.zeros((grid.nx, 1), dtype=bool)
    masks[5] |= np.zeros((grid.nx, 1), dtype=bool)
    return masks


@dataclass
class UnitPotentials:
    """One solved field per electrode at 1 V, for superposition."""

    geom: DeviceGeometry
    grid: Grid3D
    fields: np.ndarray  # (6, nx, ny, nz)

    def superpose(self, voltages: np.ndarray) -> np.ndarray:
        v = np.asarray(voltages, dtype=float)
        if v.shape != (NUM_ELECTRODES,):
            raise ValueError("expected one voltage per electrode")
        return np.tensordot(v, self.fields, axes=(0, 0))

    def at_time(self, drive: DriveWaveform, t: float) -> np.ndarray:
        return self.superpose(voltage_vector(drive, t))


def solve_unit_potentials(geom: DeviceGeometry, ge_fraction: float,
                          resolution: float | None = None,
                          rtol: float = 1e-10) -> UnitPotentials:
    grid = build_grid(geom, ge_fraction, resolution)
    masks = electrode_masks(geom, grid)
    any_mask = masks.any(axis=0)
    fields = np.empty((NUM_ELECTRODES, grid.nx, grid.ny, grid.nz))
    fixed_mask = np.zeros((grid.nx, grid.ny, grid.nz), dtype=bool)
    fixed_mask[:, :, -1] = any_mask
    for e in range(NUM_ELECTRODES):
        vals = np.zeros((grid.nx, grid.ny, grid.nz))
        vals[:, :, -1] = masks[e].astype(float)
        fields[e] = solve_poisson(grid, fixed_mask, vals, rtol=rtol)
    return UnitPotentials(geom=geom, grid=grid, fields=fields)


def well_profile(phi: np.ndarray, geom: DeviceGeometry,
                 grid: Grid3D) -> np.ndarray:
    """Potential along x at the channel center, maximized over well depth."""
    jy = int(round(0.5 * geom.y_extent / grid.h))
    z0 = geom.barrier_thickness
    z1 = z0 + geom.well_thickness
    ks = np.where((grid.zs >= z0 - 1e-9) & (grid.zs <= z1 + 1e-9))[0]
    return phi[:, jy, ks].max(axis=1)


def track_dot_position(phi: np.ndarray, geom: DeviceGeometry,
                       grid: Grid3D) -> float:
    """x of the potential maximum in the well, in nm.

    Warns with :class:`WellDistortionWarning` when nodes within
    ``DEGENERACY_VOLTS`` of the maximum form more than one cluster along
    the periodic x direction (an emerging double well).
    """
    prof = well_profile(phi, geom, grid)
    nx = prof.shape[0]
    top = prof.max()
    near = prof > top - DEGENERACY_VOLTS
    # count clusters on the periodic ring
    edges = np.sum(near & ~np.roll(near, 1))
    if edges > 1:
        warnings.warn("potential maximum is degenerate across separated "
                      "x clusters", WellDistortionWarning)
    i = int(np.argmax(prof))
    ym = prof[(i - 1) % nx]
    yp = prof[(i + 1) % nx]
    denom = ym - 2.0 * prof[i] + yp
    shift = 0.0
    if denom < 0.0:
        shift = 0.5 * (ym - yp) / denom
    return ((i + shift) * grid.h) % geom.cell_length


def sample_potential(phi: np.ndarray, grid: Grid3D,
                     points_nm: np.ndarray) -> np.ndarray:
    """Trilinear interpolation at (n, 3) points; x wraps periodically."""
    p = np.asarray(points_nm, dtype=float)
    fx = np.mod(p[:, 0], grid.nx * grid.h) / grid.h
    fy = np.clip(p[:, 1] / grid.h, 0.0, grid.ny - 1 - 1e-12)
    fz = np.clip(p[:, 2] / grid.h, 0.0, grid.nz - 1 - 1e-12)
    i0 = np.floor(fx).astype(int) % grid.nx
    j0 = np.floor(fy).astype(int)
    k0 = np.floor(fz).astype(int)
    i1 = (i0 + 1) % grid.nx
    j1 = np.minimum(j0 + 1, grid.ny - 1)
    k1 = np.minimum(k0 + 1, grid.nz - 1)
    tx = fx - np.floor(fx)
    ty = fy - j0
    tz = fz - k0
    out = np.zeros(p.shape[0])
    for di, wi in ((i0, 1.0 - tx), (i1, tx)):
        for dj, wj in ((j0, 1.0 - ty), (j1, ty)):
            for dk, wk in ((k0, 1.0 - tz), (k1, tz)):
                out += wi * wj * wk * phi[di, dj, dk]
    return out
