"""Finite-volume Poisson solver checks against closed-form fields."""

import numpy as np
import pytest

from shuttlesim.device import DeviceGeometry, DriveWaveform
from shuttlesim.electrostatics import (
    Grid3D,
    build_grid,
    electrode_masks,
    sample_potential,
    solve_poisson,
    solve_unit_potentials,
    track_dot_position,
    well_profile,
)
from shuttlesim.errors import WellDistortionWarning

GEOM = DeviceGeometry()


@pytest.fixture(scope="module")
def units():
    return solve_unit_potentials(GEOM, 0.3)


def _uniform_grid(nx, ny, nz, h, eps=1.0):
    cells = np.full((nx, ny - 1, nz - 1), eps)
    return Grid3D(h=h, nx=nx, ny=ny, nz=nz, eps_cells=cells)


class TestLayeredExactness:
    def test_parallel_plate_two_dielectrics(self):
        """Nodal solution of a layered capacitor is exact."""
        h = 0.5
        nz = 17
        grid = _uniform_grid(8, 5, nz, h)
        eps_z = np.where(np.arange(nz - 1) < 8, 3.9, 11.7)
        grid.eps_cells[:] = eps_z
        fixed = np.zeros((8, 5, nz), dtype=bool)
        fixed[:, :, 0] = True
        fixed[:, :, -1] = True
        vals = np.zeros((8, 5, nz))
        vals[:, :, -1] = 1.0
        phi = solve_poisson(grid, fixed, vals)
        # series-resistance profile
        rz = h / eps_z
        drop = np.concatenate([[0.0], np.cumsum(rz)])
        expect = drop / drop[-1]
        np.testing.assert_allclose(phi[3, 2, :], expect, rtol=0, atol=1e-8)
        # solution is uniform in-plane
        assert np.ptp(phi, axis=(0, 1)).max() < 1e-10

    def test_three_layer_stack(self):
        h = 1.0
        nz = 13
        grid = _uniform_grid(6, 4, nz, h)
        eps_z = np.concatenate([np.full(4, 13.05), np.full(5, 11.7),
                                np.full(3, 9.0)])
        grid.eps_cells[:] = eps_z
        fixed = np.zeros((6, 4, nz), dtype=bool)
        fixed[:, :, 0] = True
        fixed[:, :, -1] = True
        vals = np.zeros((6, 4, nz))
        vals[:, :, -1] = 0.7
        phi = solve_poisson(grid, fixed, vals)
        rz = h / eps_z
        drop = np.concatenate([[0.0], np.cumsum(rz)])
        expect = 0.7 * drop / drop[-1]
        np.testing.assert_allclose(phi[0, 0, :], expect, rtol=0, atol=1e-8)


class TestConvergence:
    def test_second_order_on_smooth_solution(self):
        """Sinusoidal top boundary with uniform eps has a sinh profile."""
        lx, lz = 12.0, 6.0
        k = 2.0 * np.pi / lx

        def err(h):
            nx = int(round(lx / h))
            nz = int(round(lz / h)) + 1
            ny = 5
            grid = _uniform_grid(nx, ny, nz, h)
            fixed = np.zeros((nx, ny, nz), dtype=bool)
            fixed[:, :, 0] = True
            fixed[:, :, -1] = True
            vals = np.zeros((nx, ny, nz))
            vals[:, :, -1] = np.sin(k * grid.xs)[:, None]
            phi = solve_poisson(grid, fixed, vals, rtol=1e-12)
            exact = (np.sin(k * grid.xs)[:, None]
                     * (np.sinh(k * grid.zs) / np.sinh(k * lz))[None, :])
            return np.sqrt(np.mean((phi[:, 2, :] - exact) ** 2))

        e1, e2 = err(1.0), err(0.5)
        order = np.log2(e1 / e2)
        assert order > 1.8

    def test_uniform_dirichlet_gives_constant(self, units):
        """All electrodes at 1 V must give phi = 1 everywhere."""
        phi = units.superpose(np.ones(6))
        np.testing.assert_allclose(phi, 1.0, rtol=0, atol=1e-8)


class TestSuperposition:
    def test_matches_single_combined_solve(self, units):
        v = np.array([0.6, 0.7, 0.4, 0.7, -0.3, -0.3])
        grid = units.grid
        masks = electrode_masks(GEOM, grid)
        fixed = np.zeros((grid.nx, grid.ny, grid.nz), dtype=bool)
        fixed[:, :, -1] = masks.any(axis=0)
        vals = np.zeros((grid.nx, grid.ny, grid.nz))
        for e in range(6):
            vals[:, :, -1][masks[e]] = v[e]
        phi_direct = solve_poisson(grid, fixed, vals)
        phi_super = units.superpose(v)
        np.testing.assert_allclose(phi_super, phi_direct, rtol=0, atol=1e-7)

    def test_max_principle(self, units):
        drive = DriveWaveform()
        for t in (0.0, 0.1, 0.33, 0.71):
            phi = units.at_time(drive, t)
            lo = min(drive.screen_voltage,
                     drive.base_offset - drive.amplitude)
            hi = drive.base_offset + drive.amplitude + drive.alt_offset
            assert phi.min() >= lo - 1e-8
            assert phi.max() <= hi + 1e-8


class TestElectrodeLayout:
    def test_masks_disjoint_and_on_top(self, units):
        masks = electrode_masks(GEOM, units.grid)
        overlap = masks.astype(int).sum(axis=0)
        assert overlap.max() == 1
        # four gates inside the screened span, two screens at the edges
        assert masks[:4].any()
        assert masks[4, :, 0].all()
        assert masks[5, :, -1].all()


class TestDotTracking:
    def test_quadratic_refinement(self):
        grid = _uniform_grid(40, 9, 13, 1.0)
        geom = DeviceGeometry(gate_width=8.0, gate_gap=2.0, y_extent=8.0,
                              screen_width=1.0, screen_gap=1.0,
                              well_thickness=6.0, barrier_thickness=3.0)
        x_true = 17.32
        xs = grid.xs
        d = np.minimum(np.abs(xs - x_true), 40.0 - np.abs(xs - x_true))
        phi = np.zeros((40, 9, 13))
        phi[:, :, :] = (1.0 - 0.002 * d ** 2)[:, None, None]
        assert track_dot_position(phi, geom, grid) == pytest.approx(
            x_true, abs=1e-6)

    def test_double_well_warns(self):
        grid = _uniform_grid(40, 9, 13, 1.0)
        geom = DeviceGeometry(gate_width=8.0, gate_gap=2.0, y_extent=8.0,
                              screen_width=1.0, screen_gap=1.0)
        xs = grid.xs
        bump = np.exp(-0.5 * ((xs - 10.0) / 2.0) ** 2) \
            + np.exp(-0.5 * ((xs - 30.0) / 2.0) ** 2)
        phi = np.broadcast_to(bump[:, None, None], (40, 9, 13)).copy()
        with pytest.warns(WellDistortionWarning):
            track_dot_position(phi, geom, grid)

    def test_default_drive_single_well_under_gate1(self, units):
        phi = units.at_time(DriveWaveform(), 0.0)
        import warnings as w
        with w.catch_warnings():
            w.simplefilter("error")
            x0 = track_dot_position(phi, GEOM, units.grid)
        assert x0 == pytest.approx(5.0, abs=0.5)

    def test_dot_advances_one_pitch_per_quarter_period(self, units):
        drive = DriveWaveform()
        x0 = track_dot_position(units.at_time(drive, 0.0), GEOM, units.grid)
        x1 = track_dot_position(units.at_time(drive, 0.25), GEOM, units.grid)
        assert (x1 - x0) % GEOM.cell_length == pytest.approx(12.5, abs=0.5)


class TestSampling:
    def test_periodic_wrap_in_x(self, units):
        phi = units.fields[0]
        pts = np.array([[0.0, 7.0, 5.0], [GEOM.cell_length, 7.0, 5.0]])
        a, b = sample_potential(phi, units.grid, pts)
        assert a == pytest.approx(b, abs=1e-12)

    def test_reproduces_linear_field(self):
        grid = _uniform_grid(8, 6, 11, 1.0)
        zs = grid.zs
        phi = np.broadcast_to(0.1 * zs, (8, 6, 11)).copy()
        pts = np.array([[2.3, 1.7, 4.25], [7.9, 4.2, 9.75]])
        out = sample_potential(phi, grid, pts)
        np.testing.assert_allclose(out, 0.1 * pts[:, 2], rtol=1e-12)

    def test_well_profile_shape(self, units):
        phi = units.at_time(DriveWaveform(), 0.0)
        prof = well_profile(phi, GEOM, units.grid)
        assert prof.shape == (units.grid.nx,)
        assert prof.max() < 0.6


class TestRuntime:
    def test_unit_solves_fit_budget(self):
        import time
        t0 = time.time()
        solve_unit_potentials(GEOM, 0.3)
        assert time.time() - t0 < 60.0
