"""Artifact file round trips, atomicity, and format validation."""

import os

import numpy as np
import pytest

from shuttlesim.device import AlloySpec, VffParams
from shuttlesim.dynamics import EnsembleResult
from shuttlesim.errors import ArtifactFormatError
from shuttlesim.io import (
    append_relaxed,
    atomic_write,
    describe_artifact,
    read_atoms,
    read_potential,
    read_surface,
    read_sweep,
    read_trace,
    write_atoms,
    write_potential,
    write_surface,
    write_sweep,
    write_trace,
)
from shuttlesim.lattice import assign_species, build_lattice
from shuttlesim.roughness import RoughnessSpec, synthesize_surface
from shuttlesim.strain import relax_lattice
from shuttlesim.valley import TRACE_FIELDS

META = {"config_hash": "deadbeef" * 8, "member_seed": 7}


@pytest.fixture(scope="module")
def surface():
    spec = RoughnessSpec(rms=2.0)
    return synthesize_surface(spec, (32, 16), (12.0, 6.0),
                              x_period=12.0, seed=5)


@pytest.fixture(scope="module")
def slab():
    lat = build_lattice(6, 2, 12)
    assign_species(lat, 4.0, 12.0, AlloySpec(ge_fraction=0.3), seed=3)
    return lat


class TestSurface:
    def test_round_trip_exact(self, tmp_path, surface):
        p = tmp_path / "s.dat"
        write_surface(p, surface, META)
        back, meta = read_surface(p)
        assert np.array_equal(back.heights, surface.heights)
        assert back.dx == surface.dx and back.dy == surface.dy
        assert back.rms == surface.rms and back.hurst == surface.hurst
        assert back.seed == surface.seed
        assert meta["config_hash"] == META["config_hash"]

    def test_sampling_survives_round_trip(self, tmp_path, surface):
        p = tmp_path / "s.dat"
        write_surface(p, surface, META)
        back, _ = read_surface(p)
        x = np.linspace(0.0, 11.0, 7)
        y = np.linspace(0.0, 5.0, 7)
        assert np.array_equal(back.sample(x, y), surface.sample(x, y))

    def test_wrong_format_rejected(self, tmp_path, surface):
        p = tmp_path / "s.dat"
        write_surface(p, surface, META)
        with pytest.raises(ArtifactFormatError, match="expected POTGRID"):
            read_potential(p)

    def test_truncated_file(self, tmp_path, surface):
        p = tmp_path / "s.dat"
        write_surface(p, surface, META)
        text = p.read_text().splitlines()
        p.write_text("\n".join(text[:-4]) + "\n")
        with pytest.raises(ArtifactFormatError):
            read_surface(p)


class TestPotential:
    def test_round_trip_exact(self, tmp_path):
        rng = np.random.default_rng(0)
        phi = rng.standard_normal((5, 4, 3))
        p = tmp_path / "phi.dat"
        write_potential(p, phi, 0.5, META)
        back, h, meta = read_potential(p)
        assert np.array_equal(back, phi)
        assert h == 0.5
        assert meta["member_seed"] == "7"

    def test_z_major_layout(self, tmp_path):
        # the flattened payload must walk x fastest, z slowest
        phi = np.arange(24.0).reshape(2, 3, 4)
        p = tmp_path / "phi.dat"
        write_potential(p, phi, 1.0, None)
        payload = []
        for line in p.read_text().splitlines():
            if not line.startswith("#"):
                payload.append(line)
        flat = np.array(" ".join(payload[1:]).split(), dtype=float)
        assert flat[0] == phi[0, 0, 0]
        assert flat[1] == phi[1, 0, 0]
        assert flat[2] == phi[0, 1, 0]

    def test_unknown_tag(self, tmp_path):
        p = tmp_path / "x.dat"
        p.write_text("# BOGUS v1\n1 1 1 1 1 1\n0\n")
        with pytest.raises(ArtifactFormatError, match="known formats"):
            read_potential(p)


class TestAtoms:
    def test_round_trip_exact(self, tmp_path, slab):
        p = tmp_path / "atoms.dat"
        write_atoms(p, slab, META)
        art, meta = read_atoms(p)
        assert art.num_atoms == slab.num_atoms
        assert np.array_equal(art.species, slab.species)
        assert np.array_equal(art.layer, slab.m)
        assert np.array_equal(art.positions, slab.positions())
        assert art.a0 == slab.a0
        assert art.in_plane_strain == slab.in_plane_strain
        assert art.relaxed_positions is None
        assert meta["config_hash"] == META["config_hash"]

    def test_rebuild_lattice_from_artifact(self, tmp_path, slab):
        p = tmp_path / "atoms.dat"
        write_atoms(p, slab, META)
        art, _ = read_atoms(p)
        lat = build_lattice(art.n_cells_x, art.n_cells_y, art.n_layers,
                            a0=art.a0, in_plane_strain=art.in_plane_strain)
        lat.species[:] = art.species
        assert np.array_equal(lat.positions(), art.positions)
        assert np.array_equal(lat.species, slab.species)

    def test_relaxed_append_round_trip(self, tmp_path, slab):
        p = tmp_path / "atoms.dat"
        write_atoms(p, slab, META)
        res = relax_lattice(slab, VffParams())
        pos = slab.positions() + res.displacements
        append_relaxed(p, pos, res.energy, res.grad_max, res.n_iterations)
        art, _ = read_atoms(p)
        assert np.array_equal(art.relaxed_positions, pos)
        assert art.relax_energy == res.energy
        assert art.relax_grad_max == res.grad_max
        assert art.relax_iterations == res.n_iterations

    def test_append_shape_mismatch(self, tmp_path, slab):
        p = tmp_path / "atoms.dat"
        write_atoms(p, slab, META)
        with pytest.raises(ArtifactFormatError, match="shape"):
            append_relaxed(p, np.zeros((3, 3)), 0.0, 0.0, 1)

    def test_atom_count_mismatch(self, tmp_path, slab):
        p = tmp_path / "atoms.dat"
        write_atoms(p, slab, META)
        lines = p.read_text().splitlines()
        head = lines[3].split()
        head[0] = str(int(head[0]) + 2)
        lines[3] = " ".join(head)
        p.write_text("\n".join(lines) + "\n")
        with pytest.raises(ArtifactFormatError, match="atom count"):
            read_atoms(p)


class TestTrace:
    def _trace(self, n=9):
        out = np.zeros(n, dtype=TRACE_FIELDS)
        rng = np.random.default_rng(1)
        out["p"] = np.arange(n)
        out["t_over_T"] = np.arange(n) / n
        out["x_dot_nm"] = np.linspace(0.0, 48.0, n)
        out["E0_eV"] = rng.standard_normal(n) * 1e-3
        out["E1_eV"] = out["E0_eV"] + rng.uniform(1e-5, 1e-3, n)
        out["Ev_ueV"] = (out["E1_eV"] - out["E0_eV"]) * 1e6
        out["phiv_rad"] = rng.uniform(-np.pi, np.pi, n)
        return out

    def test_round_trip_exact(self, tmp_path):
        tr = self._trace()
        p = tmp_path / "trace.dat"
        write_trace(p, tr, META)
        back, meta = read_trace(p)
        for name in tr.dtype.names:
            assert np.array_equal(back[name], tr[name]), name
        assert meta["config_hash"] == META["config_hash"]

    def test_out_of_order_steps_rejected(self, tmp_path):
        tr = self._trace()
        tr["p"] = tr["p"][::-1]
        p = tmp_path / "trace.dat"
        write_trace(p, tr, META)
        with pytest.raises(ArtifactFormatError, match="out of order"):
            read_trace(p)

    def test_wrong_dtype_rejected(self, tmp_path):
        with pytest.raises(ArtifactFormatError, match="fields"):
            write_trace(tmp_path / "t.dat", np.zeros(4), META)


class TestSweep:
    def _result(self):
        rms = np.array([0.0, 2.0, 5.0])
        speeds = np.array([1.0, 10.0, 100.0, 1000.0])
        rng = np.random.default_rng(2)
        mean = rng.uniform(1e-8, 1e-2, (3, 4))
        std = mean * rng.uniform(0.05, 0.5, (3, 4))
        n = np.full((3, 4), 8, dtype=np.int64)
        return EnsembleResult(rms_values=rms, speeds=speeds,
                              infidelity_mean=mean, infidelity_std=std,
                              n=n, failures=[(2.0, 104, "stalled")])

    def test_round_trip_exact(self, tmp_path):
        res = self._result()
        p = tmp_path / "sweep.dat"
        write_sweep(p, res, META)
        back, meta = read_sweep(p)
        assert np.array_equal(back.rms_values, res.rms_values)
        assert np.array_equal(back.speeds, res.speeds)
        assert np.array_equal(back.infidelity_mean, res.infidelity_mean)
        assert np.array_equal(back.infidelity_std, res.infidelity_std)
        assert np.array_equal(back.n, res.n)
        assert meta["config_hash"] == META["config_hash"]

    def test_nan_cells_round_trip(self, tmp_path):
        res = self._result()
        res.infidelity_mean[0, 0] = np.nan
        res.infidelity_std[:, 1] = np.nan
        p = tmp_path / "sweep.dat"
        write_sweep(p, res, META)
        back, _ = read_sweep(p)
        assert np.isnan(back.infidelity_mean[0, 0])
        assert np.isnan(back.infidelity_std[:, 1]).all()

    def test_failures_recorded_as_comments(self, tmp_path):
        res = self._result()
        p = tmp_path / "sweep.dat"
        write_sweep(p, res, META)
        text = p.read_text()
        assert "# failure rms=2 seed=104 stalled" in text

    def test_deterministic_bytes(self, tmp_path):
        res = self._result()
        a, b = tmp_path / "a.dat", tmp_path / "b.dat"
        write_sweep(a, res, META)
        write_sweep(b, res, META)
        assert a.read_bytes() == b.read_bytes()


class TestAtomicWrite:
    def test_leaves_no_temp_files(self, tmp_path):
        p = tmp_path / "out.txt"
        atomic_write(p, "payload\n")
        assert p.read_text() == "payload\n"
        assert os.listdir(tmp_path) == ["out.txt"]

    def test_failed_write_preserves_original(self, tmp_path):
        p = tmp_path / "out.txt"
        atomic_write(p, "original\n")

        class Boom:
            def __str__(self):
                raise RuntimeError("mid-write failure")

        with pytest.raises(TypeError):
            atomic_write(p, Boom())
        assert p.read_text() == "original\n"
        assert os.listdir(tmp_path) == ["out.txt"]


class TestDescribe:
    def test_each_format(self, tmp_path, surface, slab):
        write_surface(tmp_path / "s.dat", surface, META)
        assert "ROUGHSURF v1" in describe_artifact(tmp_path / "s.dat")
        assert "H=0.3" in describe_artifact(tmp_path / "s.dat")

        write_potential(tmp_path / "p.dat", np.zeros((3, 3, 3)), 1.0, META)
        assert "POTGRID v1" in describe_artifact(tmp_path / "p.dat")

        write_atoms(tmp_path / "a.dat", slab, META)
        text = describe_artifact(tmp_path / "a.dat")
        assert "ATOMS v1" in text and "unrelaxed" in text

        tr = TestTrace()._trace()
        write_trace(tmp_path / "t.dat", tr, META)
        assert "VTRACE v1" in describe_artifact(tmp_path / "t.dat")

        res = TestSweep()._result()
        write_sweep(tmp_path / "w.dat", res, META)
        text = describe_artifact(tmp_path / "w.dat")
        assert "SWEEP v1" in text and "8 members" in text

    def test_mentions_config_hash(self, tmp_path, surface):
        write_surface(tmp_path / "s.dat", surface, META)
        assert META["config_hash"][:12] in describe_artifact(
            tmp_path / "s.dat")
