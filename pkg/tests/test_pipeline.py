"""Staged runs: caching, manifests, ensemble sweeps, and the CLI."""

import dataclasses
import json
import shutil

import numpy as np
import pytest

from shuttlesim import cli, pipeline
from shuttlesim.device import (
    DeviceGeometry,
    RunSettings,
    SimulationConfig,
    config_hash,
    save_config,
)
from shuttlesim.errors import ConfigError, ConvergenceError
from shuttlesim.io import read_atoms, read_sweep, read_trace
from shuttlesim.pipeline import (
    ATOM_BUDGET,
    compute_member_trace,
    run_ensemble,
    run_pipeline,
    slab_shape,
)


def small_config(**run_kwargs) -> SimulationConfig:
    """A toy device small enough for a full pipeline run in seconds."""
    geom = DeviceGeometry(gate_width=2.5, gate_gap=1.0, y_extent=20.0,
                          screen_width=4.0, screen_gap=1.5,
                          well_thickness=2.0, barrier_thickness=1.0)
    run = RunSettings(seeds=run_kwargs.pop("seeds", (101, 102)),
                      speeds=run_kwargs.pop("speeds", (1.0, 10.0, 100.0)),
                      rms_list=run_kwargs.pop("rms_list", (2.0,)),
                      **run_kwargs)
    return SimulationConfig(geometry=geom, run=run)


@pytest.fixture(scope="module")
def full_run(tmp_path_factory):
    """One complete pipeline run shared by the read-only tests."""
    out = tmp_path_factory.mktemp("run")
    cfg = small_config()
    manifest = run_pipeline(cfg, out, seed=7)
    return cfg, out, manifest


class TestSlabShape:
    def test_default_geometry_fits_budget(self):
        nx, ny, nl = slab_shape(DeviceGeometry())
        assert 2 * nx * ny * nl <= ATOM_BUDGET
        assert ny == 2

    def test_small_geometry_is_commensurate(self):
        geom = small_config().geometry
        nx, ny, nl = slab_shape(geom)
        pitch = 0.1 * 5.43
        assert abs(nx * pitch - geom.cell_length) < pitch

    def test_layers_track_stack_thickness(self):
        geom = small_config().geometry
        _, _, nl = slab_shape(geom)
        assert nl == round(10.0 * geom.stack_z_atoms / (5.43 / 4.0))


class TestFullRun:
    def test_all_artifacts_present(self, full_run):
        _, out, manifest = full_run
        names = {n for rec in manifest.stages.values()
                 for n in rec["artifacts"]}
        for name in names:
            assert (out / name).exists(), name
        assert (out / "manifest.json").exists()

    def test_manifest_records_all_stages(self, full_run):
        cfg, _, manifest = full_run
        assert set(manifest.stages) == set(pipeline.STAGE_ORDER)
        assert manifest.config_hash == config_hash(cfg)
        for rec in manifest.stages.values():
            assert rec["skipped"] is False
            assert rec["elapsed_s"] >= 0.0

    def test_manifest_seeds_are_reproducible(self, full_run):
        _, out, manifest = full_run
        on_disk = json.loads((out / "manifest.json").read_text())
        assert on_disk["config_hash"] == manifest.config_hash
        rec = on_disk["stages"]["gen-surface"]["seeds"]
        assert rec["member_seed"] == 7
        assert {"surface_top", "surface_bottom", "alloy"} <= set(rec)

    def test_atoms_are_relaxed(self, full_run):
        _, out, _ = full_run
        art, meta = read_atoms(out / "atoms.dat")
        assert art.relaxed_positions is not None
        assert meta["config_hash"] == full_run[2].config_hash

    def test_trace_shape_and_motion(self, full_run):
        cfg, out, _ = full_run
        tr, _ = read_trace(out / "trace.dat")
        assert tr.shape[0] == cfg.run.num_steps
        assert (tr["Ev_ueV"] > 0).all()
        # dot advances by one gate pitch per quarter period
        dx = np.diff(tr["x_dot_nm"])
        dx = np.where(dx < -0.5 * cfg.geometry.cell_length,
                      dx + cfg.geometry.cell_length, dx)
        assert dx.mean() > 0

    def test_dynamics_is_single_member(self, full_run):
        cfg, out, _ = full_run
        res, _ = read_sweep(out / "dynamics.dat")
        assert res.rms_values.tolist() == [cfg.roughness.rms]
        assert np.array_equal(res.speeds, cfg.run.speeds)
        assert (res.n == 1).all()
        assert np.isnan(res.infidelity_std).all()
        assert np.isfinite(res.infidelity_mean).all()

    def test_sweep_aggregates_members(self, full_run):
        cfg, out, _ = full_run
        res, _ = read_sweep(out / "sweep.dat")
        assert res.rms_values.tolist() == list(cfg.run.rms_list)
        assert (res.n == len(cfg.run.seeds)).all()
        assert np.isfinite(res.infidelity_mean).all()
        assert not res.incomplete.any()
        assert res.failures == []


class TestCaching:
    def test_second_run_skips_everything(self, full_run):
        cfg, out, _ = full_run
        manifest = run_pipeline(cfg, out, seed=7)
        assert all(rec["skipped"] for rec in manifest.stages.values())

    def test_deleted_intermediate_regenerates_only_itself(self, full_run,
                                                         tmp_path):
        cfg, out, _ = full_run
        work = tmp_path / "copy"
        shutil.copytree(out, work)
        before = (work / "trace.dat").read_bytes()
        (work / "trace.dat").unlink()
        manifest = run_pipeline(cfg, work, seed=7)
        ran = [s for s, rec in manifest.stages.items()
               if not rec["skipped"]]
        assert ran == ["trace"]
        assert (work / "trace.dat").read_bytes() == before

    def test_config_change_invalidates(self, full_run, tmp_path):
        cfg, out, _ = full_run
        work = tmp_path / "copy"
        shutil.copytree(out, work)
        bumped = dataclasses.replace(
            cfg, drive=dataclasses.replace(cfg.drive,
                                           amplitude=cfg.drive.amplitude
                                           * 1.01))
        manifest = run_pipeline(bumped, work, stages=["trace"], seed=7)
        ran = {s for s, rec in manifest.stages.items()
               if not rec["skipped"]}
        assert "trace" in ran

    def test_requesting_one_stage_pulls_dependencies(self, tmp_path):
        cfg = small_config()
        manifest = run_pipeline(cfg, tmp_path, stages=["relax"], seed=7)
        assert set(manifest.stages) == {"gen-surface", "build-lattice",
                                        "relax"}
        assert not any(rec["skipped"] for rec in manifest.stages.values())

    def test_unknown_stage_rejected(self, tmp_path):
        with pytest.raises(ConfigError, match="unknown stage"):
            run_pipeline(small_config(), tmp_path, stages=["polish"])


class TestDeterminism:
    def test_fresh_directories_agree_byte_for_byte(self, full_run, tmp_path):
        cfg, out, _ = full_run
        run_pipeline(cfg, tmp_path, seed=7)
        for name in ("surface_bottom.dat", "surface_top.dat", "atoms.dat",
                     "trace.dat", "dynamics.dat", "sweep.dat"):
            assert (tmp_path / name).read_bytes() \
                == (out / name).read_bytes(), name

    def test_member_seed_changes_disorder(self, tmp_path):
        cfg = small_config()
        a = run_pipeline(cfg, tmp_path / "a", stages=["gen-surface"], seed=1)
        b = run_pipeline(cfg, tmp_path / "b", stages=["gen-surface"], seed=2)
        assert a.config_hash == b.config_hash
        assert (tmp_path / "a" / "surface_top.dat").read_bytes() \
            != (tmp_path / "b" / "surface_top.dat").read_bytes()


class TestEnsemble:
    def test_member_failure_is_recorded_not_fatal(self, monkeypatch):
        cfg = small_config(seeds=(101, 102, 103))
        real = pipeline.compute_member_trace

        def flaky(config, rms, rms_index, member_seed, units, *a, **k):
            if member_seed == 102:
                raise ConvergenceError("planted failure")
            return real(config, rms, rms_index, member_seed, units, *a, **k)

        monkeypatch.setattr(pipeline, "compute_member_trace", flaky)
        res = run_ensemble(cfg)
        assert (res.n == 2).all()
        assert np.isfinite(res.infidelity_mean).all()
        assert len(res.failures) == 1
        assert res.failures[0][1] == 102
        assert "planted failure" in res.failures[0][2]

    def test_programming_errors_propagate(self, monkeypatch):
        cfg = small_config(seeds=(101,))

        def broken(*a, **k):
            raise TypeError("this is a bug, not a bad draw")

        monkeypatch.setattr(pipeline, "compute_member_trace", broken)
        with pytest.raises(TypeError):
            run_ensemble(cfg)

    def test_empty_seed_list_rejected(self):
        cfg = small_config()
        with pytest.raises(ConfigError, match="seed"):
            run_ensemble(cfg, seeds_per_rms=0)


class TestFailureManifest:
    def test_stage_failure_keeps_partial_manifest(self, tmp_path,
                                                  monkeypatch):
        cfg = small_config()

        def boom(lat, vff, u0=None):
            raise ConvergenceError("relaxation stalled: planted")

        monkeypatch.setattr(pipeline, "relax_lattice", boom)
        with pytest.raises(ConvergenceError):
            run_pipeline(cfg, tmp_path, seed=7)
        on_disk = json.loads((tmp_path / "manifest.json").read_text())
        assert "planted" in on_disk["stages"]["relax"]["error"]
        assert on_disk["stages"]["relax"]["skipped"] is False
        assert on_disk["stages"]["trace"]["skipped"] is True
        assert "upstream" in on_disk["stages"]["trace"]["error"]
        assert on_disk["stages"]["gen-surface"]["skipped"] is False


class TestCli:
    def test_run_and_describe(self, full_run, capsys):
        cfg, out, _ = full_run
        cfg_path = out / "config.txt"
        save_config(cfg, cfg_path)
        code = cli.main(["trace", "--config", str(cfg_path),
                         "--out", str(out), "--seed", "7"])
        assert code == 0
        assert "up to date" in capsys.readouterr().out

        code = cli.main(["describe", str(out / "sweep.dat")])
        assert code == 0
        assert "SWEEP v1" in capsys.readouterr().out

    def test_list_overrides_reach_run_settings(self, monkeypatch, tmp_path):
        seen = {}

        def spy(config, out_dir, stages=None, seed=None, progress=None):
            seen["run"] = config.run
            seen["stages"] = stages

            class M:
                stages = {}
            return M()

        monkeypatch.setattr(cli, "run_pipeline", spy)
        code = cli.main(["sweep", "--out", str(tmp_path),
                         "--speeds", "1, 10,100",
                         "--rms-list", "0 2.5", "--seeds", "5,6"])
        assert code == 0
        assert seen["run"].speeds == (1.0, 10.0, 100.0)
        assert seen["run"].rms_list == (0.0, 2.5)
        assert seen["run"].seeds == (5, 6)
        assert seen["stages"] == ["sweep"]

    def test_bad_list_value_exits_2(self, tmp_path, capsys):
        code = cli.main(["sweep", "--out", str(tmp_path),
                         "--speeds", "fast"])
        assert code == 2
        assert "error:" in capsys.readouterr().err

    def test_bad_config_file_exits_2(self, tmp_path, capsys):
        bad = tmp_path / "bad.cfg"
        bad.write_text("[geometry]\ngate_width = -3\n")
        code = cli.main(["trace", "--config", str(bad),
                         "--out", str(tmp_path)])
        assert code == 2
        assert "gate_width" in capsys.readouterr().err

    def test_numerical_failure_exits_3(self, monkeypatch, tmp_path, capsys):
        def boom(*a, **k):
            raise ConvergenceError("did not converge")

        monkeypatch.setattr(cli, "run_pipeline", boom)
        code = cli.main(["relax", "--out", str(tmp_path)])
        assert code == 3
        assert "did not converge" in capsys.readouterr().err

    def test_artifact_error_exits_4(self, tmp_path, capsys):
        junk = tmp_path / "junk.dat"
        junk.write_text("not an artifact\n")
        code = cli.main(["describe", str(junk)])
        assert code == 4
        assert "format" in capsys.readouterr().err

    def test_os_error_exits_4(self, monkeypatch, tmp_path, capsys):
        def denied(*a, **k):
            raise OSError("disk full")

        monkeypatch.setattr(cli, "run_pipeline", denied)
        code = cli.main(["trace", "--out", str(tmp_path)])
        assert code == 4
        assert "disk full" in capsys.readouterr().err
