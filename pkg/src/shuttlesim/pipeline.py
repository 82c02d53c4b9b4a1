"""Staged pipeline runs, artifact caching, and ensemble sweeps.

A run executes the requested stages in dependency order, writing one
artifact set per stage into the output directory.  Each artifact carries
the configuration hash; a stage whose artifacts exist with the current
hash is skipped, so rerunning a finished directory does no recomputation
and regenerating a deleted intermediate touches only that stage and its
dependents.
"""

from __future__ import annotations

import dataclasses
import json
import os
import time

import numpy as np

from . import __version__
from . import io as sio
from .device import (
    AlloySpec,
    DeviceGeometry,
    DriveWaveform,
    SimulationConfig,
    config_hash,
    derive_member_seeds,
)
from .dynamics import (
    EnsembleAccumulator,
    EnsembleResult,
    interpolate_trace,
    speed_sweep,
)
from .electrostatics import Grid3D, UnitPotentials, solve_unit_potentials
from .errors import ArtifactFormatError, ConfigError, ConvergenceError, \
    PhaseUnwrapError
from .constants import A0_ANGSTROM, LAYER_SPACING_ANGSTROM
from .lattice import AtomLattice, assign_species, build_lattice
from .strain import bond_strain_per_atom, relax_lattice
from .valley import step_fields, trace_shuttle

# slab sizing: the ring is scaled onto the gate period, so the cell count
# along x trades transverse-mass fidelity against runtime; this budget
# keeps a 40-member ensemble inside the half-hour acceptance window
ATOM_BUDGET = 32500
N_CELLS_Y = 2

ELECTRODES = ("gate1", "gate2", "gate3", "gate4",
              "screen_left", "screen_right")

STAGE_ORDER = ("gen-surface", "build-lattice", "relax", "solve-potential",
               "trace", "dynamics", "sweep")
STAGE_DEPS = {
    "gen-surface": (),
    "build-lattice": ("gen-surface",),
    "relax": ("build-lattice",),
    "solve-potential": (),
    "trace": ("relax", "solve-potential"),
    "dynamics": ("trace",),
    "sweep": ("solve-potential",),
}
_ARTIFACTS = {
    "gen-surface": ("surface_bottom.dat", "surface_top.dat"),
    "build-lattice": ("atoms.dat",),
    "relax": ("atoms.dat",),
    "solve-potential": tuple(f"potential_{e}.dat" for e in ELECTRODES),
    "trace": ("trace.dat",),
    "dynamics": ("dynamics.dat",),
    "sweep": ("sweep.dat",),
}

# failures that reflect a bad disorder draw rather than a coding bug;
# ensemble members hitting one are recorded and skipped
MEMBER_FAILURES = (ConvergenceError, PhaseUnwrapError,
                   np.linalg.LinAlgError, FloatingPointError)


def slab_shape(geom: DeviceGeometry,
               in_plane_strain: float = 0.0) -> tuple[int, int, int]:
    """(cells_x, cells_y, layers) of the atomistic slab for a geometry."""
    n_layers = int(round(10.0 * geom.stack_z_atoms / LAYER_SPACING_ANGSTROM))
    n_layers = max(n_layers, 5)
    # one lattice cell spans a0 along x, so this keeps the slab period
    # commensurate with the gate period to a fraction of a cell
    pitch_nm = 0.1 * A0_ANGSTROM * (1.0 + in_plane_strain)
    commensurate = int(round(geom.cell_length / pitch_nm))
    budget = ATOM_BUDGET // (2 * N_CELLS_Y * n_layers)
    n_cells_x = max(4, min(commensurate, budget))
    return n_cells_x, N_CELLS_Y, n_layers


def well_interval_angstrom(geom: DeviceGeometry) -> tuple[float, float]:
    bottom = 10.0 * geom.barrier_thickness
    return bottom, bottom + 10.0 * geom.well_thickness


def member_surfaces(config: SimulationConfig, lat: AtomLattice,
                    rms: float, rms_index: int, member_seed: int):
    """The two interface realizations and the alloy seed for one member."""
    top_seed, bottom_seed, alloy_seed = derive_member_seeds(
        member_seed, rms_index)
    spec = dataclasses.replace(config.roughness, rms=rms)
    dims = (4 * lat.n_cells_x, 4 * lat.n_cells_y)
    extents = (lat.period_x * 0.1, lat.period_y * 0.1)
    from .roughness import synthesize_surface
    bottom = synthesize_surface(spec, dims, extents, x_period=extents[0],
                                seed=bottom_seed)
    top = synthesize_surface(spec, dims, extents, x_period=extents[0],
                             seed=top_seed)
    return bottom, top, alloy_seed


def build_member_lattice(config: SimulationConfig, rms: float,
                         rms_index: int, member_seed: int,
                         lattice_shape: tuple[int, int, int] | None = None
                         ) -> AtomLattice:
    shape = lattice_shape or slab_shape(config.geometry,
                                        config.vff.substrate_strain)
    lat = build_lattice(*shape, in_plane_strain=config.vff.substrate_strain)
    bottom, top, alloy_seed = member_surfaces(config, lat, rms, rms_index,
                                              member_seed)
    wb, wt = well_interval_angstrom(config.geometry)
    assign_species(lat, wb, wt, config.alloy, bottom_surface=bottom,
                   top_surface=top, seed=alloy_seed)
    return lat


def compute_member_trace(config: SimulationConfig, rms: float,
                         rms_index: int, member_seed: int,
                         units: UnitPotentials,
                         lattice_shape: tuple[int, int, int] | None = None,
                         fields=None) -> np.ndarray:
    """surface -> lattice -> relax -> trace for one ensemble member."""
    lat = build_member_lattice(config, rms, rms_index, member_seed,
                               lattice_shape)
    relaxed = relax_lattice(lat, config.vff)
    strain = bond_strain_per_atom(lat, relaxed.displacements, config.vff)
    return trace_shuttle(lat, units, config.drive, config.valley,
                         config.alloy, config.run.num_steps,
                         bond_strain=strain, fields=fields)


def run_ensemble(config: SimulationConfig, speeds=None, rms_values=None,
                 seeds_per_rms: int | None = None,
                 units: UnitPotentials | None = None,
                 lattice_shape: tuple[int, int, int] | None = None,
                 progress=None) -> EnsembleResult:
    """Full pipeline per (rms, seed) member, aggregated on the grid."""
    run = config.run
    speeds = np.asarray(run.speeds if speeds is None else speeds, float)
    rms_values = np.asarray(run.rms_list if rms_values is None
                            else rms_values, float)
    seeds = run.seeds if seeds_per_rms is None else run.seeds[:seeds_per_rms]
    if len(seeds) == 0:
        raise ConfigError("ensemble needs at least one member seed")
    if units is None:
        units = solve_unit_potentials(config.geometry,
                                      config.alloy.ge_fraction)

    # gate fields per step are disorder-independent; share them
    shape = lattice_shape or slab_shape(config.geometry,
                                        config.vff.substrate_strain)
    probe = build_lattice(*shape,
                          in_plane_strain=config.vff.substrate_strain)
    fields = step_fields(probe, units, config.drive, config.run.num_steps)

    acc = EnsembleAccumulator(rms_values, speeds)
    for ri, rms in enumerate(rms_values):
        for seed in seeds:
            if progress is not None:
                progress(f"member rms={rms:g} seed={seed}")
            try:
                tr = compute_member_trace(config, float(rms), ri, seed,
                                          units, shape, fields=fields)
                itr = interpolate_trace(tr, config.geometry.cell_length)
                res = speed_sweep(itr, speeds)
            except MEMBER_FAILURES as exc:
                acc.add_failure(float(rms), seed, str(exc))
                continue
            acc.add(float(rms), res.infidelity)
    return acc.result()


# ---------------------------------------------------------------------------
# staged execution

@dataclasses.dataclass
class RunManifest:
    config_hash: str
    version: str
    stages: dict

    def save(self, path) -> None:
        payload = {"format": "RUNMANIFEST v1",
                   "config_hash": self.config_hash,
                   "version": self.version,
                   "stages": self.stages}
        sio.atomic_write(path, json.dumps(payload, indent=2,
                                          sort_keys=True) + "\n")

    @classmethod
    def load(cls, path) -> "RunManifest":
        try:
            with open(path, "r", encoding="utf-8") as fh:
                payload = json.load(fh)
        except (OSError, json.JSONDecodeError) as exc:
            raise ArtifactFormatError(
                f"cannot read manifest {path}: {exc}") from exc
        if payload.get("format") != "RUNMANIFEST v1":
            raise ArtifactFormatError(f"{path} is not a RUNMANIFEST v1 file")
        return cls(config_hash=payload["config_hash"],
                   version=payload.get("version", "unknown"),
                   stages=payload["stages"])


class _Run:
    """One run_pipeline invocation: config, paths, and cached objects."""

    def __init__(self, config: SimulationConfig, out_dir, member_seed=None):
        self.config = config
        self.out = os.fspath(out_dir)
        self.hash = config_hash(config)
        self.member_seed = (config.run.seeds[0] if member_seed is None
                            else int(member_seed))
        # single-member stages model one disorder draw at the configured
        # roughness; the sweep stage owns the full (rms, seed) grid
        self.rms = config.roughness.rms
        self.rms_index = 0
        self.cache: dict = {}

    def path(self, name: str) -> str:
        return os.path.join(self.out, name)

    def meta(self, extra: dict | None = None) -> dict:
        base = {"config_hash": self.hash}
        if extra:
            base.update(extra)
        return base

    # ---- staleness -------------------------------------------------

    def stale(self, stage: str) -> bool:
        for name in _ARTIFACTS[stage]:
            p = self.path(name)
            if not os.path.exists(p):
                return True
            try:
                parser = sio._Parser(p)
            except ArtifactFormatError:
                return True
            if parser.meta.get("config_hash") != self.hash:
                return True
            if stage == "relax":
                art, _ = sio.read_atoms(p)
                if art.relaxed_positions is None:
                    return True
        return False

    # ---- shared object loading ------------------------------------

    def surfaces(self):
        if "surfaces" not in self.cache:
            bottom, _ = sio.read_surface(self.path("surface_bottom.dat"))
            top, _ = sio.read_surface(self.path("surface_top.dat"))
            self.cache["surfaces"] = (bottom, top)
        return self.cache["surfaces"]

    def lattice(self) -> AtomLattice:
        if "lattice" not in self.cache:
            art, _ = sio.read_atoms(self.path("atoms.dat"))
            lat = build_lattice(art.n_cells_x, art.n_cells_y, art.n_layers,
                                a0=art.a0,
                                in_plane_strain=art.in_plane_strain)
            lat.species[:] = art.species
            self.cache["lattice"] = lat
            self.cache["atoms_artifact"] = art
        return self.cache["lattice"]

    def relaxed_displacements(self) -> np.ndarray:
        lat = self.lattice()
        art = self.cache["atoms_artifact"]
        if art.relaxed_positions is None:
            art, _ = sio.read_atoms(self.path("atoms.dat"))
            self.cache["atoms_artifact"] = art
        if art.relaxed_positions is None:
            raise ArtifactFormatError(
                "atoms.dat carries no relaxed positions; run the relax "
                "stage first")
        return art.relaxed_positions - lat.positions()

    def units(self) -> UnitPotentials:
        if "units" not in self.cache:
            fields = []
            spacing = None
            for e in ELECTRODES:
                phi, h, _ = sio.read_potential(self.path(f"potential_{e}.dat"))
                fields.append(phi)
                if spacing is not None and h != spacing:
                    raise ArtifactFormatError(
                        "potential files disagree on grid spacing")
                spacing = h
            nx, ny, nz = fields[0].shape
            # sampling-only grid: the permittivity map is not stored in
            # POTGRID files and is not needed to interpolate
            grid = Grid3D(h=spacing, nx=nx, ny=ny, nz=nz,
                          eps_cells=np.zeros((nx, ny - 1, nz - 1)))
            self.cache["units"] = UnitPotentials(
                geom=self.config.geometry, grid=grid,
                fields=np.stack(fields))
        return self.cache["units"]

    # ---- stages ----------------------------------------------------

    def run_gen_surface(self):
        shape = slab_shape(self.config.geometry,
                           self.config.vff.substrate_strain)
        lat = build_lattice(*shape,
                            in_plane_strain=self.config.vff.substrate_strain)
        bottom, top, alloy_seed = member_surfaces(
            self.config, lat, self.rms, self.rms_index, self.member_seed)
        sio.write_surface(self.path("surface_bottom.dat"), bottom,
                          self.meta({"interface": "bottom",
                                     "member_seed": self.member_seed}))
        sio.write_surface(self.path("surface_top.dat"), top,
                          self.meta({"interface": "top",
                                     "member_seed": self.member_seed}))
        self.cache["surfaces"] = (bottom, top)
        self.cache["alloy_seed"] = alloy_seed

    def run_build_lattice(self):
        shape = slab_shape(self.config.geometry,
                           self.config.vff.substrate_strain)
        lat = build_lattice(*shape,
                            in_plane_strain=self.config.vff.substrate_strain)
        bottom, top = self.surfaces()
        if "alloy_seed" not in self.cache:
            _, _, self.cache["alloy_seed"] = derive_member_seeds(
                self.member_seed, self.rms_index)
        wb, wt = well_interval_angstrom(self.config.geometry)
        assign_species(lat, wb, wt, self.config.alloy,
                       bottom_surface=bottom, top_surface=top,
                       seed=self.cache["alloy_seed"])
        sio.write_atoms(self.path("atoms.dat"), lat,
                        self.meta({"member_seed": self.member_seed}))
        self.cache["lattice"] = lat
        self.cache["atoms_artifact"], _ = sio.read_atoms(
            self.path("atoms.dat"))

    def run_relax(self):
        lat = self.lattice()
        result = relax_lattice(lat, self.config.vff)
        relaxed = lat.positions() + result.displacements
        sio.append_relaxed(self.path("atoms.dat"), relaxed, result.energy,
                           result.grad_max, result.n_iterations)
        # recompute through the stored absolute positions so a later run
        # that reloads the artifact sees bit-identical displacements
        self.cache["displacements"] = relaxed - lat.positions()
        art = self.cache.get("atoms_artifact")
        if art is not None:
            art.relaxed_positions = relaxed

    def run_solve_potential(self):
        units = solve_unit_potentials(self.config.geometry,
                                      self.config.alloy.ge_fraction)
        for k, e in enumerate(ELECTRODES):
            sio.write_potential(self.path(f"potential_{e}.dat"),
                                units.fields[k], units.grid.h,
                                self.meta({"electrode": e}))
        self.cache["units"] = units

    def run_trace(self):
        lat = self.lattice()
        if "displacements" in self.cache:
            u = self.cache["displacements"]
        else:
            u = self.relaxed_displacements()
        strain = bond_strain_per_atom(lat, u, self.config.vff)
        trace = trace_shuttle(lat, self.units(), self.config.drive,
                              self.config.valley, self.config.alloy,
                              self.config.run.num_steps, bond_strain=strain)
        sio.write_trace(self.path("trace.dat"), trace,
                        self.meta({"member_seed": self.member_seed}))
        self.cache["trace"] = trace

    def run_dynamics(self):
        if "trace" in self.cache:
            trace = self.cache["trace"]
        else:
            trace, _ = sio.read_trace(self.path("trace.dat"))
        itr = interpolate_trace(trace, self.config.geometry.cell_length)
        speeds = np.asarray(self.config.run.speeds, float)
        res = speed_sweep(itr, speeds)
        single = EnsembleResult(
            rms_values=np.array([self.rms]), speeds=speeds,
            infidelity_mean=res.infidelity[None, :],
            infidelity_std=np.full((1, speeds.size), np.nan),
            n=np.ones((1, speeds.size), dtype=np.int64))
        sio.write_sweep(self.path("dynamics.dat"), single,
                        self.meta({"member_seed": self.member_seed}))

    def run_sweep(self):
        result = run_ensemble(self.config, units=self.units())
        sio.write_sweep(self.path("sweep.dat"), result, self.meta())

    STAGE_FUNCS = {
        "gen-surface": run_gen_surface,
        "build-lattice": run_build_lattice,
        "relax": run_relax,
        "solve-potential": run_solve_potential,
        "trace": run_trace,
        "dynamics": run_dynamics,
        "sweep": run_sweep,
    }


def _closure(stages) -> list[str]:
    if stages is None:
        wanted = set(STAGE_ORDER)
    else:
        wanted = set()
        queue = list(stages)
        while queue:
            s = queue.pop()
            if s not in STAGE_DEPS:
                raise ConfigError(
                    f"unknown stage {s!r}; stages are "
                    + ", ".join(STAGE_ORDER))
            if s not in wanted:
                wanted.add(s)
                queue.extend(STAGE_DEPS[s])
    return [s for s in STAGE_ORDER if s in wanted]


def run_pipeline(config: SimulationConfig, out_dir, stages=None,
                 seed: int | None = None, progress=None) -> RunManifest:
    """Execute the requested stages (plus stale dependencies) in order.

    Artifacts land in out_dir; the returned manifest records per-stage
    artifacts, seeds, timing, and whether the stage was skipped as
    up-to-date.  A stage failure aborts its dependents but still writes
    the manifest with the partial state.
    """
    out = os.fspath(out_dir)
    os.makedirs(out, exist_ok=True)
    run = _Run(config, out, member_seed=seed)
    plan = _closure(stages)
    top_seed, bottom_seed, alloy_seed = derive_member_seeds(
        run.member_seed, run.rms_index)
    seeds_record = {"member_seed": run.member_seed,
                    "surface_top": top_seed,
                    "surface_bottom": bottom_seed,
                    "alloy": alloy_seed}

    manifest = RunManifest(config_hash=run.hash, version=__version__,
                           stages={})
    for pos, stage in enumerate(plan):
        record = {"artifacts": list(_ARTIFACTS[stage]), "skipped": False}
        if stage == "sweep":
            record["seeds"] = {"members": list(config.run.seeds),
                               "rms_list": list(config.run.rms_list)}
        else:
            record["seeds"] = seeds_record
        if not run.stale(stage):
            record["skipped"] = True
            manifest.stages[stage] = record
            if progress is not None:
                progress(f"{stage}: up to date")
            continue
        if progress is not None:
            progress(f"{stage}: running")
        t0 = time.perf_counter()
        try:
            _Run.STAGE_FUNCS[stage](run)
        except Exception as exc:
            record["error"] = f"{type(exc).__name__}: {exc}"
            record["elapsed_s"] = round(time.perf_counter() - t0, 3)
            manifest.stages[stage] = record
            for later in plan[pos + 1:]:
                manifest.stages[later] = {
                    "artifacts": list(_ARTIFACTS[later]), "skipped": True,
                    "error": f"upstream stage {stage} failed"}
            manifest.save(os.path.join(out, "manifest.json"))
            raise
        record["elapsed_s"] = round(time.perf_counter() - t0, 3)
        manifest.stages[stage] = record
        if progress is not None:
            progress(f"{stage}: done in {record['elapsed_s']:g} s")
    manifest.save(os.path.join(out, "manifest.json"))
    return manifest
