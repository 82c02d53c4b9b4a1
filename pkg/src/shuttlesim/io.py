"""On-disk artifact formats.

Every artifact is a plain text file: a format tag line, '# key value'
provenance comments (config hash, stage seeds), one numeric header line,
then the payload with 17-significant-digit floats so read/write round
trips are exact.  Files are written to a temporary name and renamed into
place so readers never see a partial file.
"""

from __future__ import annotations

import os
import tempfile
from dataclasses import dataclass

import numpy as np

from .errors import ArtifactFormatError
from .roughness import SurfaceField
from .valley import TRACE_FIELDS

FORMATS = ("ROUGHSURF", "POTGRID", "ATOMS", "VTRACE", "SWEEP")
_F = "%.17g"


def _fmt(values) -> str:
    return " ".join(_F % v for v in values)


def atomic_write(path, text: str) -> None:
    """Write text then rename into place; partial files never visible."""
    path = os.fspath(path)
    d = os.path.dirname(path) or "."
    fd, tmp = tempfile.mkstemp(dir=d, prefix=os.path.basename(path) + ".")
    try:
        with os.fdopen(fd, "w", encoding="utf-8") as fh:
            fh.write(text)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def _header_lines(tag: str, meta: dict | None) -> list[str]:
    lines = [f"# {tag} v1"]
    for key, value in (meta or {}).items():
        lines.append(f"# {key} {value}")
    return lines


class _Parser:
    """Line cursor over one artifact file."""

    def __init__(self, path):
        self.path = os.fspath(path)
        try:
            with open(self.path, "r", encoding="utf-8") as fh:
                self.lines = fh.read().splitlines()
        except OSError as exc:
            raise ArtifactFormatError(f"cannot read {path}: {exc}") from exc
        self.pos = 0
        self.meta: dict[str, str] = {}
        if not self.lines or not self.lines[0].startswith("# "):
            raise ArtifactFormatError(
                f"{path}: missing format tag; known formats: "
                + ", ".join(f"{f} v1" for f in FORMATS))
        tag = self.lines[0][2:].split()
        if len(tag) != 2 or tag[0] not in FORMATS or tag[1] != "v1":
            raise ArtifactFormatError(
                f"{path}: unrecognized format {self.lines[0][2:]!r}; known "
                "formats: " + ", ".join(f"{f} v1" for f in FORMATS))
        self.format = tag[0]
        self.pos = 1
        while self.pos < len(self.lines) \
                and self.lines[self.pos].startswith("#"):
            body = self.lines[self.pos][1:].strip()
            if body:
                key, _, value = body.partition(" ")
                self.meta[key] = value.strip()
            self.pos += 1

    def require(self, fmt: str) -> None:
        if self.format != fmt:
            raise ArtifactFormatError(
                f"{self.path}: expected {fmt} v1, found {self.format} v1")

    def next_line(self) -> str:
        if self.pos >= len(self.lines):
            raise ArtifactFormatError(f"{self.path}: truncated file")
        line = self.lines[self.pos]
        self.pos += 1
        return line

    def floats(self, line: str, count: int | None = None) -> np.ndarray:
        try:
            vals = np.array([float(tok) for tok in line.split()])
        except ValueError as exc:
            raise ArtifactFormatError(
                f"{self.path}: bad numeric line: {line[:60]!r}") from exc
        if count is not None and vals.size != count:
            raise ArtifactFormatError(
                f"{self.path}: expected {count} values, found {vals.size}")
        return vals

    def stream(self, total: int, what: str) -> np.ndarray:
        out = np.empty(total)
        have = 0
        while have < total:
            vals = self.floats(self.next_line())
            if have + vals.size > total:
                raise ArtifactFormatError(
                    f"{self.path}: more {what} values than the header "
                    "promises")
            out[have:have + vals.size] = vals
            have += vals.size
        return out


# ---------------------------------------------------------------------------
# ROUGHSURF v1

def write_surface(path, surface: SurfaceField, meta: dict | None = None):
    h = surface.heights
    lines = _header_lines("ROUGHSURF", meta)
    lines.append("%d %d %s %s %s %s %s %d" % (
        h.shape[0], h.shape[1], _F % surface.dx, _F % surface.dy,
        _F % surface.mean_height, _F % surface.rms, _F % surface.hurst,
        surface.seed))
    for row in h:
        lines.append(_fmt(row))
    atomic_write(path, "\n".join(lines) + "\n")


def read_surface(path) -> tuple[SurfaceField, dict]:
    p = _Parser(path)
    p.require("ROUGHSURF")
    head = p.floats(p.next_line(), 8)
    nx, ny = int(head[0]), int(head[1])
    rows = [p.floats(p.next_line(), ny) for _ in range(nx)]
    surf = SurfaceField(heights=np.vstack(rows), dx=head[2], dy=head[3],
                        mean_height=head[4], rms=head[5], hurst=head[6],
                        seed=int(head[7]))
    return surf, p.meta


# ---------------------------------------------------------------------------
# POTGRID v1

def write_potential(path, phi: np.ndarray, spacing: float,
                    meta: dict | None = None):
    nx, ny, nz = phi.shape
    lines = _header_lines("POTGRID", meta)
    lines.append("%d %d %d %s %s %s" % (
        nx, ny, nz, _F % spacing, _F % spacing, _F % spacing))
    flat = np.transpose(phi, (2, 1, 0)).ravel()  # z-major, then y, then x
    for k in range(0, flat.size, 6):
        lines.append(_fmt(flat[k:k + 6]))
    atomic_write(path, "\n".join(lines) + "\n")


def read_potential(path) -> tuple[np.ndarray, float, dict]:
    p = _Parser(path)
    p.require("POTGRID")
    head = p.floats(p.next_line(), 6)
    nx, ny, nz = (int(v) for v in head[:3])
    if not (head[3] == head[4] == head[5]):
        raise ArtifactFormatError(
            f"{path}: anisotropic spacing is not supported")
    flat = p.stream(nx * ny * nz, "node")
    phi = np.transpose(flat.reshape(nz, ny, nx), (2, 1, 0))
    return phi, float(head[3]), p.meta


# ---------------------------------------------------------------------------
# ATOMS v1

@dataclass
class AtomsArtifact:
    n_cells_x: int
    n_cells_y: int
    n_layers: int
    a0: float
    in_plane_strain: float
    box: tuple[float, float, float]     # Angstrom
    species: np.ndarray                 # (N,)
    layer: np.ndarray                   # (N,)
    column: np.ndarray                  # (N,) chain index
    positions: np.ndarray               # (N, 3) Angstrom, ideal
    relaxed_positions: np.ndarray | None = None
    relax_energy: float | None = None
    relax_grad_max: float | None = None
    relax_iterations: int | None = None

    @property
    def num_atoms(self) -> int:
        return self.species.shape[0]


def _atom_columns(lat) -> np.ndarray:
    col = np.empty(lat.num_atoms, dtype=np.int64)
    for c in range(lat.num_chains):
        col[lat.chain_atoms[c]] = c
    return col


def write_atoms(path, lat, meta: dict | None = None):
    pos = lat.positions()
    col = _atom_columns(lat)
    lines = _header_lines("ATOMS", meta)
    lines.append("%d %d %d %d %s %s %s %s %s" % (
        lat.num_atoms, lat.n_cells_x, lat.n_cells_y, lat.n_layers,
        _F % lat.a0, _F % lat.in_plane_strain, _F % lat.period_x,
        _F % lat.period_y, _F % ((lat.n_layers - 1) * lat.pitch_z)))
    for i in range(lat.num_atoms):
        lines.append("%d %d %s %s %s %d %d" % (
            i, lat.species[i], _F % pos[i, 0], _F % pos[i, 1],
            _F % pos[i, 2], lat.m[i], col[i]))
    atomic_write(path, "\n".join(lines) + "\n")


def append_relaxed(path, positions: np.ndarray, energy: float,
                   grad_max: float, n_iterations: int):
    """Attach relaxed coordinates to an existing structure file."""
    art, _ = read_atoms(path)     # validates the base section first
    if positions.shape != (art.num_atoms, 3):
        raise ArtifactFormatError(
            f"{path}: relaxed positions shape {positions.shape} does not "
            f"match {art.num_atoms} atoms")
    lines = ["RELAXED", "%s %s %d" % (_F % energy, _F % grad_max,
                                      n_iterations)]
    for i in range(positions.shape[0]):
        lines.append("%d %s %s %s" % (
            i, _F % positions[i, 0], _F % positions[i, 1],
            _F % positions[i, 2]))
    with open(path, "a", encoding="utf-8") as fh:
        fh.write("\n".join(lines) + "\n")


def read_atoms(path) -> tuple[AtomsArtifact, dict]:
    p = _Parser(path)
    p.require("ATOMS")
    head = p.floats(p.next_line(), 9)
    n = int(head[0])
    if n != 2 * int(head[1]) * int(head[2]) * int(head[3]):
        raise ArtifactFormatError(
            f"{path}: atom count {n} does not match the cell counts")
    species = np.empty(n, dtype=np.uint8)
    layer = np.empty(n, dtype=np.int64)
    column = np.empty(n, dtype=np.int64)
    pos = np.empty((n, 3))
    for _ in range(n):
        vals = p.floats(p.next_line(), 7)
        i = int(vals[0])
        if not 0 <= i < n:
            raise ArtifactFormatError(f"{path}: atom id {i} out of range")
        species[i] = int(vals[1])
        pos[i] = vals[2:5]
        layer[i] = int(vals[5])
        column[i] = int(vals[6])
    art = AtomsArtifact(
        n_cells_x=int(head[1]), n_cells_y=int(head[2]),
        n_layers=int(head[3]), a0=float(head[4]),
        in_plane_strain=float(head[5]),
        box=(float(head[6]), float(head[7]), float(head[8])),
        species=species, layer=layer, column=column, positions=pos)
    if p.pos < len(p.lines) and p.lines[p.pos].strip():
        if p.next_line().strip() != "RELAXED":
            raise ArtifactFormatError(
                f"{path}: unexpected content after the atom table")
        prov = p.floats(p.next_line(), 3)
        rel = np.empty((n, 3))
        for _ in range(n):
            vals = p.floats(p.next_line(), 4)
            rel[int(vals[0])] = vals[1:]
        art.relaxed_positions = rel
        art.relax_energy = float(prov[0])
        art.relax_grad_max = float(prov[1])
        art.relax_iterations = int(prov[2])
    return art, p.meta


# ---------------------------------------------------------------------------
# VTRACE v1

_TRACE_NAMES = [name for name, _ in TRACE_FIELDS]


def write_trace(path, trace: np.ndarray, meta: dict | None = None):
    if trace.dtype.names != tuple(_TRACE_NAMES):
        raise ArtifactFormatError(
            "trace array does not carry the expected fields "
            f"{_TRACE_NAMES}")
    lines = _header_lines("VTRACE", meta)
    lines.append("# columns " + " ".join(_TRACE_NAMES))
    lines.append("%d" % trace.shape[0])
    for row in trace:
        lines.append("%d " % row["p"]
                     + _fmt(row[name] for name in _TRACE_NAMES[1:]))
    atomic_write(path, "\n".join(lines) + "\n")


def read_trace(path) -> tuple[np.ndarray, dict]:
    p = _Parser(path)
    p.require("VTRACE")
    n = int(p.floats(p.next_line(), 1)[0])
    out = np.zeros(n, dtype=TRACE_FIELDS)
    for k in range(n):
        vals = p.floats(p.next_line(), len(_TRACE_NAMES))
        out[k] = tuple(vals)
    if not np.array_equal(out["p"], np.arange(n)):
        raise ArtifactFormatError(f"{path}: trace steps out of order")
    return out, p.meta


# ---------------------------------------------------------------------------
# SWEEP v1

def write_sweep(path, result, meta: dict | None = None):
    """Write an EnsembleResult as one line per (rms, speed) cell."""
    lines = _header_lines("SWEEP", meta)
    lines.append("# columns rms_A speed_mps infidelity_mean "
                 "infidelity_std n")
    for rms, seed, msg in getattr(result, "failures", []):
        lines.append("# failure rms=%g seed=%d %s" % (rms, seed, msg))
    lines.append("%d %d" % (result.rms_values.size, result.speeds.size))
    for i, rms in enumerate(result.rms_values):
        for j, v in enumerate(result.speeds):
            lines.append("%s %s %s %s %d" % (
                _F % rms, _F % v, _F % result.infidelity_mean[i, j],
                _F % result.infidelity_std[i, j], result.n[i, j]))
    atomic_write(path, "\n".join(lines) + "\n")


def read_sweep(path):
    from .dynamics import EnsembleResult
    p = _Parser(path)
    p.require("SWEEP")
    head = p.floats(p.next_line(), 2)
    nr, nv = int(head[0]), int(head[1])
    rms = np.empty(nr)
    speeds = np.empty(nv)
    mean = np.empty((nr, nv))
    std = np.empty((nr, nv))
    n = np.empty((nr, nv), dtype=np.int64)
    for i in range(nr):
        for j in range(nv):
            vals = p.floats(p.next_line(), 5)
            rms[i] = vals[0]
            speeds[j] = vals[1]
            mean[i, j], std[i, j], n[i, j] = vals[2], vals[3], int(vals[4])
    return EnsembleResult(rms_values=rms, speeds=speeds,
                          infidelity_mean=mean, infidelity_std=std,
                          n=n), p.meta


# ---------------------------------------------------------------------------
# describe

def describe_artifact(path) -> str:
    """One-paragraph human summary of any recognized artifact file."""
    p = _Parser(path)
    hash_note = ""
    if "config_hash" in p.meta:
        hash_note = f", config {p.meta['config_hash'][:12]}"
    if p.format == "ROUGHSURF":
        s, _ = read_surface(path)
        return (f"ROUGHSURF v1: {s.heights.shape[0]} x {s.heights.shape[1]} "
                f"grid, dx={s.dx:g} nm, dy={s.dy:g} nm, rms={s.rms:g} A, "
                f"H={s.hurst:g}, seed={s.seed}{hash_note}")
    if p.format == "POTGRID":
        phi, h, _ = read_potential(path)
        return (f"POTGRID v1: {phi.shape[0]} x {phi.shape[1]} x "
                f"{phi.shape[2]} nodes, spacing {h:g} nm, "
                f"range [{phi.min():.6g}, {phi.max():.6g}] V{hash_note}")
    if p.format == "ATOMS":
        art, _ = read_atoms(path)
        state = "relaxed" if art.relaxed_positions is not None \
            else "unrelaxed"
        return (f"ATOMS v1: {art.num_atoms} atoms, "
                f"{art.n_cells_x}x{art.n_cells_y}x{art.n_layers} cells, "
                f"a0={art.a0:g} A, {state}{hash_note}")
    if p.format == "VTRACE":
        tr, _ = read_trace(path)
        return (f"VTRACE v1: {tr.shape[0]} steps, "
                f"Ev {tr['Ev_ueV'].min():.6g}..{tr['Ev_ueV'].max():.6g} ueV"
                f"{hash_note}")
    res, _ = read_sweep(path)
    done = int(res.n.max(initial=0))
    return (f"SWEEP v1: {res.rms_values.size} rms x {res.speeds.size} "
            f"speeds, up to {done} members per cell{hash_note}")
