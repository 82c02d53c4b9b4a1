"""Command line entry point.

One subcommand per pipeline stage plus ``run`` (everything), and
``describe`` for inspecting artifact files.  Exit codes: 0 success,
2 configuration errors, 3 numerical failures, 4 artifact or file
system errors.
"""

from __future__ import annotations

import argparse
import dataclasses
import sys

from .device import SimulationConfig, load_config
from .errors import ArtifactFormatError, ConfigError
from .pipeline import run_pipeline

EXIT_CONFIG = 2
EXIT_NUMERIC = 3
EXIT_ARTIFACT = 4


def _parse_list(text: str, cast):
    toks = text.replace(",", " ").split()
    if not toks:
        raise ConfigError("expected a non-empty list of values")
    try:
        return tuple(cast(t) for t in toks)
    except ValueError as exc:
        raise ConfigError(f"bad list value in {text!r}: {exc}") from exc


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="shuttle-sim",
        description="Conveyor-mode electron shuttling simulator: rough "
                    "interfaces, atomistic valley physics, and transfer "
                    "fidelity.")
    sub = parser.add_subparsers(dest="command", required=True)

    def add_stage(name: str, help_text: str):
        p = sub.add_parser(name, help=help_text)
        p.add_argument("--config", metavar="FILE",
                       help="configuration file (defaults apply if omitted)")
        p.add_argument("--out", default=".", metavar="DIR",
                       help="output directory (default: current directory)")
        p.add_argument("--seed", type=int, default=None,
                       help="ensemble member seed for single-member stages")
        return p

    add_stage("gen-surface", "draw the two rough interface realizations")
    add_stage("build-lattice", "build the atomistic slab with alloy disorder")
    add_stage("relax", "relax the slab under the valence force field")
    add_stage("solve-potential", "solve the unit gate potentials")
    add_stage("trace", "valley splitting and phase over one drive period")
    dyn = add_stage("dynamics", "transfer infidelity for one disorder draw")
    dyn.add_argument("--speeds", metavar="LIST",
                     help="comma or space separated speeds in m/s")
    swp = add_stage("sweep", "ensemble infidelity over roughness and speed")
    swp.add_argument("--speeds", metavar="LIST",
                     help="comma or space separated speeds in m/s")
    swp.add_argument("--rms-list", metavar="LIST",
                     help="comma or space separated roughness values in A")
    swp.add_argument("--seeds", metavar="LIST",
                     help="comma or space separated member seeds")
    runp = add_stage("run", "run every stage in order")
    runp.add_argument("--speeds", metavar="LIST")
    runp.add_argument("--rms-list", metavar="LIST")
    runp.add_argument("--seeds", metavar="LIST")

    desc = sub.add_parser("describe", help="summarize an artifact file")
    desc.add_argument("path", help="artifact file to describe")
    return parser


def _load(args) -> SimulationConfig:
    config = load_config(args.config) if args.config else SimulationConfig()
    changes = {}
    if getattr(args, "speeds", None):
        changes["speeds"] = _parse_list(args.speeds, float)
    if getattr(args, "rms_list", None):
        changes["rms_list"] = _parse_list(args.rms_list, float)
    if getattr(args, "seeds", None):
        changes["seeds"] = _parse_list(args.seeds, int)
    if changes:
        run = dataclasses.replace(config.run, **changes)
        config = dataclasses.replace(config, run=run)
    return config


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        if args.command == "describe":
            from .io import describe_artifact
            print(describe_artifact(args.path))
            return 0
        config = _load(args)
        stages = None if args.command == "run" else [args.command]
        run_pipeline(config, args.out, stages=stages, seed=args.seed,
                     progress=lambda msg: print(msg, flush=True))
        return 0
    except ArtifactFormatError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_ARTIFACT
    except ValueError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except RuntimeError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_NUMERIC
    except OSError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_ARTIFACT


if __name__ == "__main__":
    sys.exit(main())
