"""Command-line entry point.

    dimerlab <subcommand> [--config PATH] [--set key=value ...] --out DIR

Every subcommand writes a bundle (CSV files and ``summary.json``) to
``--out``; ``validate`` checks existing bundles.  Keys of the form
``tol.<name>`` set tolerances.  Exit status: 0 success, 2 physics-level
rejection (for example an island too small for the particle number, or a
failed acceptance check), 1 any other error.
"""

from __future__ import annotations

import argparse
import json
import logging
import sys

from .experiments import (
    PHYSICS_ERRORS,
    PRESETS,
    ExperimentError,
    ExperimentSpec,
    run_experiment,
    validate_bundle,
)
from .model import parse_value, read_config

EXIT_OK, EXIT_ERROR, EXIT_REJECTED = 0, 1, 2

#: Subcommand -> task name and defaults applied below the user's settings.
SUBCOMMANDS = {
    "evolve": ("return_probability", {"periods": 16, "samples_per_period": 8, "phi0": 0.0}),
    "floquet": ("floquet", {}),
    "sweep": ("sweep", {"axis": "mu", "points": 101}),
    "husimi": ("husimi", {"source": "coherent", "phi0": 0.0, "husimi_resolution": 201}),
    "poincare": ("poincare", {"n_seeds": 48, "periods": 400, "scan_resolution": 20}),
    "orbit": ("orbit", {"k": 1, "guess_phi": 0.0}),
    "tube": ("tube", {"k": 1, "center_phi": 0.0}),
    "requantize": ("requantize", {"k": 1, "center_phi": 0.0, "quantum_numbers": "0"}),
}


class _Parser(argparse.ArgumentParser):
    # usage errors are ordinary errors, not physics rejections
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_ERROR, f"{self.prog}: error: {message}\n")


def _parse_sets(items) -> dict:
    out = {}
    for item in items or []:
        if "=" not in item:
            raise ValueError(f"--set expects key=value, got {item!r}")
        key, value = (s.strip() for s in item.split("=", 1))
        out[key] = parse_value(value)
    return out


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="dimerlab", description="Driven Bose-Hubbard dimer laboratory.")
    parser.add_argument("-v", "--verbose", action="store_true", help="log progress to stderr")
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)
    for name in list(SUBCOMMANDS) + ["experiment"]:
        p = sub.add_parser(name, help=f"run the {name} task" if name != "experiment"
                           else "run a figure preset")
        p.add_argument("--config", help="key = value parameter file")
        p.add_argument("--set", action="append", default=[], metavar="KEY=VALUE",
                       help="override one setting (repeatable)")
        p.add_argument("--out", required=True, help="bundle directory")
        if name == "experiment":
            p.add_argument("--preset", choices=sorted(PRESETS), help="figure preset")
    v = sub.add_parser("validate", help="check bundles against the acceptance thresholds")
    v.add_argument("bundles", nargs="*", help="bundle directories")
    v.add_argument("--out", help="bundle directory (alternative to the positional form)")
    v.add_argument("--json", action="store_true", help="print machine-readable reports")
    return parser


def _settings(args) -> tuple[dict, dict]:
    cfg = read_config(args.config) if args.config else {}
    cfg.update(_parse_sets(args.set))
    tols = {k.split(".", 1)[1]: v for k, v in cfg.items() if k.startswith("tol.")}
    cfg = {k: v for k, v in cfg.items() if not k.startswith("tol.")}
    return cfg, tols


def _run(args) -> int:
    cfg, tols = _settings(args)
    if args.command == "experiment":
        preset = args.preset or cfg.pop("preset", None)
        if preset is None:
            raise ValueError("experiment needs --preset or a 'preset' setting")
        cfg.pop("preset", None)
        spec = ExperimentSpec(preset, cfg, args.out, tols)
    else:
        task, defaults = SUBCOMMANDS[args.command]
        if args.command == "evolve" and cfg.get("observable") == "fock":
            task = "fock_occupation"
        cfg.pop("observable", None)
        spec = ExperimentSpec("custom", {**defaults, **cfg, "task": task}, args.out, tols)
    summary = run_experiment(spec)
    print(f"wrote {args.out} ({summary['task']}, config {summary['config_hash'][:12]}, "
          f"{summary['wall_time_s']:.1f} s)")
    return EXIT_OK


def _validate(args) -> int:
    bundles = list(args.bundles) + ([args.out] if args.out else [])
    if not bundles:
        raise ValueError("validate needs at least one bundle directory")
    status = EXIT_OK
    for b in bundles:
        report = validate_bundle(b)
        print(json.dumps(report.to_dict(), sort_keys=True) if args.json else report.summary())
        if report.structural:
            status = EXIT_ERROR
        elif not report.passed and status == EXIT_OK:
            status = EXIT_REJECTED
    return status


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        if args.command == "validate":
            return _validate(args)
        return _run(args)
    except ExperimentError as exc:
        print(f"dimerlab: {exc}", file=sys.stderr)
        return EXIT_REJECTED if isinstance(exc.cause, PHYSICS_ERRORS) else EXIT_ERROR
    except (OSError, KeyError, ValueError) as exc:
        print(f"dimerlab: error: {exc}", file=sys.stderr)
        return EXIT_ERROR


if __name__ == "__main__":
    sys.exit(main())
