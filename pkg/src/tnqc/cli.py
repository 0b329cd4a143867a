"""``tnqc`` command line: encode, verify, sweep, evolution, heat, power, tomo.

Settings come from an optional JSON/YAML file (``--config``) and are
overridden by flags. The summary of each run goes to stdout as JSON; on
failure a JSON error object goes to stderr and the exit code is nonzero.
"""

from __future__ import annotations

import argparse
import json
import logging
import sys
import warnings
from typing import Sequence

from . import __version__
from .apps import COMMANDS, ConfigError, ExperimentConfig, load_config
from .tt import DenseGuardError

_FLAGS = [
    # (flag, config key, type, help)
    ("--matrix", "matrix", str, "target matrix name"),
    ("--qubits", "qubits", int, "number of system qubits n"),
    ("--rank", "rank", int, "unitary MPO rank R (power of two)"),
    ("--iters", "iters", int, "ADAM iterations"),
    ("--seed", "seed", int, "random seed"),
    ("--out", "out", str, "output directory"),
    ("--tol", "tol", float, "rounding / compression tolerance"),
    ("--dt", "dt", float, "time step"),
    ("--order", "order", int, "Trotter order"),
    ("--layers", "layers", int, "VQC layers"),
    ("--shots", "shots", int, "measurement shots"),
    ("--steps", "steps", int, "iterations of the heat / power demos"),
    ("--lr", "learning_rate", float, "ADAM learning rate"),
    ("--polish", "polish", int, "L-BFGS polish iterations after ADAM"),
    ("--preset", "preset", str, "fit preset: balanced or accurate"),
    ("--artifacts", "artifacts", str, "directory with encode artifacts (verify)"),
    ("--initial", "initial", str, "heat initial condition: sin, zero, gauss, step"),
    ("--function", "function", str, "power-method vector: ramp, delta, smooth"),
    ("--index", "index", int, "delta position for --function delta"),
]


def _list(kind):
    return lambda s: [kind(v) for v in s.split(",") if v]


_LIST_FLAGS = [
    ("--sweep-qubits", "sweep_qubits", _list(int)),
    ("--sweep-ranks", "sweep_ranks", _list(int)),
    ("--dt-list", "dt_list", _list(float)),
    ("--fit-ranks", "fit_ranks", _list(int)),
    ("--records", "records", _list(int)),
    ("--seeds", "seeds", _list(int)),
]


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="tnqc", description=__doc__.splitlines()[0])
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    parser.add_argument("-v", "--verbose", action="store_true", help="log progress to stderr")
    sub = parser.add_subparsers(dest="command", required=True)
    for name in COMMANDS:
        p = sub.add_parser(name, help=COMMANDS[name].__doc__.splitlines()[0] if COMMANDS[name].__doc__ else name)
        p.add_argument("--config", help="JSON or YAML config file")
        for flag, key, kind, help_ in _FLAGS:
            p.add_argument(flag, dest=key, type=kind, default=None, help=help_)
        for flag, key, kind in _LIST_FLAGS:
            p.add_argument(flag, dest=key, type=kind, default=None, help="comma-separated list")
        p.add_argument("--circuit", dest="circuit", action="store_const", const=True, default=None,
                       help="route heat/power steps through the simulated circuit (n <= 6)")
    return parser


def resolve(args: argparse.Namespace) -> ExperimentConfig:
    data = load_config(args.config) if args.config else {}
    data["command"] = args.command
    keys = [k for _, k, _, _ in _FLAGS] + [k for _, k, _ in _LIST_FLAGS] + ["circuit"]
    for k in keys:
        v = getattr(args, k)
        if v is not None:
            data[k] = v
    return ExperimentConfig.from_mapping(data)


def main(argv: Sequence[str] | None = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(message)s")
    try:
        with warnings.catch_warnings(record=True) as caught:
            warnings.simplefilter("always")
            cfg = resolve(args)
            summary = COMMANDS[cfg.command](cfg)
        for w in caught:
            print(json.dumps({"warning": str(w.message)}), file=sys.stderr)
    except (ConfigError, DenseGuardError, ValueError, FileNotFoundError) as e:
        print(json.dumps({"error": type(e).__name__, "message": str(e)}), file=sys.stderr)
        return 2
    except Exception as e:  # noqa: BLE001
        print(json.dumps({"error": type(e).__name__, "message": str(e)}), file=sys.stderr)
        return 1
    print(json.dumps(summary, indent=1, default=str))
    return 0


if __name__ == "__main__":
    sys.exit(main())
