"""Command-line interface.

    cqedsim <scenario> --device <file> --out <dir> [--seed N]
            [--filter-f3db MHZ] [--no-plots] [grid options]
    cqedsim validate <file>
    cqedsim --version

Exit codes: 0 success, 1 configuration error, 2 numeric/model error,
3 I/O error.
"""

from __future__ import annotations

import argparse
import sys

from . import __version__
from .config import validate_config
from .errors import ConfigError, NumericError
from .runner import SCENARIOS, ScenarioConfig, _linspace, run_scenario

CONFIG_FORMAT_VERSION = "device-config v1"


def _build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="cqedsim",
        description="Pulse-level simulator and calibration toolkit for a "
                    "flux-tunable transmon in a 3D cavity")
    parser.add_argument("--version", action="version",
                        version=f"cqedsim {__version__} ({CONFIG_FORMAT_VERSION})")
    sub = parser.add_subparsers(dest="command", required=True)

    val = sub.add_parser("validate", help="validate a device file")
    val.add_argument("device_file")

    for name in SCENARIOS:
        sc = sub.add_parser(name, help=f"run the {name} scenario")
        sc.add_argument("--device", required=True)
        sc.add_argument("--out", required=True)
        sc.add_argument("--seed", type=int, default=0)
        sc.add_argument("--no-plots", action="store_true")
        sc.add_argument("--tol", type=float, default=1e-7,
                        help="integrator local tolerance")
        sc.add_argument("--filter-f3db", type=float, default=None,
                        help="flux-line bandwidth in MHz (chevron)")
        sc.add_argument("--filter-order", type=int, default=1)
        sc.add_argument("--flux-grid", default=None, metavar="A:B:N")
        sc.add_argument("--freq-grid", default=None, metavar="A:B:N")
        sc.add_argument("--detuning-grid", default=None, metavar="A:B:N",
                        help="detuning grid in MHz (chevron)")
        sc.add_argument("--tau-grid", default=None, metavar="A:B:N",
                        help="interaction-time grid in ns (chevron)")
        sc.add_argument("--tau-d-grid", default=None, metavar="A:B:N",
                        help="pump-control delay grid in us (resurgence)")
        sc.add_argument("--nbar-grid", default=None, metavar="A:B:N")
        sc.add_argument("--kerr-detunings", default=None,
                        help="comma-separated detunings in GHz (kerr sweep)")
    return parser


def _config_from_args(args: argparse.Namespace) -> ScenarioConfig:
    grids = {
        "flux_grid": args.flux_grid,
        "freq_grid": args.freq_grid,
        "detuning_grid_mhz": args.detuning_grid,
        "tau_int_grid_ns": args.tau_grid,
        "tau_d_grid_us": args.tau_d_grid,
        "nbar_grid": args.nbar_grid,
    }
    parsed = {k: (_linspace(v) if v is not None else None)
              for k, v in grids.items()}
    kerr = None
    if args.kerr_detunings:
        import numpy as np

        kerr = np.array([float(x) for x in args.kerr_detunings.split(",")])
    return ScenarioConfig(scenario=args.command, device_path=args.device,
                          out_dir=args.out, seed=args.seed,
                          no_plots=args.no_plots, tol=args.tol,
                          filter_f3db=args.filter_f3db,
                          filter_order=args.filter_order,
                          kerr_detunings_ghz=kerr, **parsed)


def main(argv=None) -> int:
    args = _build_parser().parse_args(argv)
    try:
        if args.command == "validate":
            report = validate_config(args.device_file)
            print(report.render())
            return 0 if report.ok else 1
        manifest = run_scenario(_config_from_args(args))
        print(f"{args.command}: wrote {len(manifest.files)} files to "
              f"{manifest.run_dir} (config {manifest.config_hash})")
        return 0
    except ConfigError as exc:
        print(f"configuration error: {exc}", file=sys.stderr)
        return 1
    except NumericError as exc:
        print(f"numeric error: {exc}", file=sys.stderr)
        return 2
    except OSError as exc:
        print(f"i/o error: {exc}", file=sys.stderr)
        return 3


if __name__ == "__main__":
    sys.exit(main())
