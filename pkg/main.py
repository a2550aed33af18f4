"""
Ruelle - thermodynamic formalism toolkit for symbolic suspension flows

Entry point for the `ruelle` command.
"""

import argparse
import json
import logging
import sys
from pathlib import Path
from typing import Any, Optional, Sequence

from pydantic import ValidationError

from config import APP_NAME, APP_VERSION, THREADS_ENV_VAR
from engine.errors import ModelFileError, RuelleError


logger = logging.getLogger(__name__)

LOG_FORMAT = "%(asctime)s %(levelname)s %(name)s: %(message)s"

# Flags shared by every subcommand that are not command parameters
COMMON_KEYS = ("model", "potential", "roof", "seed", "out", "threads")
CAP_KEYS = ("word_cap", "block_state_cap", "orbit_cap", "exact_horizon")
CLI_ONLY_KEYS = ("verbose", "quiet", "config", "command")


def _float_list(text: str) -> list[float]:
    return [float(x) for x in text.split(",") if x.strip()]


def _int_list(text: str) -> list[int]:
    return [int(x) for x in text.split(",") if x.strip()]


def _common_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False, argument_default=argparse.SUPPRESS)
    common.add_argument("--config", type=Path,
                        help="ExperimentConfig JSON file; explicit flags override its values")
    common.add_argument("--model", type=Path, help="JSON model file")
    common.add_argument("--potential", help="potential function name (default: f)")
    common.add_argument("--roof", help="roof function name (default: tau)")
    common.add_argument("--seed", type=int, help="RNG seed recorded in every output (default: 0)")
    common.add_argument("--out", type=Path, help="output file (.csv or .json)")
    common.add_argument("--threads", type=int,
                        help=f"worker threads (default: ${THREADS_ENV_VAR} or 1)")
    common.add_argument("--word-cap", type=int, dest="word_cap", help="admissible word cap")
    common.add_argument("--block-state-cap", type=int, dest="block_state_cap",
                        help="transfer-matrix state cap")
    common.add_argument("--orbit-cap", type=int, dest="orbit_cap", help="periodic point cap")
    common.add_argument("--exact-horizon", type=int, dest="exact_horizon",
                        help="largest exact Borel-Cantelli horizon")
    verbosity = common.add_mutually_exclusive_group()
    verbosity.add_argument("-v", "--verbose", action="store_true", help="debug logging")
    verbosity.add_argument("-q", "--quiet", action="store_true", help="warnings only")
    return common


def build_parser() -> argparse.ArgumentParser:
    """The `ruelle` parser with one subparser per command."""
    parser = argparse.ArgumentParser(
        prog=APP_NAME,
        description="Transfer operators, Gibbs measures, zeta functions and mixing "
                    "diagnostics for subshifts of finite type with a roof function.",
    )
    parser.add_argument("--version", action="version", version=f"{APP_NAME} {APP_VERSION}")
    common = _common_parser()
    sub = parser.add_subparsers(dest="command", required=True, metavar="COMMAND")

    def add(name: str, help_text: str) -> argparse.ArgumentParser:
        return sub.add_parser(name, parents=[common], help=help_text, description=help_text,
                              argument_default=argparse.SUPPRESS)

    thermo = add("thermo", "Pressure, P_f, Gibbs measure and Gibbs-inequality report")
    thermo.add_argument("--solve-pf", action=argparse.BooleanOptionalAction, dest="solve_pf",
                        help="solve Pr(f - s tau) = 0 for P_f (default: on)")
    thermo.add_argument("--report", type=Path, dest="out", help="alias of --out")
    thermo.add_argument("--gibbs-depth", type=int, dest="gibbs_depth",
                        help="cylinder length of the report (default: 12)")
    thermo.add_argument("--truncation", type=_int_list,
                        help="comma-separated truncation depths for the pressure report")
    thermo.add_argument("--lipschitz", type=_float_list,
                        help="comma-separated offsets a for the |lambda_a - 1|/|a| check")

    scan = add("twist-scan", "Spectral radii and m_star of twisted operators over a b grid")
    scan.add_argument("--a", type=float, help="real offset a (default: 0)")
    scan.add_argument("--b-min", type=float, dest="b_min", help="smallest |b| (default: 1)")
    scan.add_argument("--b-max", type=float, dest="b_max", help="largest |b| (default: 128)")
    scan.add_argument("--b", type=_float_list, dest="b_values",
                      help="explicit comma-separated b values (overrides the power-of-2 grid)")
    scan.add_argument("--symmetric", action="store_true", help="also scan -b")
    scan.add_argument("--rho", type=float, help="contraction rate (default: 0.9)")
    scan.add_argument("--m-cap", type=int, dest="m_cap", help="largest power (default: 400)")
    scan.add_argument("--basis-depth", type=int, dest="basis_depth",
                      help="depth of the basis test functions")
    scan.add_argument("--random-functions", type=int, dest="random_functions",
                      help="random test functions per b")
    scan.add_argument("--lasota-yorke", action="store_true", dest="lasota_yorke",
                      help="also measure Lasota-Yorke constants")
    scan.add_argument("--ly-m-max", type=int, dest="ly_m_max", help="largest m (default: 20)")
    scan.add_argument("--ly-b", type=_float_list, dest="ly_b",
                      help="comma-separated b values (default: 1,4,16)")
    scan.add_argument("--gelfand", action="store_true", help="add the Gelfand profile column")

    orbits = add("orbits", "Prime orbit counting against li(e^{h_T lambda})")
    orbits.add_argument("--lambda-max", type=float, dest="lambda_max", help="default: 12")
    orbits.add_argument("--steps", type=int, help="grid points in (0, lambda_max] (default: 12)")

    zeta = add("zeta", "Truncated Ruelle zeta function at s")
    zeta.add_argument("--s", help="complex argument, e.g. 1.0+0.5i (default: 1.0+0.0i)")
    zeta.add_argument("--nmax", type=int, dest="n_max", help="largest period (default: 30)")
    zeta.add_argument("--check-orbits", action="store_true", dest="check_orbits",
                      help="compare the trace log-sum with explicit orbit enumeration")

    dolg = add("dolgopyat", "Contraction-operator lab at one frequency b")
    dolg.add_argument("--b", type=float, help="frequency, |b| >= e^2 (default: 16)")
    dolg.add_argument("--N", type=int, help="block length (default: 4)")
    dolg.add_argument("--delta1", type=float, help="separation threshold (default: 0.1)")
    dolg.add_argument("--eps3", type=float, help="angle fixing mu_0 (default: pi/2)")
    dolg.add_argument("--E", type=float, help="cone constant (default: from T0)")
    dolg.add_argument("--max-colength", type=int, dest="max_colength",
                      help="largest sub-cylinder co-length (default: 4)")
    dolg.add_argument("--steps", type=int, help="N_J iterations (default: ceil(k log|b|))")
    dolg.add_argument("--borel-cantelli-m", type=int, dest="borel_cantelli_m",
                      help="also report S_M statistics for the family cylinders")

    corr = add("correlate", "Monte Carlo correlation function of the suspension flow")
    corr.add_argument("--A", type=Path, help="observable file A")
    corr.add_argument("--B", type=Path, help="observable file B")
    corr.add_argument("--t", help="time grid start:stop:step or a list (default: 0:20:0.5)")
    corr.add_argument("--n", type=int, help="samples (default: 1000000)")
    corr.add_argument("--chunk-size", type=int, dest="chunk_size", help="samples per RNG stream")
    corr.add_argument("--base-lags", type=int, dest="base_lags",
                      help="also report exact base-map correlations up to this lag")

    selftest = add("selftest", "Run the acceptance checks")
    selftest.add_argument("--full", action="store_true", help="full depths and sample sizes")
    return parser


def build_config(args: argparse.Namespace) -> dict[str, Any]:
    """Merge the optional --config file with the explicit flags into ExperimentConfig data."""
    given = vars(args)
    data: dict[str, Any] = {}
    config_path: Optional[Path] = given.get("config")
    if config_path is not None:
        if not config_path.is_file():
            raise ModelFileError(str(config_path), "file not found")
        try:
            data = json.loads(config_path.read_text(encoding="utf-8"))
        except json.JSONDecodeError as e:
            raise ModelFileError(str(config_path), f"invalid JSON at line {e.lineno}: {e.msg}") from e

    params = dict(data.get("params", {}))
    if params.get("command", args.command) != args.command:
        logger.warning("config file command '%s' replaced by '%s'", params["command"], args.command)
        params = {}
    params["command"] = args.command
    caps = dict(data.get("caps", {}))
    for key, value in given.items():
        if key in CLI_ONLY_KEYS:
            continue
        if key in COMMON_KEYS:
            data[key] = value
        elif key in CAP_KEYS:
            caps[key] = value
        else:
            params[key] = value
    data["params"] = params
    if caps:
        data["caps"] = caps
    return data


def configure_logging(verbose: bool, quiet: bool) -> None:
    level = logging.DEBUG if verbose else logging.WARNING if quiet else logging.INFO
    logging.basicConfig(level=level, format=LOG_FORMAT, stream=sys.stderr)


def main(argv: Optional[Sequence[str]] = None) -> int:
    """Main entry point for ruelle."""
    args = build_parser().parse_args(argv)
    configure_logging(getattr(args, "verbose", False), getattr(args, "quiet", False))

    from app import RuelleApp, exit_code_for, EXIT_INPUT
    from models.schemas import ExperimentConfig
    from services.model_loader import format_validation_error

    try:
        config = ExperimentConfig.model_validate(build_config(args))
        outcome = RuelleApp().run(config)
    except ValidationError as e:
        print(f"{APP_NAME}: invalid configuration: {format_validation_error(e)}", file=sys.stderr)
        return EXIT_INPUT
    except (RuelleError, ValueError, RuntimeError) as e:
        print(f"{APP_NAME}: {e}", file=sys.stderr)
        return exit_code_for(e)

    for key, value in outcome.summary.items():
        print(f"{key}: {value}")
    for path in outcome.artifacts:
        print(f"wrote {path}")
    return outcome.status


if __name__ == "__main__":
    sys.exit(main())
