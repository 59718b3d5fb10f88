"""Command-line entry point: ``glx-lab`` or ``python -m glx_lab``.

Exit codes: 0 success, 1 a verification criterion failed, 2 invalid input
(config, parameters, arguments), 3 runtime failure of a solver.
"""

from __future__ import annotations

import argparse
import logging
import sys
from typing import Any

from glx_lab import __version__
from glx_lab.commands.execution import available_commands, run_command
from glx_lab.commands.verify import render_verify
from glx_lab.observability import LOGGER_NAME, classify_error, init_logging
from glx_lab.recipes import RECIPE_ALIASES, RECIPES
from glx_lab.utils.serialization import dumps_json

EXIT_OK = 0
EXIT_FAIL = 1
EXIT_VALIDATION = 2
EXIT_RUNTIME = 3

logger = logging.getLogger(LOGGER_NAME)


def _add_common(parser: argparse.ArgumentParser, *, config: bool) -> None:
    if config:
        parser.add_argument("--config", required=True, help="TOML run config")
    parser.add_argument("--out", help="output directory (default: GLX_OUTPUT_DIR)")
    parser.add_argument(
        "--workers", type=int, help="worker threads (default: GLX_WORKERS or 4)"
    )
    parser.add_argument("--seed", type=int, help="override the config seed")
    parser.add_argument(
        "--json", action="store_true", help="print the result as JSON"
    )


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="glx-lab",
        description="Numerical lab for damped complex Ginzburg-Landau equations",
    )
    parser.add_argument("--version", action="version", version=__version__)
    sub = parser.add_subparsers(dest="command", required=True)

    simulate = sub.add_parser("simulate", help="run one configured simulation")
    _add_common(simulate, config=True)

    sweep = sub.add_parser("sweep", help="one run per value of a parameter")
    _add_common(sweep, config=True)
    sweep.add_argument(
        "--axis", required=True, help="theta, m, a_modulus, mu, dt, h or L"
    )
    sweep.add_argument(
        "--values", required=True, help="comma-separated values or a JSON list"
    )

    verify = sub.add_parser("verify", help="run a built-in verification recipe")
    verify.add_argument("recipe", choices=sorted([*RECIPES, *RECIPE_ALIASES]))
    verify.add_argument(
        "--quick", action="store_true", help="smaller grids and samples"
    )
    _add_common(verify, config=False)

    gn = sub.add_parser("estimate-gn", help="estimate the GN constant on a grid")
    gn.add_argument("--m", required=True, type=float)
    gn.add_argument("--dim", type=int, default=1)
    gn.add_argument("--half-width", dest="half_width", type=float, default=10.0)
    gn.add_argument("--points", type=int, default=255)
    gn.add_argument("--family-size", dest="family_size", type=int, default=64)
    _add_common(gn, config=False)

    ode = sub.add_parser("solve-ode", help="solve z' + alpha z^delta = g twice")
    ode.add_argument("--alpha", required=True, type=float)
    ode.add_argument("--delta", required=True, type=float)
    ode.add_argument("--z1", required=True, type=float)
    ode.add_argument("--z2", type=float)
    ode.add_argument("--t0", type=float, default=0.0)
    ode.add_argument("--t-end", dest="t_end", required=True, type=float)
    ode.add_argument("--dt-out", dest="dt_out", type=float)
    ode.add_argument("--g1", help="number, 'scheduled' or 'random'")
    ode.add_argument("--g2", help="number, 'scheduled' or 'random' (default: g1)")
    ode.add_argument("--horizon", type=float, help="T0 of a scheduled source")
    ode.add_argument("--pieces", type=int, default=8)
    _add_common(ode, config=False)

    check = sub.add_parser("check-admissible", help="validate a run config")
    _add_common(check, config=True)
    return parser


def _arguments(namespace: argparse.Namespace) -> dict[str, Any]:
    skip = {"command", "json"}
    return {k: v for k, v in vars(namespace).items() if k not in skip}


def render(command: str, result: dict[str, Any], *, as_json: bool) -> str:
    if command == "verify" and not as_json:
        return render_verify(result)
    return dumps_json(result).rstrip("\n")


def exit_code_for(command: str, result: dict[str, Any]) -> int:
    if command == "verify" and not result.get("passed", False):
        return EXIT_FAIL
    if command == "check-admissible" and not result.get("ok", False):
        return EXIT_VALIDATION
    return EXIT_OK


def main(argv: list[str] | None = None) -> int:
    """Parse arguments, run the command and map the outcome to an exit code."""
    init_logging()
    parser = build_parser()
    namespace = parser.parse_args(argv)
    command = namespace.command
    if command not in available_commands():  # pragma: no cover - argparse guards
        parser.error(f"unknown command {command!r}")
    try:
        instrumented = run_command(command, _arguments(namespace))
    except Exception as exc:  # noqa: BLE001
        error_type = classify_error(exc)
        logger.debug("command %s failed", command, exc_info=True)
        print(f"glx-lab {command}: {exc}", file=sys.stderr)
        if error_type == "ValidationError":
            return EXIT_VALIDATION
        return EXIT_RUNTIME
    result = instrumented.value
    print(render(command, result, as_json=namespace.json))
    return exit_code_for(command, result)


if __name__ == "__main__":
    sys.exit(main())
