"""Command dispatch separated from the CLI module.

Handlers take a dict of arguments and return a JSON-ready dict. Dispatch
normalises the arguments, runs the handler on a worker thread under the
instrumented wrapper, and hands back the handler's value together with the
correlation id and timing.
"""

from __future__ import annotations

import asyncio
import logging
from collections.abc import Callable
from typing import Any, NoReturn

from glx_lab.commands.check_admissible import handle_check_admissible
from glx_lab.commands.estimate_gn import handle_estimate_gn
from glx_lab.commands.params import preprocess_arguments
from glx_lab.commands.simulate import handle_simulate
from glx_lab.commands.solve_ode import handle_solve_ode
from glx_lab.commands.sweep import handle_sweep
from glx_lab.commands.verify import handle_verify
from glx_lab.observability import CommandExecutionResult, instrument_command_execution

logger = logging.getLogger(__name__)

Handler = Callable[[dict[str, Any]], dict[str, Any]]


_COMMAND_HANDLERS: dict[str, Handler] = {
    "simulate": handle_simulate,
    "sweep": handle_sweep,
    "verify": handle_verify,
    "estimate-gn": handle_estimate_gn,
    "solve-ode": handle_solve_ode,
    "check-admissible": handle_check_admissible,
}


def available_commands() -> list[str]:
    return list(_COMMAND_HANDLERS)


def _raise_unknown_command(name: str) -> NoReturn:
    msg = f"Unknown command: {name}. Available commands: {available_commands()}"
    raise ValueError(msg)


async def execute_command(
    command: str,
    arguments: dict[str, Any] | None = None,
    handler: Handler | None = None,
) -> CommandExecutionResult:
    """Execute a command handler (``handler`` overrides the registry for tests).

    The handler runs in a thread so the event loop stays free; simulations
    are CPU-bound.
    """
    arguments = preprocess_arguments(arguments)
    if handler is None:
        handler = _COMMAND_HANDLERS.get(command)
        if handler is None:
            _raise_unknown_command(command)
    logger.debug("dispatching %s", command, extra={"command": command})
    return await asyncio.to_thread(
        instrument_command_execution,
        command,
        handler,
        arguments,
    )


def run_command(
    command: str,
    arguments: dict[str, Any] | None = None,
    handler: Handler | None = None,
) -> CommandExecutionResult:
    """Synchronous entry point used by the CLI."""
    return asyncio.run(execute_command(command, arguments, handler))
