"""Handler for ``verify``: run a built-in recipe and report PASS/FAIL."""

from __future__ import annotations

from pathlib import Path
from typing import Any

from glx_lab.commands.params import require
from glx_lab.recipes import RecipeOptions, run_recipe
from glx_lab.utils.serialization import write_json

VERIFY_JSON = "verify.json"


def handle_verify(arguments: dict[str, Any]) -> dict[str, Any]:
    options = RecipeOptions(
        seed=int(arguments.get("seed") or 0),
        workers=arguments.get("workers"),
        quick=bool(arguments.get("quick", False)),
    )
    result = run_recipe(require(arguments, "recipe"), options)
    data = result.to_dict()
    out = arguments.get("out")
    if out is not None:
        write_json(data, Path(out) / f"{result.recipe}-{VERIFY_JSON}")
    return data


def render_verify(result: dict[str, Any]) -> str:
    lines = [f"recipe {result['recipe']}"]
    for criterion in result["criteria"]:
        verdict = "PASS" if criterion["passed"] else "FAIL"
        line = f"{verdict} {criterion['name']}: value={criterion['value']!r}"
        if criterion["threshold"] is not None:
            line += f" threshold={criterion['threshold']!r}"
        if criterion["detail"]:
            line += f" ({criterion['detail']})"
        lines.append(line)
    lines.append("PASS" if result["passed"] else "FAIL")
    return "\n".join(lines)
