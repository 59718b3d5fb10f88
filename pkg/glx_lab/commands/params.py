"""Argument preprocessing for command handlers.

The CLI hands every value over as a string; handlers called from Python may
pass real lists and numbers. Both shapes are normalised here so handlers only
see proper types.
"""

from __future__ import annotations

import json
import logging
from typing import Any

logger = logging.getLogger(__name__)

_LIST_ARGUMENTS = ("values",)
_FLOAT_ARGUMENTS = (
    "m",
    "alpha",
    "delta",
    "z1",
    "z2",
    "t0",
    "t_end",
    "dt_out",
    "half_width",
    "horizon",
    "theta",
)
_INT_ARGUMENTS = ("seed", "workers", "dim", "points", "family_size", "pieces")


def parse_float_list(raw: Any) -> list[float]:
    """``"0,0.25,0.5"``, ``"[0, 0.25]"`` or a sequence -> list of floats."""
    if raw is None:
        return []
    if isinstance(raw, str):
        text = raw.strip()
        if not text:
            return []
        if text.startswith("["):
            try:
                parsed = json.loads(text)
            except json.JSONDecodeError as exc:
                msg = f"cannot parse value list {raw!r}: {exc}"
                raise ValueError(msg) from exc
            return [float(x) for x in parsed]
        return [float(part) for part in text.split(",") if part.strip()]
    return [float(x) for x in raw]


def preprocess_arguments(arguments: dict[str, Any] | None) -> dict[str, Any]:
    """Coerce known arguments to their types; unknown keys pass through."""
    if not arguments:
        return {}
    processed = dict(arguments)
    for key in _LIST_ARGUMENTS:
        if key in processed and processed[key] is not None:
            processed[key] = parse_float_list(processed[key])
            logger.debug("normalized %s: %s", key, processed[key])
    for key in _FLOAT_ARGUMENTS:
        value = processed.get(key)
        if isinstance(value, str):
            try:
                processed[key] = float(value)
            except ValueError as exc:
                msg = f"argument {key!r} must be a number, got {value!r}"
                raise ValueError(msg) from exc
    for key in _INT_ARGUMENTS:
        value = processed.get(key)
        if isinstance(value, str):
            try:
                processed[key] = int(value)
            except ValueError as exc:
                msg = f"argument {key!r} must be an integer, got {value!r}"
                raise ValueError(msg) from exc
    return processed


def require(arguments: dict[str, Any], key: str) -> Any:
    """Value of a mandatory argument."""
    value = arguments.get(key)
    if value is None:
        msg = f"missing required argument {key!r}"
        raise ValueError(msg)
    return value
