"""Deterministic artifact writers.

CSV uses '.' as decimal separator and 17 significant digits so every float
round-trips exactly; JSON has sorted keys, no NaN/inf literals and complex
numbers as ``[re, im]`` pairs. Identical inputs give identical bytes.
"""

from __future__ import annotations

import json
import math
from enum import Enum
from pathlib import Path
from typing import TYPE_CHECKING, Any

import numpy as np

if TYPE_CHECKING:
    import pandas as pd
    import xarray as xr

CSV_FLOAT_FORMAT = "%.17g"


def to_jsonable(value: Any) -> Any:  # noqa: PLR0911
    """Recursively convert ``value`` into plain JSON types.

    Non-finite floats become ``None``.
    """
    match value:
        case None | bool() | str():
            return value
        case np.bool_():
            return bool(value)
        case Enum():
            return value.value
        case int() | np.integer():
            return int(value)
        case float() | np.floating():
            f = float(value)
            return f if math.isfinite(f) else None
        case complex() | np.complexfloating():
            c = complex(value)
            return [to_jsonable(c.real), to_jsonable(c.imag)]
        case np.ndarray():
            return [to_jsonable(v) for v in value.tolist()]
        case Path():
            return str(value)
        case dict():
            return {str(k): to_jsonable(v) for k, v in value.items()}
        case list() | tuple():
            return [to_jsonable(v) for v in value]
        case _:
            if hasattr(value, "to_dict"):
                return to_jsonable(value.to_dict())
            msg = f"cannot serialize {type(value).__name__} to JSON"
            raise TypeError(msg)


def dumps_json(value: Any) -> str:
    return (
        json.dumps(to_jsonable(value), sort_keys=True, indent=2, allow_nan=False)
        + "\n"
    )


def write_json(value: Any, path: Path) -> Path:
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(dumps_json(value), encoding="utf-8")
    return path


def frame_to_csv(frame: pd.DataFrame) -> str:
    return frame.to_csv(index=False, float_format=CSV_FLOAT_FORMAT, lineterminator="\n")


def write_csv(frame: pd.DataFrame, path: Path) -> Path:
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(frame_to_csv(frame), encoding="utf-8")
    return path


def write_netcdf(dataset: xr.Dataset, path: Path) -> Path:
    """NetCDF3 through the scipy backend; complex variables must be split first."""
    path.parent.mkdir(parents=True, exist_ok=True)
    dataset.to_netcdf(path, engine="scipy")
    return path
