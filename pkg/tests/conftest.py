"""Shared pytest fixtures for the glx-lab test suite."""

from __future__ import annotations

import logging
from collections.abc import Callable, Iterator
from pathlib import Path
from typing import Any

import pytest

from glx_lab import config as cfg
from glx_lab import observability
from glx_lab.numerics.field import ComplexField, Grid, gaussian_bump
from glx_lab.numerics.params import PhysicalParams
from tests import SMALL_POINTS


@pytest.fixture
def reset_observability_logger(monkeypatch) -> Iterator[logging.Logger]:
    """Reset observability logger state and return the logger for assertions."""
    logger = logging.getLogger(observability.LOGGER_NAME)
    existing_handlers = list(logger.handlers)
    for handler in existing_handlers:
        logger.removeHandler(handler)
    monkeypatch.setitem(observability._logger_state, "initialized", False)  # noqa: SLF001
    yield logger
    for handler in list(logger.handlers):
        logger.removeHandler(handler)
    for handler in existing_handlers:
        logger.addHandler(handler)


@pytest.fixture
def fresh_metrics_registry(monkeypatch) -> observability.MetricsRegistry:
    """Provide an isolated metrics registry for observability tests."""
    registry = observability.MetricsRegistry()
    monkeypatch.setattr(observability, "metrics", registry)
    return registry


@pytest.fixture
def grid_1d() -> Grid:
    return Grid(dim=1, half_width=10.0, points_per_axis=SMALL_POINTS)


@pytest.fixture
def gaussian_1d(grid_1d) -> ComplexField:
    return gaussian_bump(grid_1d, amplitude=1.0, width=1.0)


@pytest.fixture
def unit_params() -> PhysicalParams:
    """theta = 0, m = 0, a = 1: the plain saturated damping."""
    return PhysicalParams(theta=0.0, m=0.0, a=1.0 + 0j)


@pytest.fixture
def make_config() -> Callable[..., cfg.RunConfig]:
    """Factory for small, fast run configs; sections are merged over defaults."""

    def _factory(**sections: Any) -> cfg.RunConfig:
        data: dict[str, Any] = {
            "seed": 0,
            "params": {"theta": 0.0, "m": 0.0, "a": [1.0, 0.0]},
            "grid": {"dim": 1, "half_width": 10.0, "points_per_axis": SMALL_POINTS},
            "scheme": {"dt": 0.01, "t_end": 0.1},
            "initial": {"kind": "gaussian", "width": 1.0},
            "diagnostics": {"gn_family_size": 8},
        }
        seed = sections.pop("seed", None)
        if seed is not None:
            data["seed"] = seed
        for name, values in sections.items():
            data[name] = {**data.get(name, {}), **values}
        return cfg.parse_config(data)

    return _factory


@pytest.fixture
def write_config(tmp_path) -> Callable[[str], Path]:
    """Write TOML text to ``run.toml`` under tmp_path and return the path."""

    def _write(text: str, name: str = "run.toml") -> Path:
        path = tmp_path / name
        path.write_text(text, encoding="utf-8")
        return path

    return _write


SMALL_RUN_TOML = """
seed = 3

[params]
theta = 0.0
m = 0.0
a = [1.0, 0.0]

[grid]
dim = 1
half_width = 10.0
points_per_axis = 31

[scheme]
dt = 0.01
t_end = 0.1

[initial]
kind = "gaussian"
width = 1.0

[diagnostics]
gn_family_size = 8
"""


@pytest.fixture
def small_run_toml() -> str:
    return SMALL_RUN_TOML
