"""Tests for the logging, metrics and command instrumentation layer."""

from __future__ import annotations

import json
import logging

import pytest

from glx_lab import observability
from glx_lab.config import ConfigError
from glx_lab.numerics.dynamics import DampingIntegrationError
from glx_lab.numerics.params import AdmissibilityError
from glx_lab.observability import (
    LATENCY_BUCKETS_MS,
    classify_error,
    instrument_command_execution,
    new_correlation_id,
)

NUM_IDS = 20


def test_correlation_id_uniqueness():
    ids = {new_correlation_id() for _ in range(NUM_IDS)}
    assert len(ids) == NUM_IDS


def test_success_logs_json_to_stderr_only(
    monkeypatch, capsys, reset_observability_logger, fresh_metrics_registry
):
    monkeypatch.setenv("GLX_LOG_LEVEL", "INFO")
    monkeypatch.setenv("GLX_LOG_FORMAT", "json")
    observability.init_logging()
    assert reset_observability_logger.level == logging.INFO

    result = instrument_command_execution("simulate", lambda: {"ok": True})

    assert result.value == {"ok": True}
    assert result.error_type is None
    captured = capsys.readouterr()
    assert captured.out == ""
    lines = captured.err.strip().splitlines()
    parsed = json.loads(lines[-1])
    assert parsed["event"] == "command_complete"
    assert parsed["command"] == "simulate"
    assert parsed["correlation_id"] == result.correlation_id
    snap = fresh_metrics_registry.snapshot()
    assert snap["command_invocations_total.simulate"] == 1
    assert snap["command_success_total.simulate"] == 1
    latency = fresh_metrics_registry.latency_snapshot()
    assert latency["command_latency_ms.simulate"]["count"] == 1


def test_error_is_classified_logged_and_reraised(
    monkeypatch, capsys, reset_observability_logger, fresh_metrics_registry
):
    monkeypatch.setenv("GLX_LOG_FORMAT", "json")
    observability.init_logging()
    assert reset_observability_logger.handlers

    def failing() -> None:
        raise DampingIntegrationError(0, 1j, 0.5, 1e-16)

    with pytest.raises(DampingIntegrationError):
        instrument_command_execution("simulate", failing)

    lines = [line for line in capsys.readouterr().err.splitlines() if line.strip()]
    events = [json.loads(line) for line in lines]
    errors = [e for e in events if e.get("event") == "command_error"]
    assert errors
    assert errors[0]["error_type"] == "SolverError"
    snap = fresh_metrics_registry.snapshot()
    assert snap["command_errors_total.simulate.SolverError"] == 1
    assert snap["command_failure_total.simulate"] == 1
    assert "command_success_total.simulate" not in snap
    latency = fresh_metrics_registry.latency_snapshot()
    assert latency["command_latency_ms.simulate"]["count"] == 1


def test_text_format_is_default(monkeypatch, capsys, reset_observability_logger):
    monkeypatch.delenv("GLX_LOG_FORMAT", raising=False)
    monkeypatch.setenv("GLX_LOG_LEVEL", "INFO")
    observability.init_logging()
    reset_observability_logger.info("hello")
    assert capsys.readouterr().err.strip() == "INFO glx_lab: hello"


def test_invalid_level_falls_back_to_info(monkeypatch, reset_observability_logger):
    monkeypatch.setenv("GLX_LOG_LEVEL", "LOUD")
    observability.init_logging()
    assert reset_observability_logger.level == logging.INFO


def test_init_logging_is_idempotent(reset_observability_logger):
    observability.init_logging()
    handler = reset_observability_logger.handlers[0]
    observability.init_logging()
    assert reset_observability_logger.handlers == [handler]
    observability.init_logging(force=True)
    assert reset_observability_logger.handlers[0] is not handler


def test_metrics_can_be_disabled(monkeypatch, fresh_metrics_registry):
    monkeypatch.setenv("GLX_ENABLE_METRICS", "false")
    observability.count("steps_total", 5)
    observability.gauge("last_mass", 1.0)
    assert fresh_metrics_registry.snapshot() == {}
    assert fresh_metrics_registry.gauge_snapshot() == {}


def test_latency_buckets(fresh_metrics_registry):
    for value in (1.0, 3.0, 70000.0):
        fresh_metrics_registry.observe_latency("x", value)
    snap = fresh_metrics_registry.latency_snapshot()["x"]
    assert snap["count"] == 3  # noqa: PLR2004
    assert snap["min"] == 1.0
    assert snap["max"] == 70000.0  # noqa: PLR2004
    assert snap["buckets"]["1"] == 1
    assert snap["buckets"]["5"] == 1
    assert snap["buckets"]["60000"] == 0
    assert snap["buckets"]["overflow"] == 1
    assert list(snap["buckets"])[:-1] == [str(b) for b in LATENCY_BUCKETS_MS]


def test_counters_and_gauges(fresh_metrics_registry):
    fresh_metrics_registry.inc("a")
    fresh_metrics_registry.inc("a", 2)
    observability.gauge("g", 2)
    assert observability.metrics_snapshot() == {"a": 3}
    assert fresh_metrics_registry.gauge_snapshot() == {"g": 2.0}


def test_trace_span_logs_when_enabled(
    monkeypatch, capsys, reset_observability_logger
):
    monkeypatch.setenv("GLX_ENABLE_TRACE", "1")
    monkeypatch.setenv("GLX_LOG_LEVEL", "DEBUG")
    monkeypatch.setenv("GLX_LOG_FORMAT", "json")
    observability.init_logging()
    with observability.trace_span("helmholtz", step=3):
        pass
    record = json.loads(capsys.readouterr().err.strip().splitlines()[-1])
    assert record["span"] == "helmholtz"
    assert record["step"] == 3  # noqa: PLR2004
    assert reset_observability_logger.level == logging.DEBUG


@pytest.mark.parametrize(
    ("exc", "expected"),
    [
        (ValueError("bad"), "ValidationError"),
        (AdmissibilityError(["outside cone"]), "ValidationError"),
        (ConfigError("bad toml"), "ValidationError"),
        (FileNotFoundError("run.toml"), "ValidationError"),
        (ZeroDivisionError(), "SolverError"),
        (RuntimeError("diverged"), "SolverError"),
        (OSError("disk"), "UnknownError"),
    ],
)
def test_classify_error(exc, expected):
    assert classify_error(exc) == expected
