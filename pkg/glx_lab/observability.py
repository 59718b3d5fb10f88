"""Observability primitives.

This module provides:
* Structured logging initialization (stderr only)
* Correlation ID generation per command
* Minimal in-process metrics counters, latency histograms and gauges
* Timing utilities and a lightweight trace span abstraction

Nothing here writes to stdout (command output goes there) and nothing here
ends up in run artifacts, so artifacts stay bit-identical across runs.
"""

from __future__ import annotations

import bisect
import json
import logging
import os
import sys
import time
import uuid
from contextlib import contextmanager
from dataclasses import dataclass, field
from threading import RLock
from typing import TYPE_CHECKING, Any

if TYPE_CHECKING:  # pragma: no cover - type checking only
    from collections.abc import Callable, Generator

LOG_LEVEL_ENV = "GLX_LOG_LEVEL"
LOG_FORMAT_ENV = "GLX_LOG_FORMAT"  # "text" | "json"
ENABLE_METRICS_ENV = "GLX_ENABLE_METRICS"
ENABLE_TRACE_ENV = "GLX_ENABLE_TRACE"

LOGGER_NAME = "glx_lab"

_logger_state = {"initialized": False}
_init_lock = RLock()


def _get_bool(env: str, default: bool) -> bool:
    val = os.getenv(env)
    if val is None:
        return default
    return val.lower() in {"1", "true", "yes", "on"}


def init_logging(*, force: bool = False) -> None:
    """Configure the ``glx_lab`` logger once (``force`` re-applies env settings)."""
    if _logger_state["initialized"] and not force:
        return
    with _init_lock:
        if _logger_state["initialized"] and not force:  # pragma: no cover
            return
        level_name = os.getenv(LOG_LEVEL_ENV, "WARNING").upper()
        level = getattr(logging, level_name, None)
        if not isinstance(level, int):
            level = logging.INFO
        log_format = os.getenv(LOG_FORMAT_ENV, "text").lower()
        handler = logging.StreamHandler(stream=sys.stderr)
        if log_format == "json":
            handler.setFormatter(JSONLogFormatter())
        else:
            handler.setFormatter(
                logging.Formatter("%(levelname)s %(name)s: %(message)s"),
            )
        logger = logging.getLogger(LOGGER_NAME)
        logger.setLevel(level)
        logger.handlers = [handler]
        logger.propagate = False
        _logger_state["initialized"] = True


_LOG_RECORD_BASE_KEYS = {
    "name",
    "msg",
    "args",
    "levelname",
    "levelno",
    "pathname",
    "filename",
    "module",
    "exc_info",
    "exc_text",
    "stack_info",
    "lineno",
    "funcName",
    "created",
    "msecs",
    "relativeCreated",
    "thread",
    "threadName",
    "processName",
    "process",
    "taskName",
}

_KNOWN_EXTRAS = (
    "event",
    "command",
    "duration_ms",
    "error_type",
    "correlation_id",
    "run_id",
    "step",
    "sim_time",
)


class JSONLogFormatter(logging.Formatter):
    """Serialize log records as single-line JSON objects."""

    def format(self, record: logging.LogRecord) -> str:  # type: ignore[override]
        base: dict[str, Any] = {
            "timestamp": time.strftime(
                "%Y-%m-%dT%H:%M:%SZ",
                time.gmtime(record.created),
            ),
            "level": record.levelname,
            "logger": record.name,
            "message": record.getMessage(),
        }
        for attr in _KNOWN_EXTRAS:
            if hasattr(record, attr):
                base[attr] = getattr(record, attr)
        if record.exc_info:
            base["exc_info"] = self.formatException(record.exc_info)
        for key, value in record.__dict__.items():
            if key in base or key in _LOG_RECORD_BASE_KEYS or key.startswith("_"):
                continue
            base[key] = value
        return json.dumps(base, separators=(",", ":"), default=str)


# ---------------------- Metrics Registry ---------------------- #

# Upper bounds in ms; simulations run from milliseconds to minutes.
LATENCY_BUCKETS_MS = (1, 5, 10, 50, 100, 500, 1000, 5000, 10000, 30000, 60000)


@dataclass
class _LatencyHistogram:
    counts: list[int] = field(
        default_factory=lambda: [0] * (len(LATENCY_BUCKETS_MS) + 1)
    )
    total: float = 0.0
    low: float = float("inf")
    high: float = float("-inf")

    def observe(self, value_ms: float) -> None:
        self.total += value_ms
        self.low = min(self.low, value_ms)
        self.high = max(self.high, value_ms)
        # last slot is the overflow
        self.counts[bisect.bisect_left(LATENCY_BUCKETS_MS, value_ms)] += 1

    def to_dict(self) -> dict[str, Any]:
        pairs = zip(LATENCY_BUCKETS_MS, self.counts, strict=False)
        buckets = {str(upper): n for upper, n in pairs}
        buckets["overflow"] = self.counts[-1]
        return {
            "count": sum(self.counts),
            "sum": self.total,
            "min": self.low,
            "max": self.high,
            "buckets": buckets,
        }


class MetricsRegistry:
    """In-process counters, latency histograms and gauges (thread-safe)."""

    def __init__(self) -> None:
        self._lock = RLock()
        self._counters: dict[str, int] = {}
        self._histograms: dict[str, _LatencyHistogram] = {}
        self._gauges: dict[str, float] = {}

    def inc(self, name: str, amount: int = 1) -> None:
        if not _get_bool(ENABLE_METRICS_ENV, True):
            return
        with self._lock:
            self._counters[name] = self._counters.get(name, 0) + amount

    def observe_latency(self, name: str, value_ms: float) -> None:
        if not _get_bool(ENABLE_METRICS_ENV, True):
            return
        with self._lock:
            self._histograms.setdefault(name, _LatencyHistogram()).observe(value_ms)

    def set_gauge(self, name: str, value: float) -> None:
        if not _get_bool(ENABLE_METRICS_ENV, True):
            return
        with self._lock:
            self._gauges[name] = float(value)

    def snapshot(self) -> dict[str, int]:
        with self._lock:
            return dict(self._counters)

    def latency_snapshot(self) -> dict[str, dict[str, Any]]:
        with self._lock:
            return {name: h.to_dict() for name, h in self._histograms.items()}

    def gauge_snapshot(self) -> dict[str, float]:
        with self._lock:
            return dict(self._gauges)


metrics = MetricsRegistry()


def metric_name(*parts: str) -> str:
    return ".".join(parts)


def count(name: str, amount: int = 1) -> None:
    """Increment a counter on the current global registry."""
    metrics.inc(name, amount)


def gauge(name: str, value: float) -> None:
    metrics.set_gauge(name, value)


# ---------------------- Tracing ---------------------- #


@contextmanager
def trace_span(name: str, **attrs: Any) -> Generator[None, None, None]:
    """Log the span duration at DEBUG when ``GLX_ENABLE_TRACE`` is set."""
    enabled = _get_bool(ENABLE_TRACE_ENV, False)
    t0 = time.perf_counter()
    try:
        yield
    finally:
        if enabled:
            duration_ms = (time.perf_counter() - t0) * 1000.0
            logging.getLogger(LOGGER_NAME).debug(
                "trace_span",
                extra={
                    "event": "trace_span",
                    "span": name,
                    "duration_ms": round(duration_ms, 2),
                    **attrs,
                },
            )


# ---------------------- Correlation IDs ---------------------- #


def new_correlation_id() -> str:
    return str(uuid.uuid4())


@dataclass
class CommandExecutionResult:
    """Container for instrumented command execution output."""

    value: Any
    correlation_id: str
    duration_ms: float
    error_type: str | None = None


def classify_error(exc: BaseException) -> str:
    """Map an exception onto the coarse categories used in metrics and logs.

    Input problems (every ``ValueError`` subclass, including admissibility and
    config errors, plus missing files) are ``ValidationError``; numerical
    failures (``ArithmeticError`` and ``RuntimeError`` subclasses) are
    ``SolverError``.
    """
    match exc:
        case ValueError() | FileNotFoundError() | KeyError():
            return "ValidationError"
        case ArithmeticError() | RuntimeError():
            return "SolverError"
        case _:
            return "UnknownError"


def instrument_command_execution(
    command: str,
    func: Callable[..., Any],
    *args: Any,
    **kwargs: Any,
) -> CommandExecutionResult:
    """Execute a command handler with logging, timing, metrics and correlation id."""
    init_logging()
    correlation_id = new_correlation_id()
    logger = logging.getLogger(LOGGER_NAME)
    metrics.inc(metric_name("command_invocations_total", command))
    metrics.inc(metric_name("command_invocations_total", "_all"))
    t0 = time.perf_counter()
    error_type: str | None = None
    duration_ms = 0.0
    try:
        with trace_span(f"command.{command}"):
            result = func(*args, **kwargs)
        duration_ms = (time.perf_counter() - t0) * 1000.0
        return CommandExecutionResult(
            value=result,
            correlation_id=correlation_id,
            duration_ms=duration_ms,
        )
    except Exception as exc:
        error_type = classify_error(exc)
        metrics.inc(metric_name("command_errors_total", command, error_type))
        duration_ms = (time.perf_counter() - t0) * 1000.0
        logger.warning(
            "command_error",
            extra={
                "event": "command_error",
                "command": command,
                "error_type": error_type,
                "correlation_id": correlation_id,
                "duration_ms": round(duration_ms, 2),
            },
        )
        raise
    finally:
        if duration_ms == 0.0:
            duration_ms = (time.perf_counter() - t0) * 1000.0
        metrics.observe_latency(metric_name("command_latency_ms", command), duration_ms)
        metrics.set_gauge(
            metric_name("command_last_duration_ms", command),
            duration_ms,
        )
        if error_type is None:
            metrics.inc(metric_name("command_success_total", command))
            logger.info(
                "command_complete",
                extra={
                    "event": "command_complete",
                    "command": command,
                    "duration_ms": round(duration_ms, 2),
                    "correlation_id": correlation_id,
                },
            )
        else:
            metrics.inc(metric_name("command_failure_total", command))


def metrics_snapshot() -> dict[str, int]:
    """Return a copy of current counter values."""
    return metrics.snapshot()


def metrics_latency_snapshot() -> dict[str, dict[str, Any]]:
    return metrics.latency_snapshot()
