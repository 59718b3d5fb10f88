"""glx-lab: numerical lab for damped complex Ginzburg-Landau equations.

This package exposes the version and selected observability helpers for
tests.
"""

__version__ = "0.1.0"

from .observability import metrics_latency_snapshot, metrics_snapshot

__all__ = ["__version__", "metrics_latency_snapshot", "metrics_snapshot"]
