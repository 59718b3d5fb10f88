"""Numerical core: parameters, fields, time stepping, forcing, the scalar
comparison ODE, GN constant estimates and diagnostics."""
