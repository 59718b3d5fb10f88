"""Tests for glx-lab."""

# CONSTANTS
EXIT_OK = 0
EXIT_FAIL = 1
EXIT_VALIDATION = 2
EXIT_RUNTIME = 3

DIM_ONE = 1
DIM_TWO = 2
DIM_THREE = 3

SMALL_POINTS = 31
MEDIUM_POINTS = 63

FLOAT_RTOL = 1e-12
