"""Weak oscillation conditions versus BMO: dyadic-simple functions, oscillation
functionals, the Bellman minorant G_t and the counterexamples around the
limit condition on the gauge."""

from .bellman import bellman_oracle, g_eval, lower_bound_A, omega_contains, slope_m
from .dyadic import DyadicCube, DyadicSimpleFunction, haar, read_dsf, write_dsf
from .functionals import bmo_dyadic, bmo_grid, k_h_dyadic, k_h_grid, rising_sun
from .gauges import OscillationGauge, gauge_log, gauge_power, parse_gauge, regularize

__version__ = "0.1.0"

__all__ = [
    "DyadicCube",
    "DyadicSimpleFunction",
    "OscillationGauge",
    "bellman_oracle",
    "bmo_dyadic",
    "bmo_grid",
    "g_eval",
    "gauge_log",
    "gauge_power",
    "haar",
    "k_h_dyadic",
    "k_h_grid",
    "lower_bound_A",
    "omega_contains",
    "parse_gauge",
    "read_dsf",
    "regularize",
    "rising_sun",
    "slope_m",
    "write_dsf",
]
