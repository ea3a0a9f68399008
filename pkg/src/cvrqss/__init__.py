"""Gaussian simulation and certification of continuous-variable secret sharing with intermediate (ramp) access."""

__version__ = "0.1.0"
