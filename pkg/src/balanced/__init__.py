"""Balanced power-series coefficients and dominating-function calculus."""

__version__ = "0.1.0"
