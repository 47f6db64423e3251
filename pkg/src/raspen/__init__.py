"""Nonlinear restricted additive Schwarz solvers and preconditioners."""

__version__ = "0.1.0"
