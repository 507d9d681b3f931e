"""Chaos diagnostics for two coupled Kerr-nonlinear parametric oscillators."""

__version__ = "0.1.0"
