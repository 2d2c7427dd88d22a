"""Averaging for mixed fast-slow systems driven by fractional and standard Brownian motion."""

__version__ = "0.1.0"
