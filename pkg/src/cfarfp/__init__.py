"""Adaptive radar detectors on the CFAR feature plane."""

__version__ = "0.1.0"
