"""Cryptominer detection from GPU telemetry and kernel profiles."""

__version__ = "0.1.0"
