"""
CLI Module

Command-line entry point wiring phantoms, geometries, transforms, reconstruction
and diagnostics into reproducible runs.
"""

from .app import run

__all__ = ["run"]
