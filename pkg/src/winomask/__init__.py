"""Dependency-masked transformer encoder for Winograd schema resolution."""

__version__ = "0.1.0"
