"""Volterra and soft neural-network equalizers with bitwise soft demapping."""

__version__ = "0.1.0"
