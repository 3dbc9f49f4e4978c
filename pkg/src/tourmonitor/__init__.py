"""Territorial tourism monitoring from archived accommodation-platform pages."""

__version__ = "0.1.0"
