"""Continuum Gibbs point-process simulation and verification lab."""

from .core import available_backends, backend_name, set_backend

__all__ = ["available_backends", "backend_name", "set_backend"]
__version__ = "0.1.0"
