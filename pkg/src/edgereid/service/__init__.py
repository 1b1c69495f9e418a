"""HTTP facade over the gallery store, for operators and non-TCP clients."""

from .app import create_app

__all__ = ["create_app"]
