"""Colour-histogram person re-identification over human-parsing masks."""

__version__ = "0.1.0"
