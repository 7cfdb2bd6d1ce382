"""Interaction-modulated Bose-Hubbard chain toolkit."""

__version__ = "0.1.0"
