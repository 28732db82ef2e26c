"""Representation learning and classification for attributed sequences."""

__version__ = "0.1.0"
