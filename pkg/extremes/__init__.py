"""Randomly stopped extremes: pgf algebra, stopped-extreme transforms, checks and inference."""

__version__ = "0.1.0"
