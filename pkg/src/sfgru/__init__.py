"""Stacked multilevel-fusion GRUs for pedestrian crossing anticipation, in numpy."""

__version__ = "0.1.0"
