"""Simulation testbed for lower-bound constructions in Gaussian-process bandits."""

__version__ = "0.1.0"
