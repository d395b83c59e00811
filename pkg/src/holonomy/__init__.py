"""Geometric phases of mixed quantum states on coadjoint orbits."""

__version__ = "0.1.0"
