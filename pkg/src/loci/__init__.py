"""Looped slot-based object-centric world model with percept gates."""

__version__ = "0.1.0"
