"""Reserves of path-dependent equity-linked insurance policies via functional Ito calculus."""

__version__ = "0.1.0"
