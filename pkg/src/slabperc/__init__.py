"""Percolation, invasion and minimal spanning forests on slabs Z^2 x {0..k}."""

__version__ = "0.1.0"
