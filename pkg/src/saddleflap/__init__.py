"""Numerical laboratory for saddle-node center manifolds and weak-stable-manifold flapping."""
__version__ = "0.1.0"
