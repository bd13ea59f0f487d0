"""Numerical toolkit for rotationally symmetric asymptotically flat
3-manifolds: weak inverse mean curvature flow, Hawking / isoperimetric /
isocapacitary / ADM masses, p-capacities, and verification of the
inequalities relating them."""

from ._kernels import BACKEND

__version__ = "0.1.0"

__all__ = ["BACKEND", "__version__"]
