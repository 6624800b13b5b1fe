"""Certified Lipschitz upper bounds for ReLU networks in induced norms."""

from . import benchgen, bounds_conv, bounds_dense, linalg, lowering, netmodel
from .errors import LipcertError

__all__ = [
    "LipcertError",
    "benchgen",
    "bounds_conv",
    "bounds_dense",
    "linalg",
    "lowering",
    "netmodel",
]
