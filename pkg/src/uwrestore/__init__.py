"""Unsupervised underwater image restoration built on an explicit
image-formation model with neural coefficient and depth estimators."""

__version__ = "0.1.0"

from .physics import DegradationParams, degrade, estimate_backscatter, restore

__all__ = [
    "DegradationParams",
    "degrade",
    "restore",
    "estimate_backscatter",
    "__version__",
]
