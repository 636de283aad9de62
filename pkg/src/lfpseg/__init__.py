"""Semantic segmentation of local field potentials into baseline, interictal and ictal events."""

__version__ = "0.1.0"
