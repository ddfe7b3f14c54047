"""Desk-scale AML blood-cell pipeline: segmentation, splitting, a linear
classifier, evaluation metrics and an instrumented area-attention kernel."""

__version__ = "0.1.0"
