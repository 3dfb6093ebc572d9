"""Predicting Cantonese readings of Chinese characters from their graphical
decomposition and from cognate readings in related languages."""

__version__ = "0.1.0"
