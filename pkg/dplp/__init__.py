"""Differentially private top-K link prediction."""

__version__ = "0.1.0"
