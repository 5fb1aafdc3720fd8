"""Synthetic differential-diagnosis records, models and evaluation."""

__version__ = "0.1.0"
