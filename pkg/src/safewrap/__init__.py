"""Omission-based safety wrapper for black-box classifiers."""

__version__ = "0.1.0"
