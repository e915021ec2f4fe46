"""Penalty-regularized flows for monotone differential inclusions."""
__version__ = "0.1.0"
