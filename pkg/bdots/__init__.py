"""Bootstrapped differences of time series between two groups."""

__version__ = "1.0.0"
