"""Semiparametric quantile functional regression for activity distributions."""

__version__ = "0.1.0"
