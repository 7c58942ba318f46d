"""Calibration and analysis of a social-contagion model of smoking prevalence."""

__version__ = "0.1.0"
