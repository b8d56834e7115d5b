"""Hybrid quantum-classical classifiers for fMRI ROI time series."""

__version__ = "0.1.0"
