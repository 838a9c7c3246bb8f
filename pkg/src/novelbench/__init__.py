"""Benchmarking generative deep and classical anomaly detectors."""

__version__ = "0.1.0"
