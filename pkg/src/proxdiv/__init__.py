"""Proximal-point algorithms for minimum-divergence estimation in incomplete-data models."""

__version__ = "0.1.0"
