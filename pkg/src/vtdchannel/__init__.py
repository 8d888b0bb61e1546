"""Vehicular mmWave channel simulation driven by LiDAR-labeled scatterer statistics."""

__version__ = "0.1.0"
