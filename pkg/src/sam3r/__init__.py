"""Sensor-network planning for low-altitude aircraft surveillance."""

__version__ = "0.1.0"
