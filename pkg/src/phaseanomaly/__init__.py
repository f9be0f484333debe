"""Phase-classification based anomaly detection for periodic time series."""

__version__ = "0.1.0"
