"""Multi-scale memory-augmented autoencoder for image anomaly detection."""

__version__ = "0.1.0"
