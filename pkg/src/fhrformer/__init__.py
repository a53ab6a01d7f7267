"""Masked transformer autoencoder for fetal heart rate inpainting and forecasting."""

__version__ = "0.1.0"
