"""Lightweight infant cry detection: log-Mel front end, augmentation,
BSConv/attention encoder with a time-frequency recurrent denoiser, and a
training / evaluation pipeline."""

__version__ = "0.1.0"
