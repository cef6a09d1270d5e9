"""Desk-scale representative-feature GAN laboratory."""
__version__ = "0.1.0"
