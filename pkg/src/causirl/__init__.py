"""Invariant representation learning by matching randomly mixed latent batches."""

__version__ = "0.1.0"
