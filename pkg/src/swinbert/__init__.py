"""Swin-BERT style dementia detection: shifted-window acoustic encoder, character+word text encoder, feature fusion."""

__version__ = "0.1.0"
