"""Zero-shot node classification with decomposed graph convolutions."""

__version__ = "0.1.0"
