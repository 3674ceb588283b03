"""Streaming voice activity detection fusing a lite DNN with an adaptive subband GMM."""

__version__ = "0.1.0"
