"""Generalization bounds for graph convolutional networks on Markov-dependent node data."""

__version__ = "0.1.0"
