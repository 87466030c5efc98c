"""Fake news classification from propagation cascades and article text."""

__version__ = "0.1.0"
