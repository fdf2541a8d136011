"""Small-intestine digestion model with dietary fibre."""

__version__ = "0.1.0"
