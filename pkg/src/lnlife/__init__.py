"""Lightning channel lifecycle reconstruction from chain and gossip data."""

__version__ = "0.1.0"
