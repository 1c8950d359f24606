"""Figure rendering for pump-sweep CSV output."""

__version__ = "0.1.0"
