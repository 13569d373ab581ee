"""fpbench: blind collusion-fingerprinting simulation lab."""

__version__ = "0.1.0"
