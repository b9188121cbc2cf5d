"""Desk-scale AI-based FDIR laboratory for stuck-value sensor faults."""

__version__ = "0.1.0"
