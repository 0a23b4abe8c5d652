"""HARQ-EH - Minimum expected HARQ-IR re-transmissions for RF-powered receivers."""

__version__ = "1.0.0"
