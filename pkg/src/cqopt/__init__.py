"""Conjunctive-query bounds, certificates and adaptive evaluation."""

__version__ = "0.1.0"
