"""Temporal excitation and aggregation (TEA) building blocks."""
