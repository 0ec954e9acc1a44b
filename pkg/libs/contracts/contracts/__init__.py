"""Shared records – every estimate and report crosses module boundaries in these shapes."""
