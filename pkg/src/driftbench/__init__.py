"""Synthetic speaker-drift benchmark, embedding-similarity detector, bound simulator and LLM judge."""

__version__ = "0.1.0"
