"""Transformer fine-tuning adapter emitting interchange prediction matrices."""

__version__ = "0.1.0"
