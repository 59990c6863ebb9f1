"""Few-shot text-to-speech with multi-reference attention, desk-scale edition."""

__version__ = "0.1.0"
