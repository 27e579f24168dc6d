"""Per-image JPEG quantization-table optimization."""
__version__ = "0.1.0"
