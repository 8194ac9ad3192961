"""Privacy-aware cross-domain transfer learning for implicit-feedback recommendation."""

__version__ = "0.1.0"
