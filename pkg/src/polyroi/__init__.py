"""End-to-end polygonal building outline extraction toolkit."""

__version__ = "0.1.0"
