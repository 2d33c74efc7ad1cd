"""Functional limit theorems with explicit Stein-method rates."""
__version__ = "0.1.0"
