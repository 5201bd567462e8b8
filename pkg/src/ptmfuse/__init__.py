"""Master/slave multi-stage feature fusion for PTM site prediction."""

__version__ = "0.1.0"
