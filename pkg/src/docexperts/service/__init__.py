"""HTTP service wrapping the retrieval engine."""

from .app import create_app

__all__ = ["create_app"]
