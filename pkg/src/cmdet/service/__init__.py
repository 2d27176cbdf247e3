"""HTTP facade over the detection toolkit."""

from .app import create_app

__all__ = ["create_app"]
