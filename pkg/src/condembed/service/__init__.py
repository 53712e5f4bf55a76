"""HTTP service exposing the query and evaluation surface of a frozen model."""

from .app import create_app

__all__ = ["create_app"]
