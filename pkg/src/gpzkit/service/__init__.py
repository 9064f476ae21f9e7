"""HTTP service exposing the pipeline stages (FastAPI + pydantic models)."""
from .app import app, create_app

__all__ = ["app", "create_app"]
