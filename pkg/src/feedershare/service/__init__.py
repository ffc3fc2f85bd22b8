from .app import app, create_app, serve

__all__ = ["app", "create_app", "serve"]
