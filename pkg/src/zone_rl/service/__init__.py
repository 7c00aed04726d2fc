"""HTTP face of the experiment harness: FastAPI app plus request/response
schemas. The ``zone-rl`` CLI drives this service in-process by default and
over the network with ``--server``."""

from .app import create_app

__all__ = ["create_app"]
