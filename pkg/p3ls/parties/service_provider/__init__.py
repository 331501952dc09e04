"""Computation Service Provider party."""

from .party import ServiceProvider, secure_aggregate

__all__ = ["ServiceProvider", "secure_aggregate"]
