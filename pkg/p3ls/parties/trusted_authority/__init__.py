"""Trusted Authority party."""

from .party import MaskFactory, TrustedAuthority

__all__ = ["TrustedAuthority", "MaskFactory"]
