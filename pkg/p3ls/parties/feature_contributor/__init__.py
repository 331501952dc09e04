"""Feature Contributor party."""

from .party import FeatureContributor, LocalMaskFactory

__all__ = ["FeatureContributor", "LocalMaskFactory"]
