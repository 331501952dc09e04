"""Label Contributor party."""

from .party import LabelContributor

__all__ = ["LabelContributor"]
