"""The four federation roles, one sub-package each."""

from .base import Party
from .feature_contributor import FeatureContributor
from .label_contributor import LabelContributor
from .service_provider import ServiceProvider, secure_aggregate
from .trusted_authority import TrustedAuthority

__all__ = [
    "Party",
    "TrustedAuthority",
    "ServiceProvider",
    "FeatureContributor",
    "LabelContributor",
    "secure_aggregate",
]
