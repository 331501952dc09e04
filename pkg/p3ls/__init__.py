"""p3ls: privacy-preserving vertically federated partial least squares."""

from .data_models import FederationConfig, PartyId, PartyRole
from .orchestrator import FederationOrchestrator, TrainingResult
from .parties import secure_aggregate
from .transcript import PayloadTag, ProtocolTranscript, audit_views

__all__ = [
    "FederationConfig",
    "FederationOrchestrator",
    "PartyId",
    "PartyRole",
    "PayloadTag",
    "ProtocolTranscript",
    "TrainingResult",
    "audit_views",
    "secure_aggregate",
]
