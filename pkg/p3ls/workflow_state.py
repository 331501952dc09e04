"""Protocol phase state machine for the federation orchestrator."""

from enum import Enum
from typing import Dict, List, Optional

from pydantic import BaseModel, Field


class ProtocolPhase(str, Enum):
    """Phases of a federation run."""
    INIT = "init"
    KEY_GENERATION = "key_generation"
    MASKING = "masking"
    AGGREGATION = "aggregation"
    MASKED_FIT = "masked_fit"
    RECOVERY = "recovery"
    TRAINED = "trained"
    CONTRIBUTION = "contribution"
    INFERENCE = "inference"
    ERROR = "error"


class PhaseTransition(BaseModel):
    """Represents a phase transition. Carries a sequence number, not a clock time."""
    from_phase: ProtocolPhase
    to_phase: ProtocolPhase
    sequence: int
    metadata: Dict = Field(default_factory=dict)


class FederationContext(BaseModel):
    """Tracks where the federation is and how it got there."""
    current_phase: ProtocolPhase = ProtocolPhase.INIT
    phase_history: List[PhaseTransition] = Field(default_factory=list)
    inference_rounds: int = 0
    contribution_rounds: int = 0
    error_message: Optional[str] = None

    def transition_to(self, new_phase: ProtocolPhase, metadata: Optional[Dict] = None) -> None:
        """
        Move to a new phase and record the transition.

        Args:
            new_phase: The phase to enter.
            metadata: Optional details about the transition.
        """
        self.phase_history.append(
            PhaseTransition(
                from_phase=self.current_phase,
                to_phase=new_phase,
                sequence=len(self.phase_history),
                metadata=metadata or {},
            )
        )
        self.current_phase = new_phase

        if new_phase == ProtocolPhase.INFERENCE:
            self.inference_rounds += 1
        elif new_phase == ProtocolPhase.CONTRIBUTION:
            self.contribution_rounds += 1

    @property
    def is_trained(self) -> bool:
        return any(t.to_phase == ProtocolPhase.TRAINED for t in self.phase_history)

    def get_phase_name(self) -> str:
        """Human-readable name of the current phase."""
        names = {
            ProtocolPhase.INIT: "Initializing",
            ProtocolPhase.KEY_GENERATION: "Distributing Mask Keys",
            ProtocolPhase.MASKING: "Masking Local Blocks",
            ProtocolPhase.AGGREGATION: "Aggregating Masked Data",
            ProtocolPhase.MASKED_FIT: "Fitting Masked Model",
            ProtocolPhase.RECOVERY: "Recovering Model Shares",
            ProtocolPhase.TRAINED: "Trained",
            ProtocolPhase.CONTRIBUTION: "Scoring Contributions",
            ProtocolPhase.INFERENCE: "Masked Inference",
            ProtocolPhase.ERROR: "Error Occurred",
        }
        return names.get(self.current_phase, "Unknown")


VALID_TRANSITIONS = {
    ProtocolPhase.INIT: [ProtocolPhase.KEY_GENERATION, ProtocolPhase.ERROR],
    ProtocolPhase.KEY_GENERATION: [ProtocolPhase.MASKING, ProtocolPhase.ERROR],
    ProtocolPhase.MASKING: [ProtocolPhase.AGGREGATION, ProtocolPhase.ERROR],
    ProtocolPhase.AGGREGATION: [ProtocolPhase.MASKED_FIT, ProtocolPhase.ERROR],
    ProtocolPhase.MASKED_FIT: [ProtocolPhase.RECOVERY, ProtocolPhase.ERROR],
    ProtocolPhase.RECOVERY: [ProtocolPhase.TRAINED, ProtocolPhase.ERROR],
    ProtocolPhase.TRAINED: [
        ProtocolPhase.CONTRIBUTION,
        ProtocolPhase.INFERENCE,
        ProtocolPhase.ERROR,
    ],
    ProtocolPhase.CONTRIBUTION: [ProtocolPhase.TRAINED, ProtocolPhase.ERROR],
    ProtocolPhase.INFERENCE: [ProtocolPhase.TRAINED, ProtocolPhase.ERROR],
    ProtocolPhase.ERROR: [],
}


def is_valid_transition(from_phase: ProtocolPhase, to_phase: ProtocolPhase) -> bool:
    """
    Check if a phase transition is valid.

    Args:
        from_phase: The current phase.
        to_phase: The desired next phase.

    Returns:
        True if the transition is valid, False otherwise.
    """
    return to_phase in VALID_TRANSITIONS.get(from_phase, [])
