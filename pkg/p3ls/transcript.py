"""Protocol transcripts and the privacy-view audit that runs on them.

A transcript stores message metadata only (who, to whom, what tag, what
shape, in which phase). Payload values never enter it, so an exported
transcript can be shared with an auditor.
"""

import json
import logging
from enum import Enum
from pathlib import Path
from typing import Dict, List, Optional, Union

from pydantic import BaseModel, Field

from .data_models import PartyId, PartyRole

logger = logging.getLogger(__name__)


class PayloadTag(str, Enum):
    """Stable message tags."""
    KEY_A = "KEY_A"
    KEY_HI = "KEY_HI"
    KEY_G = "KEY_G"
    KEY_N = "KEY_N"
    KEY_M = "KEY_M"
    MASKED_X = "MASKED_X"
    MASKED_Y = "MASKED_Y"
    MASKED_T = "MASKED_T"
    MASKED_Q = "MASKED_Q"
    MASKED_U = "MASKED_U"
    MASKED_HI = "MASKED_HI"
    MASKED_GT = "MASKED_GT"
    MASKED_W_I = "MASKED_W_I"
    MASKED_P_I = "MASKED_P_I"
    MASKED_B_I = "MASKED_B_I"
    MASKED_YHAT = "MASKED_YHAT"
    SS_RESIDUAL = "SS_RESIDUAL"

    @property
    def is_key(self) -> bool:
        return self.value.startswith("KEY_")


# Tags addressed to one particular FC; the record's subject names which one
FC_SPECIFIC_TAGS = {
    PayloadTag.KEY_HI,
    PayloadTag.MASKED_W_I,
    PayloadTag.MASKED_P_I,
    PayloadTag.MASKED_B_I,
    PayloadTag.SS_RESIDUAL,
}

# What an FC must never receive (Q', U', G, the LC's masked labels or predictions, other blocks)
FC_FORBIDDEN_TAGS = {
    PayloadTag.MASKED_Q,
    PayloadTag.MASKED_U,
    PayloadTag.MASKED_GT,
    PayloadTag.MASKED_Y,
    PayloadTag.MASKED_YHAT,
    PayloadTag.MASKED_X,
    PayloadTag.MASKED_HI,
    PayloadTag.KEY_G,
}

# What the LC must never receive (feature blocks and FC model shares)
LC_FORBIDDEN_TAGS = {
    PayloadTag.MASKED_X,
    PayloadTag.MASKED_HI,
    PayloadTag.MASKED_W_I,
    PayloadTag.MASKED_P_I,
    PayloadTag.MASKED_B_I,
    PayloadTag.KEY_HI,
    PayloadTag.SS_RESIDUAL,
}


class MessageRecord(BaseModel):
    """Metadata of one message."""
    sequence: int
    sender: str
    receiver: str
    tag: PayloadTag
    shape: List[int] = Field(default_factory=list)
    phase: str
    masked: bool = Field(description="Set by the sender when the payload is masked at creation")
    subject: Optional[int] = Field(default=None, description="FC index the payload belongs to, if any")


class ProtocolTranscript(BaseModel):
    """Append-only, ordered message log of a federation."""
    records: List[MessageRecord] = Field(default_factory=list)

    def append(self, record: MessageRecord) -> None:
        self.records.append(record)

    def __len__(self) -> int:
        return len(self.records)

    def for_party(self, party: Union[PartyId, str]) -> List[MessageRecord]:
        """Records a party sent or received."""
        name = str(party)
        return [r for r in self.records if name in (r.sender, r.receiver)]

    def to_jsonl(self, path: Union[str, Path]) -> Path:
        path = Path(path)
        path.parent.mkdir(parents=True, exist_ok=True)
        with open(path, "w", encoding="utf-8") as f:
            for record in self.records:
                f.write(record.model_dump_json() + "\n")
        return path

    @classmethod
    def from_jsonl(cls, path: Union[str, Path]) -> "ProtocolTranscript":
        records = []
        with open(path, "r", encoding="utf-8") as f:
            for line in f:
                if line.strip():
                    records.append(MessageRecord.model_validate(json.loads(line)))
        return cls(records=records)


class PartyView(BaseModel):
    """Everything one party saw on the wire."""
    received: List[str] = Field(default_factory=list)
    sent: List[str] = Field(default_factory=list)


class AuditReport(BaseModel):
    views: Dict[str, PartyView] = Field(default_factory=dict)
    violations: List[str] = Field(default_factory=list)

    @property
    def passed(self) -> bool:
        return not self.violations


def _check_record(record: MessageRecord) -> List[str]:
    found = []
    sender = PartyId.parse(record.sender)
    receiver = PartyId.parse(record.receiver)
    where = f"#{record.sequence} {record.sender}->{record.receiver} {record.tag.value} ({record.phase})"

    if record.tag.is_key and sender.role != PartyRole.TA:
        found.append(f"{where}: key material sent by a party other than the TA")
    if sender.role == PartyRole.TA and not record.tag.is_key:
        found.append(f"{where}: TA sent a non-key payload")

    if receiver.role == PartyRole.TA:
        found.append(f"{where}: TA received a payload")
    elif receiver.role == PartyRole.CSP:
        if record.tag.is_key:
            found.append(f"{where}: CSP received key material")
        elif not record.masked:
            found.append(f"{where}: CSP received an unmasked payload")
    elif receiver.role == PartyRole.FC:
        if record.tag in FC_FORBIDDEN_TAGS:
            found.append(f"{where}: FC received a component outside its view")
        elif record.tag in FC_SPECIFIC_TAGS and record.subject != receiver.index:
            found.append(f"{where}: FC received another party's share (subject {record.subject})")
    elif receiver.role == PartyRole.LC:
        if record.tag in LC_FORBIDDEN_TAGS:
            found.append(f"{where}: LC received a feature block or FC share")
    return found


def audit_views(transcript: ProtocolTranscript) -> AuditReport:
    """
    Classify what every party sent and received, and flag view violations.

    Rules: the TA only sends keys and never receives anything; the CSP only
    receives masked, non-key payloads; an FC never receives Q', U', G, the
    LC's data, another block, or another FC's share; the LC never receives
    feature blocks or FC shares; only the TA distributes keys.

    Args:
        transcript: A transcript of any completed run.

    Returns:
        The per-party views and the list of violations (empty means pass).
    """
    report = AuditReport()
    for record in transcript.records:
        report.views.setdefault(record.sender, PartyView()).sent.append(record.tag.value)
        report.views.setdefault(record.receiver, PartyView()).received.append(record.tag.value)
        report.violations.extend(_check_record(record))

    if report.violations:
        logger.warning("Audit found %d violation(s)", len(report.violations))
    return report
