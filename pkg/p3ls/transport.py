"""Message transport between federation parties.

``Transport`` is the interface the protocol code talks to; ``InMemoryTransport``
delivers through per-receiver FIFO queues inside one process. Every send is
recorded in the run's ``ProtocolTranscript``.
"""

import logging
from abc import ABC, abstractmethod
from collections import defaultdict, deque
from typing import Any, Deque, Dict, Iterable, List, Optional, Type

import numpy as np
from pydantic import BaseModel, ConfigDict

from .data_models import PartyId
from .errors import ProtocolError
from .transcript import MessageRecord, PayloadTag, ProtocolTranscript

logger = logging.getLogger(__name__)


class Envelope(BaseModel):
    """A message in flight: transcript metadata plus the payload itself."""
    model_config = ConfigDict(arbitrary_types_allowed=True)

    record: MessageRecord
    payload: Any


def _shape_of(payload: Any) -> List[int]:
    return list(np.shape(payload))


class Transport(ABC):
    """Abstract party-addressed transport."""

    def __init__(self, transcript: Optional[ProtocolTranscript] = None):
        self.transcript = transcript if transcript is not None else ProtocolTranscript()

    def _record(
        self,
        sender: PartyId,
        receiver: PartyId,
        tag: PayloadTag,
        payload: Any,
        phase: str,
        masked: bool,
        subject: Optional[int],
    ) -> MessageRecord:
        record = MessageRecord(
            sequence=len(self.transcript),
            sender=str(sender),
            receiver=str(receiver),
            tag=tag,
            shape=_shape_of(payload),
            phase=phase,
            masked=masked,
            subject=subject,
        )
        self.transcript.append(record)
        logger.debug("#%d %s -> %s %s %s", record.sequence, sender, receiver, tag.value, record.shape)
        return record

    @abstractmethod
    def send(
        self,
        sender: PartyId,
        receiver: PartyId,
        tag: PayloadTag,
        payload: Any,
        phase: str,
        masked: bool = False,
        subject: Optional[int] = None,
    ) -> MessageRecord:
        """Deliver one payload to one receiver."""

    @abstractmethod
    def receive(self, receiver: PartyId, tag: PayloadTag, sender: Optional[PartyId] = None) -> Any:
        """Take the oldest queued payload with this tag (and sender, if given)."""

    @abstractmethod
    def pending(self, receiver: PartyId) -> int:
        """Number of undelivered messages for a receiver."""

    def broadcast(
        self,
        sender: PartyId,
        receivers: Iterable[PartyId],
        tag: PayloadTag,
        payload: Any,
        phase: str,
        masked: bool = False,
    ) -> None:
        """Send the same payload to several receivers, one message each."""
        for receiver in receivers:
            self.send(sender, receiver, tag, payload, phase, masked=masked)


class InMemoryTransport(Transport):
    """Reference transport: per-receiver FIFO queues in one process."""

    def __init__(self, transcript: Optional[ProtocolTranscript] = None):
        super().__init__(transcript)
        self._queues: Dict[PartyId, Deque[Envelope]] = defaultdict(deque)

    def send(
        self,
        sender: PartyId,
        receiver: PartyId,
        tag: PayloadTag,
        payload: Any,
        phase: str,
        masked: bool = False,
        subject: Optional[int] = None,
    ) -> MessageRecord:
        record = self._record(sender, receiver, tag, payload, phase, masked, subject)
        self._queues[receiver].append(Envelope(record=record, payload=payload))
        return record

    def receive(self, receiver: PartyId, tag: PayloadTag, sender: Optional[PartyId] = None) -> Any:
        queue = self._queues[receiver]
        for position, envelope in enumerate(queue):
            if envelope.record.tag != tag:
                continue
            if sender is not None and envelope.record.sender != str(sender):
                continue
            del queue[position]
            return envelope.payload
        expected = f"{tag.value}" + (f" from {sender}" if sender is not None else "")
        raise ProtocolError(f"no queued {expected}", origin=str(receiver))

    def pending(self, receiver: PartyId) -> int:
        return len(self._queues[receiver])


TRANSPORTS: Dict[str, Type[Transport]] = {"in_memory": InMemoryTransport}


def create_transport(name: str, transcript: Optional[ProtocolTranscript] = None) -> Transport:
    """Build a transport from its config tag."""
    try:
        return TRANSPORTS[name](transcript)
    except KeyError:
        raise ValueError(f"unknown transport: {name}") from None
