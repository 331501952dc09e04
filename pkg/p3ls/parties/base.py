"""Common plumbing for federation parties."""

import logging
from typing import Any, Optional

import numpy as np

from ..data_models import PartyId, RealMatrix
from ..errors import SingularLocalMask
from ..transcript import PayloadTag
from ..transport import Transport

logger = logging.getLogger(__name__)


class Party:
    """
    A participant that talks to others only through the transport.

    Subclasses keep their private data as attributes; nothing leaves a party
    except through ``send``.
    """

    def __init__(self, party_id: PartyId, transport: Transport):
        self.party_id = party_id
        self.transport = transport

    @property
    def name(self) -> str:
        return str(self.party_id)

    def send(
        self,
        receiver: PartyId,
        tag: PayloadTag,
        payload: Any,
        phase: str,
        masked: bool = False,
        subject: Optional[int] = None,
    ) -> None:
        self.transport.send(self.party_id, receiver, tag, payload, phase, masked=masked, subject=subject)

    def receive(self, tag: PayloadTag, sender: Optional[PartyId] = None) -> Any:
        return self.transport.receive(self.party_id, tag, sender=sender)

    def __repr__(self) -> str:
        return f"{type(self).__name__}({self.name})"


def unmask_left(mask: RealMatrix, masked: RealMatrix, owner: str) -> RealMatrix:
    """Solve ``mask @ X = masked`` for X."""
    try:
        return np.linalg.solve(mask, masked)
    except np.linalg.LinAlgError as exc:
        raise SingularLocalMask(f"{owner} could not invert its local mask: {exc}") from exc


def unmask_right(masked: RealMatrix, mask: RealMatrix, owner: str) -> RealMatrix:
    """Solve ``X @ mask = masked`` for X."""
    try:
        return np.linalg.solve(mask.T, masked.T).T
    except np.linalg.LinAlgError as exc:
        raise SingularLocalMask(f"{owner} could not invert the recovery mask: {exc}") from exc
