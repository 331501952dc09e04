"""Computation Service Provider: fits and serves the model in masked space only."""

import logging
from typing import Dict, List, Optional, Sequence

import numpy as np

from ... import pls_core
from ...data_models import MaskedModel, PartyId, PartyRole, RealMatrix, as_matrix
from ...errors import DimensionMismatch, NotTrained, ProtocolError, VisibilityViolation, WrongBlockCount
from ...transcript import PayloadTag
from ...transport import Transport
from ..base import Party

logger = logging.getLogger(__name__)

# What the CSP may hand to each role; FC-specific tags additionally require subject == requester
SERVABLE_TAGS = {
    PartyRole.FC: {PayloadTag.MASKED_T, PayloadTag.MASKED_W_I, PayloadTag.MASKED_P_I, PayloadTag.MASKED_B_I},
    PartyRole.LC: {PayloadTag.MASKED_T, PayloadTag.MASKED_Q, PayloadTag.MASKED_U},
}
PER_BLOCK_TAGS = {PayloadTag.MASKED_W_I, PayloadTag.MASKED_P_I, PayloadTag.MASKED_B_I}


def secure_aggregate(masked_blocks: Sequence[RealMatrix]) -> RealMatrix:
    """
    Sum the masked blocks X'_i = A X_i H_i into X' = A X H.

    Raises:
        WrongBlockCount: If no blocks are given.
        DimensionMismatch: If the blocks differ in shape.
    """
    if len(masked_blocks) == 0:
        raise WrongBlockCount("secure aggregation needs at least one masked block")
    blocks = [as_matrix(block, f"masked block {i + 1}") for i, block in enumerate(masked_blocks)]
    shape = blocks[0].shape
    for i, block in enumerate(blocks[1:], start=2):
        if block.shape != shape:
            raise DimensionMismatch(f"masked block {i} has shape {block.shape}, expected {shape}")
    return np.sum(blocks, axis=0)


class ServiceProvider(Party):
    """
    The CSP. Holds X', Y', the masked model (including R' for later
    inference) and the masked recovery keys, and nothing in the clear.
    """

    def __init__(self, g: int, transport: Transport):
        super().__init__(PartyId.csp(), transport)
        self.g = g
        self.X_masked: Optional[RealMatrix] = None
        self.Y_masked: Optional[RealMatrix] = None
        self.masked_model: Optional[MaskedModel] = None
        self._masked_H: Dict[int, RealMatrix] = {}
        self._masked_Gt: Optional[RealMatrix] = None

    def _fc_ids(self) -> List[PartyId]:
        return [PartyId.fc(i) for i in range(1, self.g + 1)]

    async def aggregate(self, phase: str) -> RealMatrix:
        """Receive every X'_i and Y', then sum the blocks."""
        blocks = [self.receive(PayloadTag.MASKED_X, sender=fc) for fc in self._fc_ids()]
        self.Y_masked = self.receive(PayloadTag.MASKED_Y, sender=PartyId.lc())
        self.X_masked = secure_aggregate(blocks)
        if self.X_masked.shape[0] != self.Y_masked.shape[0]:
            raise DimensionMismatch(
                f"masked X has {self.X_masked.shape[0]} rows but masked Y has {self.Y_masked.shape[0]}"
            )
        return self.X_masked

    def fit_masked(self, k: int, phase: str) -> MaskedModel:
        """Run the ordinary PLS fit on X', Y'. Fit errors come back as ProtocolError."""
        try:
            model = pls_core.fit(self.X_masked, self.Y_masked, k)
        except ValueError as exc:
            raise ProtocolError(str(exc), origin=self.name, phase=phase) from exc
        self.masked_model = MaskedModel(
            W=model.W, T=model.T, P=model.P, Q=model.Q, U=model.U, R=model.R, B=model.B, k=model.k
        )
        logger.info("CSP fitted masked model with k=%d", k)
        return self.masked_model

    def _require_model(self) -> MaskedModel:
        if self.masked_model is None:
            raise NotTrained("the CSP has not fitted a masked model")
        return self.masked_model

    def handle_request(self, requester: PartyId, tag: PayloadTag) -> RealMatrix:
        """
        Produce one recovery payload for a party, enforcing who may see what.

        Raises:
            VisibilityViolation: If the requester is not entitled to the component.
        """
        allowed = SERVABLE_TAGS.get(requester.role, set())
        if tag not in allowed:
            raise VisibilityViolation(f"{requester} may not receive {tag.value}")
        model = self._require_model()

        if tag == PayloadTag.MASKED_T:
            return model.T
        if tag == PayloadTag.MASKED_Q:
            return model.Q
        if tag == PayloadTag.MASKED_U:
            return model.U

        masked_H = self._masked_H.get(requester.index)
        if masked_H is None:
            raise ProtocolError(f"no masked H from {requester}", origin=self.name)
        if tag == PayloadTag.MASKED_W_I:
            return masked_H @ model.W
        if tag == PayloadTag.MASKED_P_I:
            return masked_H @ model.P
        if self._masked_Gt is None:
            raise ProtocolError("no masked G^T from the LC", origin=self.name)
        return masked_H @ model.B @ self._masked_Gt

    def _serve(self, requester: PartyId, tag: PayloadTag, phase: str) -> None:
        subject = requester.index if tag in PER_BLOCK_TAGS else None
        self.send(requester, tag, self.handle_request(requester, tag), phase, masked=True, subject=subject)

    async def serve_recovery(self, phase: str) -> None:
        """Collect C_i H_i and G^T N, then return every party its masked components."""
        for fc in self._fc_ids():
            self._masked_H[fc.index] = self.receive(PayloadTag.MASKED_HI, sender=fc)
        self._masked_Gt = self.receive(PayloadTag.MASKED_GT, sender=PartyId.lc())

        for fc in self._fc_ids():
            for tag in (PayloadTag.MASKED_T, PayloadTag.MASKED_W_I, PayloadTag.MASKED_P_I, PayloadTag.MASKED_B_I):
                self._serve(fc, tag, phase)
        for tag in (PayloadTag.MASKED_T, PayloadTag.MASKED_Q, PayloadTag.MASKED_U):
            self._serve(PartyId.lc(), tag, phase)

    async def serve_contribution(self, phase: str) -> None:
        """Residual sum of squares of each masked partial prediction, via eigenvalues of E'^T E'."""
        Y_ref = self.receive(PayloadTag.MASKED_Y, sender=PartyId.lc())
        for fc in self._fc_ids():
            Y_hat = self.receive(PayloadTag.MASKED_YHAT, sender=fc)
            if Y_hat.shape != Y_ref.shape:
                raise DimensionMismatch(f"{fc} sent a prediction of shape {Y_hat.shape}, expected {Y_ref.shape}")
            E = Y_ref - Y_hat
            ss = float(np.sum(np.linalg.eigvalsh(E.T @ E)))
            self.send(fc, PayloadTag.SS_RESIDUAL, ss, phase, subject=fc.index)

    async def serve_inference(self, phase: str) -> None:
        """Aggregate masked partial predictions and masked blocks, then compute T' = X' R'."""
        model = self._require_model()
        predictions, blocks = [], []
        for fc in self._fc_ids():
            predictions.append(self.receive(PayloadTag.MASKED_YHAT, sender=fc))
            blocks.append(self.receive(PayloadTag.MASKED_X, sender=fc))
        Y_hat = secure_aggregate(predictions)
        scores = secure_aggregate(blocks) @ model.R
        for fc in self._fc_ids():
            self.send(fc, PayloadTag.MASKED_T, scores, phase, masked=True)
        self.send(PartyId.lc(), PayloadTag.MASKED_YHAT, Y_hat, phase, masked=True)
