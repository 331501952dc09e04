"""Label Contributor: owns the response matrix Y."""

import logging
from typing import TYPE_CHECKING, Optional

import numpy as np

from ...data_models import LcModelShare, PartyId, RealMatrix, as_matrix
from ...errors import NotTrained
from ...masking import mask_targets
from ...pls_core import StandardizationParams, explained_variance_y, standardize
from ...transcript import PayloadTag
from ...transport import Transport
from ..base import Party

if TYPE_CHECKING:
    from ..feature_contributor import FeatureContributor

logger = logging.getLogger(__name__)


class LabelContributor(Party):
    """
    The LC. Masks Y for training and scoring, recovers Q, U and the shared
    scores, and is the only party that sees predictions in the clear.

    When an FC hosts it (``host`` is set), the keys A, N and M come from that
    FC instead of a separate TA message; only G is addressed to the LC.
    """

    def __init__(self, Y: RealMatrix, transport: Transport):
        super().__init__(PartyId.lc(), transport)
        self.Y_std: RealMatrix
        self.params: StandardizationParams
        self.Y_std, self.params = standardize(as_matrix(Y, "Y"))
        self.host: Optional["FeatureContributor"] = None

        self._A: Optional[RealMatrix] = None
        self._G: Optional[RealMatrix] = None
        self._M: Optional[RealMatrix] = None
        self.share: Optional[LcModelShare] = None

    @property
    def m(self) -> int:
        return int(self.Y_std.shape[0])

    @property
    def l(self) -> int:
        return int(self.Y_std.shape[1])

    @property
    def G(self) -> Optional[RealMatrix]:
        return self._G

    def _shared_key(self, tag: PayloadTag) -> RealMatrix:
        if self.host is not None:
            return self.host.shared_key(tag)
        return self.receive(tag, sender=PartyId.ta())

    async def mask_targets(self, phase: str) -> None:
        """Send Y' = A Y G to the CSP."""
        self._A = self._shared_key(PayloadTag.KEY_A)
        self._G = self.receive(PayloadTag.KEY_G, sender=PartyId.ta())
        self.send(PartyId.csp(), PayloadTag.MASKED_Y, mask_targets(self.Y_std, self._A, self._G), phase, masked=True)

    async def submit_recovery_mask(self, phase: str) -> None:
        """Send G^T N so the CSP can finish every B_i without learning G."""
        N = self._shared_key(PayloadTag.KEY_N)
        self.send(PartyId.csp(), PayloadTag.MASKED_GT, self._G.T @ N, phase, masked=True)

    async def recover(self, phase: str) -> LcModelShare:
        csp = PartyId.csp()
        T = self._A.T @ self.receive(PayloadTag.MASKED_T, sender=csp)
        Q = self._G @ self.receive(PayloadTag.MASKED_Q, sender=csp)
        U = self._A.T @ self.receive(PayloadTag.MASKED_U, sender=csp)
        self.share = LcModelShare(
            T=T,
            Q=Q,
            U=U,
            phi=self.Y_std - T @ Q.T,
            r2_y=explained_variance_y(Q, self.m, self.l),
        )
        return self.share

    async def submit_contribution(self, phase: str) -> None:
        """Send M Y N as the reference for every block's residual."""
        if self.share is None:
            raise NotTrained("LC holds no model share yet")
        M = self._shared_key(PayloadTag.KEY_M)
        N = self._shared_key(PayloadTag.KEY_N)
        self.send(PartyId.csp(), PayloadTag.MASKED_Y, M @ self.Y_std @ N, phase, masked=True)

    async def prepare_inference(self) -> None:
        if self.share is None:
            raise NotTrained("LC holds no model share yet")
        self._M = self._shared_key(PayloadTag.KEY_M)

    async def finish_inference(self) -> RealMatrix:
        """Unmask the aggregated prediction and return it in original units."""
        masked = self.receive(PayloadTag.MASKED_YHAT, sender=PartyId.csp())
        return self.params.invert(np.linalg.solve(self._M, masked))
