"""Feature Contributor: owns one vertical block X_i of the process data."""

import logging
from typing import TYPE_CHECKING, Callable, Dict, Optional

import numpy as np

from ...data_models import FcModelShare, PartyId, RealMatrix, as_matrix
from ...errors import DimensionMismatch, NotTrained, ProtocolError
from ...masking import InvertibleMask, derive_seed, generate_invertible, mask_features
from ...pls_core import StandardizationParams, explained_variance_x, r2_block_y, standardize
from ...transcript import PayloadTag
from ...transport import Transport
from ..base import Party, unmask_left, unmask_right

if TYPE_CHECKING:
    from ..label_contributor import LabelContributor

logger = logging.getLogger(__name__)

LocalMaskFactory = Callable[[int, int], InvertibleMask]


class FeatureContributor(Party):
    """
    FC-i. Standardizes its block locally, masks it, and recovers W_i, P_i,
    B_i and the shared scores T after the masked fit.

    Args:
        index: 1-based FC index.
        X: Raw m x n_i block.
        n_total: Total feature count n over all blocks.
        transport: Message transport.
        master_seed: Root seed the local recovery mask derives from.
        local_mask_factory: Builds C_i from (dim, seed).
    """

    def __init__(
        self,
        index: int,
        X: RealMatrix,
        n_total: int,
        transport: Transport,
        master_seed: int = 0,
        local_mask_factory: Optional[LocalMaskFactory] = None,
    ):
        super().__init__(PartyId.fc(index), transport)
        self.index = index
        self.n_total = n_total
        self.master_seed = master_seed
        self.local_mask_factory = local_mask_factory or generate_invertible
        self.X_std: RealMatrix
        self.params: StandardizationParams
        self.X_std, self.params = standardize(as_matrix(X, f"X_{index}"))
        self.hosted_label: Optional["LabelContributor"] = None

        self._A: Optional[RealMatrix] = None
        self._H_i: Optional[RealMatrix] = None
        self._C_i: Optional[InvertibleMask] = None
        self._N: Optional[RealMatrix] = None
        self._M: Optional[RealMatrix] = None
        self._shared: Dict[PayloadTag, RealMatrix] = {}
        self.share: Optional[FcModelShare] = None

    @property
    def m(self) -> int:
        return int(self.X_std.shape[0])

    @property
    def width(self) -> int:
        return int(self.X_std.shape[1])

    def host(self, label: "LabelContributor") -> None:
        """
        Take on the LC role as well, so one company owns both X_i and Y.

        The TA then sends A, N and M to this FC only; the label role reads
        them from here and receives G at the LC address.
        """
        self.hosted_label = label
        label.host = self
        logger.info("%s also acts as the label contributor", self.name)

    @property
    def held_keys(self) -> Dict[str, RealMatrix]:
        """Training keys this party holds, including G when it hosts the LC."""
        keys = {name: key for name, key in (("A", self._A), ("H_i", self._H_i)) if key is not None}
        if self.hosted_label is not None and self.hosted_label.G is not None:
            keys["G"] = self.hosted_label.G
        return keys

    def _receive_shared(self, tag: PayloadTag) -> RealMatrix:
        key = self.receive(tag, sender=PartyId.ta())
        self._shared[tag] = key
        return key

    def shared_key(self, tag: PayloadTag) -> RealMatrix:
        """The latest A, N or M this FC received, for the LC role it hosts."""
        if tag not in self._shared:
            raise ProtocolError(f"holds no {tag.value} to share", origin=self.name)
        return self._shared[tag]

    # Training

    async def mask_block(self, phase: str) -> None:
        """Send X'_i = A X_i H_i to the CSP."""
        ta = PartyId.ta()
        self._A = self._receive_shared(PayloadTag.KEY_A)
        H_i = self.receive(PayloadTag.KEY_HI, sender=ta)
        if H_i.shape != (self.width, self.n_total):
            raise DimensionMismatch(f"{self.name}: H_i has shape {H_i.shape}, expected {(self.width, self.n_total)}")
        self._H_i = H_i
        masked = mask_features(self.X_std, self._A, H_i.T)
        self.send(PartyId.csp(), PayloadTag.MASKED_X, masked, phase, masked=True, subject=self.index)

    async def submit_recovery_mask(self, phase: str) -> None:
        """Hide H_i behind a private C_i and hand C_i H_i to the CSP."""
        self._N = self._receive_shared(PayloadTag.KEY_N)
        seed = derive_seed(self.master_seed, f"fc-{self.index}-local")
        self._C_i = self.local_mask_factory(self.width, seed)
        self.send(
            PartyId.csp(), PayloadTag.MASKED_HI, self._C_i.entries @ self._H_i, phase,
            masked=True, subject=self.index,
        )

    async def recover(self, phase: str) -> FcModelShare:
        """Unmask T, W_i, P_i and B_i, then derive local residuals and explained variance."""
        csp = PartyId.csp()
        T = self._A.T @ self.receive(PayloadTag.MASKED_T, sender=csp)
        C_i = self._C_i.entries
        W = unmask_left(C_i, self.receive(PayloadTag.MASKED_W_I, sender=csp), self.name)
        P = unmask_left(C_i, self.receive(PayloadTag.MASKED_P_I, sender=csp), self.name)
        B_masked = unmask_left(C_i, self.receive(PayloadTag.MASKED_B_I, sender=csp), self.name)
        B = unmask_right(B_masked, self._N, self.name)

        theta = self.X_std - T @ P.T
        self.share = FcModelShare(
            index=self.index,
            T=T,
            W=W,
            P=P,
            B=B,
            theta=theta,
            r2_x=explained_variance_x(P, self.m, self.n_total),
        )
        logger.debug("%s recovered its share (k=%d)", self.name, T.shape[1])
        return self.share

    # Contribution

    def _require_share(self) -> FcModelShare:
        if self.share is None:
            raise NotTrained(f"{self.name} holds no model share yet")
        return self.share

    async def submit_contribution(self, phase: str) -> None:
        """Send M X_i B_i N, the masked partial prediction of this block."""
        share = self._require_share()
        M = self._receive_shared(PayloadTag.KEY_M)
        N = self._receive_shared(PayloadTag.KEY_N)
        masked = M @ (self.X_std @ share.B) @ N
        self.send(PartyId.csp(), PayloadTag.MASKED_YHAT, masked, phase, masked=True, subject=self.index)

    async def finish_contribution(self, l: int) -> float:
        """Turn the CSP's residual sum of squares into R^2 of Y explained by this block."""
        share = self._require_share()
        ss = float(self.receive(PayloadTag.SS_RESIDUAL, sender=PartyId.csp()))
        share.r2_xy = 1.0 - ss / (self.m * l)
        return share.r2_xy

    def local_contribution(self, Y_std: RealMatrix) -> float:
        """Plaintext counterpart of the contribution score, given Y in the clear."""
        share = self._require_share()
        return r2_block_y(Y_std, self.X_std @ share.B, self.m, Y_std.shape[1])

    # Inference

    async def submit_inference(self, X_new: RealMatrix, phase: str) -> None:
        """Send M X_new,i B_i and M X_new,i H_i for a batch of new rows."""
        share = self._require_share()
        X_new = as_matrix(X_new, f"{self.name} new block")
        if X_new.shape[1] != self.width:
            raise DimensionMismatch(f"{self.name}: new block has {X_new.shape[1]} columns, expected {self.width}")
        Xs = self.params.apply(X_new)
        self._M = self._receive_shared(PayloadTag.KEY_M)
        csp = PartyId.csp()
        self.send(csp, PayloadTag.MASKED_YHAT, self._M @ Xs @ share.B, phase, masked=True, subject=self.index)
        self.send(csp, PayloadTag.MASKED_X, self._M @ Xs @ self._H_i, phase, masked=True, subject=self.index)

    async def finish_inference(self) -> RealMatrix:
        """Scores of the new rows, T_new = M^-1 T'."""
        masked_scores = self.receive(PayloadTag.MASKED_T, sender=PartyId.csp())
        return np.linalg.solve(self._M, masked_scores)
