"""Trusted Authority: generates and distributes every mask key, sees no data."""

import logging
from typing import Callable, List, Optional

from ...data_models import FederationConfig, PartyId
from ...masking import (
    InvertibleMask,
    MaskKeySet,
    derive_seed,
    generate_invertible,
    generate_keys,
    generate_orthogonal,
)
from ...transcript import PayloadTag
from ...transport import Transport
from ..base import Party

logger = logging.getLogger(__name__)

MaskFactory = Callable[[int, int], InvertibleMask]


class TrustedAuthority(Party):
    """
    Key issuer for all four protocol phases.

    Args:
        config: Federation dimensions and master seed.
        transport: Message transport.
        recovery_mask_factory: Builds the recovery mask N from (dim, seed).
            Defaults to a random well-conditioned matrix.
    """

    def __init__(
        self,
        config: FederationConfig,
        transport: Transport,
        recovery_mask_factory: Optional[MaskFactory] = None,
    ):
        super().__init__(PartyId.ta(), transport)
        self.config = config
        self.recovery_mask_factory = recovery_mask_factory or generate_invertible
        self.keys: Optional[MaskKeySet] = None
        self.recovery_mask: Optional[InvertibleMask] = None

    def _fc_ids(self) -> List[PartyId]:
        return [PartyId.fc(i) for i in range(1, self.config.g + 1)]

    def _shared_key_receivers(self) -> List[PartyId]:
        """Every FC, plus the LC unless an FC hosts it and passes A, N and M on."""
        if self.config.lc_fc_index is not None:
            return self._fc_ids()
        return [*self._fc_ids(), PartyId.lc()]

    def _seed(self, label: str) -> int:
        return derive_seed(self.config.master_seed, label)

    def distribute_training_keys(self, phase: str) -> MaskKeySet:
        """A to every FC and a standalone LC, H_i to FC-i only, G to the LC only."""
        cfg = self.config
        self.keys = generate_keys(
            cfg.m, cfg.block_widths, cfg.l, self._seed("training-keys"), method=cfg.mask_method
        )
        for i, fc in enumerate(self._fc_ids(), start=1):
            self.send(fc, PayloadTag.KEY_A, self.keys.A.entries, phase)
            self.send(fc, PayloadTag.KEY_HI, self.keys.H_block(i - 1), phase, subject=i)
        if self.config.lc_fc_index is None:
            self.send(PartyId.lc(), PayloadTag.KEY_A, self.keys.A.entries, phase)
        self.send(PartyId.lc(), PayloadTag.KEY_G, self.keys.G.entries, phase)
        logger.info("Distributed training keys to %d FCs and the LC", cfg.g)
        return self.keys

    def distribute_recovery_key(self, phase: str) -> InvertibleMask:
        """The common random mask N (l x l) that hides G^T from the CSP."""
        self.recovery_mask = self.recovery_mask_factory(self.config.l, self._seed("recovery-N"))
        self.transport.broadcast(
            self.party_id, self._shared_key_receivers(), PayloadTag.KEY_N, self.recovery_mask.entries, phase
        )
        return self.recovery_mask

    def distribute_contribution_keys(self, round_index: int, phase: str) -> None:
        """Fresh orthogonal M (m x m) and N (l x l) for one contribution round."""
        cfg = self.config
        M = generate_orthogonal(cfg.m, self._seed(f"contribution-M-{round_index}"), cfg.mask_method)
        N = generate_orthogonal(cfg.l, self._seed(f"contribution-N-{round_index}"), cfg.mask_method)
        receivers = self._shared_key_receivers()
        self.transport.broadcast(self.party_id, receivers, PayloadTag.KEY_M, M.entries, phase)
        self.transport.broadcast(self.party_id, receivers, PayloadTag.KEY_N, N.entries, phase)

    def distribute_inference_key(self, m_new: int, round_index: int, phase: str) -> InvertibleMask:
        """A fresh invertible M (m_new x m_new); the scores must be unmasked with its inverse."""
        M = generate_invertible(m_new, self._seed(f"inference-M-{round_index}"))
        self.transport.broadcast(self.party_id, self._shared_key_receivers(), PayloadTag.KEY_M, M.entries, phase)
        return M
