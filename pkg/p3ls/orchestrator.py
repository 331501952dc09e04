"""Federation orchestrator: drives the parties through training, recovery, contribution and inference."""

import asyncio
import logging
from typing import Dict, List, Optional, Sequence, Tuple

import numpy as np
from pydantic import BaseModel, ConfigDict

from .data_models import (
    FcModelShare,
    FederationConfig,
    InferenceResult,
    LcModelShare,
    RealMatrix,
    as_matrix,
)
from .errors import DimensionMismatch, NotTrained
from .parties import FeatureContributor, LabelContributor, ServiceProvider, TrustedAuthority
from .parties.feature_contributor import LocalMaskFactory
from .parties.trusted_authority import MaskFactory
from .transcript import ProtocolTranscript
from .transport import Transport, create_transport
from .workflow_state import FederationContext, ProtocolPhase, is_valid_transition

logger = logging.getLogger(__name__)


class TrainingResult(BaseModel):
    """Shares handed out by a training run, plus the run's transcript so far."""
    model_config = ConfigDict(arbitrary_types_allowed=True)

    fc_shares: Dict[int, FcModelShare]
    lc_share: LcModelShare
    transcript: ProtocolTranscript


class FederationOrchestrator:
    """
    Runs the privacy-preserving PLS protocol for one federation.

    Each party lives in its own object and only exchanges data through the
    transport. Phases are barrier-synchronized: the FC actions of a step run
    together under ``asyncio.gather``, the LC acts once they are done (a
    hosted LC reads its keys from the hosting FC), and the next step starts
    after that.

    With ``config.lc_fc_index`` set, that FC hosts the LC: it owns Y as well
    as its block and holds A, H_i and G.

    Args:
        config: Federation dimensions, k and master seed.
        blocks: Raw feature blocks X_1..X_g, one per FC.
        Y: Raw responses held by the LC.
        transport: Message transport; built from ``config.transport`` if omitted.
        local_mask_factory: Builds each FC's C_i from (dim, seed).
        recovery_mask_factory: Builds the TA's recovery mask N from (dim, seed).
    """

    def __init__(
        self,
        config: FederationConfig,
        blocks: Sequence[RealMatrix],
        Y: RealMatrix,
        transport: Optional[Transport] = None,
        local_mask_factory: Optional[LocalMaskFactory] = None,
        recovery_mask_factory: Optional[MaskFactory] = None,
    ):
        self.config = config
        self._check_inputs(blocks, Y)
        self.context = FederationContext()
        self.transport = transport or create_transport(config.transport)

        self.ta = TrustedAuthority(config, self.transport, recovery_mask_factory=recovery_mask_factory)
        self.csp = ServiceProvider(config.g, self.transport)
        self.fcs: List[FeatureContributor] = [
            FeatureContributor(
                i,
                X_i,
                config.n,
                self.transport,
                master_seed=config.master_seed,
                local_mask_factory=local_mask_factory,
            )
            for i, X_i in enumerate(blocks, start=1)
        ]
        self.lc = LabelContributor(Y, self.transport)
        if config.lc_fc_index is not None:
            self.fcs[config.lc_fc_index - 1].host(self.lc)

        logger.info("Orchestrator initialized: g=%d, m=%d, n=%d, l=%d, k=%d",
                    config.g, config.m, config.n, config.l, config.k)

    @property
    def transcript(self) -> ProtocolTranscript:
        return self.transport.transcript

    def _check_inputs(self, blocks: Sequence[RealMatrix], Y: RealMatrix) -> None:
        cfg = self.config
        if len(blocks) != cfg.g:
            raise DimensionMismatch(f"expected {cfg.g} feature blocks, got {len(blocks)}")
        for i, (X_i, width) in enumerate(zip(blocks, cfg.block_widths), start=1):
            shape = np.shape(X_i)
            if shape != (cfg.m, width):
                raise DimensionMismatch(f"FC-{i}: block has shape {shape}, expected {(cfg.m, width)}")
        if np.shape(Y) != (cfg.m, cfg.l):
            raise DimensionMismatch(f"LC: Y has shape {np.shape(Y)}, expected {(cfg.m, cfg.l)}")

    def _transition_to(self, new_phase: ProtocolPhase, metadata: Optional[Dict] = None) -> None:
        """
        Transition to a new phase with validation.

        Raises:
            ValueError: If the transition is invalid.
        """
        if not is_valid_transition(self.context.current_phase, new_phase):
            raise ValueError(
                f"Invalid transition from {self.context.current_phase} to {new_phase}"
            )
        self.context.transition_to(new_phase, metadata)
        logger.info(f"Transitioned to phase: {new_phase.value}")

    def _fail(self, exc: Exception) -> None:
        logger.error(f"Protocol failed during {self.context.current_phase.value}: {exc}")
        self.context.error_message = str(exc)
        if self.context.current_phase != ProtocolPhase.ERROR:
            self.context.transition_to(ProtocolPhase.ERROR)

    def _phase(self) -> str:
        return self.context.current_phase.value

    async def run_training(self) -> TrainingResult:
        """
        Key generation, local masking, secure aggregation, masked fit and recovery.

        Returns:
            TrainingResult with every FC's share, the LC's share and the transcript.

        Raises:
            ProtocolError: If the CSP's masked fit fails (original error chained).
        """
        try:
            self._transition_to(ProtocolPhase.KEY_GENERATION)
            self.ta.distribute_training_keys(self._phase())

            self._transition_to(ProtocolPhase.MASKING)
            phase = self._phase()
            await asyncio.gather(*(fc.mask_block(phase) for fc in self.fcs))
            await self.lc.mask_targets(phase)

            self._transition_to(ProtocolPhase.AGGREGATION)
            await self.csp.aggregate(self._phase())

            self._transition_to(ProtocolPhase.MASKED_FIT)
            self.csp.fit_masked(self.config.k, self._phase())
        except Exception as e:
            self._fail(e)
            raise

        return await self.run_recovery()

    async def run_recovery(self) -> TrainingResult:
        """
        Hand every party its components without exposing any key to the CSP.

        Each FC masks its H_i with a private C_i, the LC masks G^T with the
        TA's N, the CSP answers with masked W_i, P_i, B_i (FCs), Q', U' (LC)
        and T' (everyone), and each party unmasks locally.
        """
        try:
            self._transition_to(ProtocolPhase.RECOVERY)
            phase = self._phase()
            self.ta.distribute_recovery_key(phase)
            await asyncio.gather(*(fc.submit_recovery_mask(phase) for fc in self.fcs))
            await self.lc.submit_recovery_mask(phase)
            await self.csp.serve_recovery(phase)
            shares = await asyncio.gather(*(fc.recover(phase) for fc in self.fcs))
            lc_share = await self.lc.recover(phase)

            self._transition_to(ProtocolPhase.TRAINED, {"k": self.config.k})
        except Exception as e:
            self._fail(e)
            raise

        return TrainingResult(
            fc_shares={share.index: share for share in shares},
            lc_share=lc_share,
            transcript=self.transcript,
        )

    def _require_trained(self) -> None:
        if self.context.current_phase != ProtocolPhase.TRAINED:
            raise NotTrained(f"federation is in phase {self.context.current_phase.value}, not trained")

    async def run_contribution(self) -> Dict[int, float]:
        """
        Score how much of Y each block explains on its own.

        Returns:
            FC index -> R^2 of Y explained by that block's partial prediction.
        """
        self._require_trained()
        try:
            self._transition_to(ProtocolPhase.CONTRIBUTION)
            phase = self._phase()
            self.ta.distribute_contribution_keys(self.context.contribution_rounds, phase)
            await asyncio.gather(*(fc.submit_contribution(phase) for fc in self.fcs))
            await self.lc.submit_contribution(phase)
            await self.csp.serve_contribution(phase)
            scores = await asyncio.gather(*(fc.finish_contribution(self.config.l) for fc in self.fcs))
            self._transition_to(ProtocolPhase.TRAINED)
        except Exception as e:
            self._fail(e)
            raise

        return {fc.index: score for fc, score in zip(self.fcs, scores)}

    async def run_inference(self, new_blocks: Sequence[RealMatrix]) -> InferenceResult:
        """
        Masked prediction for new rows.

        Args:
            new_blocks: Raw new blocks, one per FC, all with the same row count.

        Returns:
            InferenceResult with T_new per FC and Y_hat (original units) for the LC.

        Raises:
            NotTrained: If training has not completed.
            DimensionMismatch: If a block has the wrong width or row count.
        """
        self._require_trained()
        if len(new_blocks) != self.config.g:
            raise DimensionMismatch(f"expected {self.config.g} new blocks, got {len(new_blocks)}")
        blocks = [as_matrix(X, f"FC-{i} new block") for i, X in enumerate(new_blocks, start=1)]
        m_new = blocks[0].shape[0]
        if m_new < 1:
            raise DimensionMismatch("inference batch has no rows")
        for fc, X in zip(self.fcs, blocks):
            if X.shape[1] != fc.width:
                raise DimensionMismatch(f"{fc.name}: new block has {X.shape[1]} columns, expected {fc.width}")
            if X.shape[0] != m_new:
                raise DimensionMismatch(f"{fc.name}: new block has {X.shape[0]} rows, expected {m_new}")

        try:
            self._transition_to(ProtocolPhase.INFERENCE, {"rows": m_new})
            phase = self._phase()
            self.ta.distribute_inference_key(m_new, self.context.inference_rounds, phase)
            await asyncio.gather(*(fc.submit_inference(X, phase) for fc, X in zip(self.fcs, blocks)))
            await self.lc.prepare_inference()
            await self.csp.serve_inference(phase)
            scores = await asyncio.gather(*(fc.finish_inference() for fc in self.fcs))
            predictions = await self.lc.finish_inference()
            self._transition_to(ProtocolPhase.TRAINED)
        except Exception as e:
            self._fail(e)
            raise

        return InferenceResult(
            scores={fc.index: T for fc, T in zip(self.fcs, scores)},
            predictions=predictions,
        )


async def federated_fit_predict(
    config: FederationConfig,
    blocks: Sequence[RealMatrix],
    Y: RealMatrix,
    new_blocks: Sequence[RealMatrix],
) -> Tuple[TrainingResult, InferenceResult]:
    """Train a federation and run one inference round on new rows."""
    orchestrator = FederationOrchestrator(config, blocks, Y)
    training = await orchestrator.run_training()
    inference = await orchestrator.run_inference(new_blocks)
    return training, inference
