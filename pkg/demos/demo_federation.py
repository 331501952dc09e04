"""
Demonstration script for the federation orchestrator.
Trains a three-company P3LS model on simulated process data, scores each
block's contribution, predicts new rows and audits the transcript.
"""

import asyncio
import logging

import numpy as np

from p3ls import audit_views
from p3ls import pls_core
from p3ls.data_models import FederationConfig
from p3ls.orchestrator import FederationOrchestrator
from p3ls.simulator import builtin_config, generate_dataset

# Configure logging to show orchestrator progress
logging.basicConfig(
    level=logging.INFO,
    format='%(asctime)s - %(name)s - %(levelname)s - %(message)s'
)


async def demo_federation() -> None:
    """Run the federation demo."""

    print("=" * 80)
    print("P3LS FEDERATION DEMO")
    print("=" * 80)

    # 1. Simulate a three-stage process; each stage belongs to one company
    dataset = generate_dataset(builtin_config(1), m=300, seed=7)
    train_rows, new_rows = slice(0, 250), slice(250, 300)
    blocks = [block[train_rows] for block in dataset.blocks]
    Y = dataset.y[train_rows]
    print(f"\nBlocks: {dataset.block_widths}, responses: {dataset.l}, training rows: {Y.shape[0]}")

    # 2. Configure the federation; the last company also holds the quality labels
    config = FederationConfig(
        block_widths=dataset.block_widths,
        m=Y.shape[0],
        l=dataset.l,
        k=4,
        master_seed=2024,
        lc_fc_index=3,
    )
    orchestrator = FederationOrchestrator(config, blocks, Y)

    # 3. Training and recovery
    print("\nStarting training...")
    training = await orchestrator.run_training()
    for index, share in training.fc_shares.items():
        print(f"  FC-{index}: W {share.W.shape}, B {share.B.shape}, R2_X share {share.r2_x:.4f}")
    print(f"  LC: Q {training.lc_share.Q.shape}, R2_Y {training.lc_share.r2_y:.4f}")

    # 4. Compare with a centralized fit the companies could never run
    cen = pls_core.fit_standardized(np.hstack(blocks), Y, config.k)
    B_fed = np.vstack([training.fc_shares[i].B for i in sorted(training.fc_shares)])
    print(f"\nMax |B_fed - B_cen|: {np.max(np.abs(B_fed - cen.B)):.2e}")

    # 5. Contribution of each block to the final quality
    scores = await orchestrator.run_contribution()
    print("\nBlock contributions (R2 of Y):")
    for index, score in scores.items():
        print(f"  FC-{index}: {score:.4f}")

    # 6. Masked inference on new rows
    new_blocks = [block[new_rows] for block in dataset.blocks]
    inference = await orchestrator.run_inference(new_blocks)
    r2 = pls_core.r2_score(dataset.y[new_rows], inference.predictions)
    print(f"\nInference on {inference.predictions.shape[0]} new rows: R2 = {r2:.4f}")

    # 7. Audit who saw what
    report = audit_views(orchestrator.transcript)
    print("\n" + "=" * 80)
    print("AUDIT")
    print("=" * 80)
    print(f"  Messages: {len(orchestrator.transcript)}")
    for party, view in sorted(report.views.items()):
        print(f"  {party:5s} received {sorted(set(view.received))}")
    print(f"  Violations: {report.violations or 'none'}")

    print("\nPhase history:")
    for transition in orchestrator.context.phase_history:
        print(f"    {transition.from_phase.value} -> {transition.to_phase.value}")


if __name__ == "__main__":
    asyncio.run(demo_federation())
