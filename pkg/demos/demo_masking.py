"""
Demonstration script for the masking keys.
Shows what the CSP sees: masked blocks keep the singular values of the data
but none of its entries, and a PLS fit on the masked data maps back exactly.
"""

from typing import Tuple

import numpy as np

from p3ls import pls_core, secure_aggregate
from p3ls.masking import generate_keys, mask_features, mask_targets


def demo_masking(
    m: int = 40, widths: Tuple[int, ...] = (3, 4), l: int = 2, k: int = 3, seed: int = 5
) -> None:
    """Mask two blocks, fit in masked space and unmask the coefficients."""

    print("=" * 80)
    print("MASKING DEMO")
    print("=" * 80)

    rng = np.random.default_rng(seed)
    blocks = [pls_core.standardize(rng.standard_normal((m, w)))[0] for w in widths]
    X = np.hstack(blocks)
    Y, _ = pls_core.standardize(X @ rng.standard_normal((X.shape[1], l)) + 0.1 * rng.standard_normal((m, l)))

    keys = generate_keys(m=m, block_widths=list(widths), l=l, seed=seed)
    masked_blocks = [mask_features(X_i, keys.A, H_i) for X_i, H_i in zip(blocks, keys.H_splits)]
    X_masked = secure_aggregate(masked_blocks)
    Y_masked = mask_targets(Y, keys.A, keys.G)

    print(f"\nFirst row of X:        {np.round(X[0], 3)}")
    print(f"First row of X':       {np.round(X_masked[0], 3)}")
    print(f"Singular values of X:  {np.round(np.linalg.svd(X, compute_uv=False), 4)}")
    print(f"Singular values of X': {np.round(np.linalg.svd(X_masked, compute_uv=False), 4)}")

    masked = pls_core.fit(X_masked, Y_masked, k)
    plain = pls_core.fit(X, Y, k)
    for i in range(len(widths)):
        B_i = keys.H_block(i) @ masked.B @ keys.G.T
        offset = sum(widths[:i])
        error = np.max(np.abs(B_i - plain.B[offset:offset + widths[i]]))
        print(f"\nBlock {i + 1}: max |H_i B' G^T - B_i| = {error:.2e}")


if __name__ == "__main__":
    demo_masking()
