"""Unit tests for mask key generation and application."""

import numpy as np
import pytest
from numpy.testing import assert_allclose

from p3ls.config import ORTHOGONALITY_TOL
from p3ls.errors import DimensionMismatch, InvalidDim, MaskGenerationFailed
from p3ls.masking import (
    derive_seed,
    generate_invertible,
    generate_keys,
    generate_orthogonal,
    identity_mask,
    mask_features,
    mask_targets,
)


def orthogonality_error(Q):
    return np.max(np.abs(Q.T @ Q - np.eye(Q.shape[0])))


@pytest.mark.parametrize("method", ["dense_qr", "block"])
@pytest.mark.parametrize("dim", [1, 2, 7, 64, 130])
def test_orthogonal_keys(method, dim):
    Q = generate_orthogonal(dim, seed=dim, method=method, block_size=64)
    assert Q.entries.shape == (dim, dim)
    assert orthogonality_error(Q.entries) < ORTHOGONALITY_TOL


def test_block_method_mixes_rows():
    Q = generate_orthogonal(10, seed=3, method="block", block_size=4)
    assert orthogonality_error(Q.entries) < ORTHOGONALITY_TOL
    # Rows are permuted, so the matrix is not block diagonal in general
    assert not np.allclose(Q.entries[:4, 4:], 0.0) or not np.allclose(Q.entries[4:, :4], 0.0)


def test_orthogonal_is_deterministic():
    a = generate_orthogonal(20, seed=11)
    b = generate_orthogonal(20, seed=11)
    c = generate_orthogonal(20, seed=12)
    np.testing.assert_array_equal(a.entries, b.entries)
    assert not np.allclose(a.entries, c.entries)


def test_orthogonal_rejects_bad_dims():
    with pytest.raises(InvalidDim):
        generate_orthogonal(0, seed=0)
    with pytest.raises(InvalidDim):
        generate_orthogonal(5, seed=0, method="block", block_size=0)
    with pytest.raises(ValueError):
        generate_orthogonal(5, seed=0, method="householder")


def test_generate_keys_shapes():
    keys = generate_keys(m=12, block_widths=[2, 3, 4], l=2, seed=5)
    assert keys.A.entries.shape == (12, 12)
    assert keys.G.entries.shape == (2, 2)
    assert [split.shape for split in keys.H_splits] == [(9, 2), (9, 3), (9, 4)]
    assert keys.H_block(1).shape == (3, 9)
    assert orthogonality_error(keys.H_transpose) < ORTHOGONALITY_TOL


def test_generate_keys_rejects_empty_block():
    with pytest.raises(InvalidDim):
        generate_keys(m=5, block_widths=[2, 0], l=1, seed=0)


def test_masking_preserves_singular_values():
    rng = np.random.default_rng(0)
    X = rng.standard_normal((15, 4))
    keys = generate_keys(m=15, block_widths=[4], l=1, seed=1)
    masked = mask_features(X, keys.A, keys.H_splits[0])
    assert_allclose(
        np.linalg.svd(masked, compute_uv=False),
        np.linalg.svd(X, compute_uv=False),
        atol=1e-8,
    )


@pytest.mark.parametrize("method", ["dense_qr", "block"])
def test_orthogonal_keys_have_unit_determinant(method):
    for dim in (1, 5, 70):
        Q = generate_orthogonal(dim, seed=dim + 1, method=method, block_size=16)
        assert abs(np.linalg.det(Q.entries)) == pytest.approx(1.0, abs=1e-8)


def test_masked_cross_product_singular_vectors_map_back():
    rng = np.random.default_rng(4)
    widths = [2, 3]
    blocks = [rng.standard_normal((20, w)) for w in widths]
    X = np.hstack(blocks)
    Y = rng.standard_normal((20, 3))
    keys = generate_keys(m=20, block_widths=widths, l=3, seed=6)
    H, G = keys.H_transpose.T, keys.G.entries
    X_masked = sum(mask_features(X_i, keys.A, split) for X_i, split in zip(blocks, keys.H_splits))
    Y_masked = mask_targets(Y, keys.A, keys.G)

    U, s, Vt = np.linalg.svd(X.T @ Y, full_matrices=False)
    U_m, s_m, Vt_m = np.linalg.svd(X_masked.T @ Y_masked, full_matrices=False)
    assert_allclose(s_m, s, atol=1e-10)

    U_back, V_back = H @ U_m, G @ Vt_m.T
    signs = np.sign(np.sum(U * U_back, axis=0))
    assert_allclose(U_back * signs, U, atol=1e-8)
    assert_allclose(V_back * signs, Vt.T, atol=1e-8)


def test_feature_masking_preserves_frobenius_norm():
    rng = np.random.default_rng(5)
    widths = [3, 1, 4]
    blocks = [rng.standard_normal((11, w)) for w in widths]
    keys = generate_keys(m=11, block_widths=widths, l=1, seed=8)
    masked = [mask_features(X_i, keys.A, split) for X_i, split in zip(blocks, keys.H_splits)]
    for X_i, X_i_masked in zip(blocks, masked):
        assert np.linalg.norm(X_i_masked) == pytest.approx(np.linalg.norm(X_i), rel=1e-12)
    assert np.linalg.norm(sum(masked)) == pytest.approx(np.linalg.norm(np.hstack(blocks)), rel=1e-12)


def test_target_masking_round_trip():
    rng = np.random.default_rng(6)
    Y = rng.standard_normal((9, 4))
    keys = generate_keys(m=9, block_widths=[2], l=4, seed=3)
    A, G = keys.A.entries, keys.G.entries
    Y_masked = mask_targets(Y, keys.A, keys.G)
    assert_allclose(A.T @ Y_masked @ G.T, Y, atol=1e-12)
    assert np.linalg.norm(Y_masked) == pytest.approx(np.linalg.norm(Y), rel=1e-12)


def test_block_masks_sum_to_full_mask():
    rng = np.random.default_rng(1)
    widths = [2, 3]
    blocks = [rng.standard_normal((8, w)) for w in widths]
    keys = generate_keys(m=8, block_widths=widths, l=1, seed=2)
    total = sum(mask_features(X_i, keys.A, split) for X_i, split in zip(blocks, keys.H_splits))
    H = keys.H_transpose.T
    assert_allclose(total, keys.A.entries @ np.hstack(blocks) @ H, atol=1e-10)


def test_mask_shape_checks():
    keys = generate_keys(m=6, block_widths=[2], l=2, seed=0)
    with pytest.raises(DimensionMismatch):
        mask_features(np.ones((5, 2)), keys.A, keys.H_splits[0])
    with pytest.raises(DimensionMismatch):
        mask_targets(np.ones((6, 3)), keys.A, keys.G)


def test_invertible_mask_condition_bound():
    mask = generate_invertible(6, seed=4, max_condition=1e6)
    assert mask.condition <= 1e6
    assert mask.attempts >= 1
    assert_allclose(mask.entries @ mask.inverse(), np.eye(6), atol=1e-8)


def test_invertible_mask_scalar():
    mask = generate_invertible(1, seed=0)
    assert mask.entries.shape == (1, 1)
    assert mask.entries[0, 0] != 0.0


def test_invertible_mask_gives_up():
    with pytest.raises(MaskGenerationFailed):
        generate_invertible(4, seed=0, max_condition=1.0, retries=3)


def test_invertible_mask_rejects_zero_dim():
    with pytest.raises(InvalidDim):
        generate_invertible(0, seed=0)


def test_identity_mask():
    mask = identity_mask(3)
    np.testing.assert_array_equal(mask.entries, np.eye(3))


def test_derive_seed():
    assert derive_seed(1, "A") == derive_seed(1, "A")
    assert derive_seed(1, "A") != derive_seed(1, "G")
    assert derive_seed(1, "A") != derive_seed(2, "A")
    assert 0 <= derive_seed(123, "fc-1-local") < 2 ** 63
