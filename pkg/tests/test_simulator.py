"""Tests for the multistage process simulator."""

import json

import numpy as np
import pytest
from numpy.testing import assert_allclose
from pydantic import ValidationError

from p3ls import pls_core
from p3ls.errors import DimensionMismatch, InvalidDim, UnknownDataset
from p3ls.masking import derive_seed
from p3ls.simulator import (
    DATASET_MULTIPLIERS,
    StageConfig,
    apply_stage_model,
    builtin_config,
    calibrate_width,
    draw_stage_model,
    explained_variance_profile,
    export_dataset,
    generate_dataset,
    generate_low_rank_x,
    load_dataset,
    load_stage_configs,
    quadratic_pairs,
    simulate_stage,
)


def linear_stage(n_vars=4, n_resp=3, n_carry=0, **overrides):
    params = dict(
        n_vars=n_vars,
        n_resp=n_resp,
        n_carry=n_carry,
        lin_range=(-1.0, 2.0),
        quad_range=(-0.01, 0.02),
        lin_sparsity=0.0,
        quad_sparsity=1.0,
        noise_std=0.0,
    )
    params.update(overrides)
    return StageConfig(**params)


def with_intercept_r2(X, Y):
    design = np.hstack([np.ones((X.shape[0], 1)), X])
    coef, *_ = np.linalg.lstsq(design, Y, rcond=None)
    return pls_core.r2_score(Y, design @ coef)


# Low-rank process variables


@pytest.mark.parametrize("n", [5, 10, 20, 50, 200])
def test_top_components_explain_target_share(n):
    X = generate_low_rank_x(400, n, seed=n)
    share = explained_variance_profile(X)[3]
    assert 0.87 <= share <= 0.93


def test_calibration_hits_target_exactly():
    for rank in (5, 10, 100):
        tau = calibrate_width(rank)
        sigma = np.exp(-np.arange(rank) ** 2 / (2 * tau ** 2))
        power = sigma ** 2
        assert power[:4].sum() / power.sum() == pytest.approx(0.9, abs=1e-6)
    assert np.isinf(calibrate_width(4))


def test_narrow_blocks_have_flat_spectrum():
    X = generate_low_rank_x(300, 3, seed=1)
    assert_allclose(explained_variance_profile(X), [1 / 3, 2 / 3, 1.0], atol=0.01)


def test_single_column_block():
    X = generate_low_rank_x(10, 1, seed=0)
    assert X.shape == (10, 1)
    assert np.all(np.isfinite(X))


def test_low_rank_x_is_deterministic():
    np.testing.assert_array_equal(generate_low_rank_x(30, 8, 5), generate_low_rank_x(30, 8, 5))
    assert not np.allclose(generate_low_rank_x(30, 8, 5), generate_low_rank_x(30, 8, 6))


def test_low_rank_x_rejects_bad_dims():
    with pytest.raises(InvalidDim):
        generate_low_rank_x(0, 3, 0)
    with pytest.raises(InvalidDim):
        generate_low_rank_x(3, 0, 0)


# Stage models


def test_quadratic_pairs_cover_squares_and_products():
    left, right = quadratic_pairs(3)
    assert list(zip(left.tolist(), right.tolist())) == [(0, 0), (0, 1), (0, 2), (1, 1), (1, 2), (2, 2)]


def test_noiseless_linear_stage_is_exact():
    rng = np.random.default_rng(0)
    X = rng.standard_normal((50, 4))
    cfg = linear_stage()
    Y = simulate_stage(X, None, cfg, seed=3)
    model = draw_stage_model(cfg.n_lin, cfg, seed=3)
    assert_allclose(Y, X @ model.A.T, atol=1e-12)


def test_linear_coefficients_recovered_by_least_squares():
    rng = np.random.default_rng(1)
    X = rng.standard_normal((200, 5))
    cfg = linear_stage(n_vars=5, n_resp=2)
    Y = simulate_stage(X, None, cfg, seed=11)
    coef, *_ = np.linalg.lstsq(X, Y, rcond=None)
    assert_allclose(coef.T, draw_stage_model(5, cfg, seed=11).A, atol=1e-10)


def test_quadratic_terms_match_explicit_products():
    rng = np.random.default_rng(2)
    U = rng.standard_normal((20, 3))
    cfg = linear_stage(n_vars=3, n_resp=2, quad_sparsity=0.0)
    model = draw_stage_model(3, cfg, seed=4)
    products = np.column_stack([U[:, i] * U[:, j] for i in range(3) for j in range(i, 3)])
    assert_allclose(apply_stage_model(model, U), U @ model.A.T + products @ model.B.T, atol=1e-12)


def test_noise_level():
    rng = np.random.default_rng(3)
    X = rng.standard_normal((5000, 2))
    cfg = linear_stage(n_vars=2, n_resp=1, noise_std=0.1)
    clean = X @ draw_stage_model(2, cfg, seed=8).A.T
    noise = simulate_stage(X, None, cfg, seed=8) - clean
    assert noise.std() == pytest.approx(0.1, rel=0.05)


def test_coefficient_sparsity():
    cfg = linear_stage(n_vars=400, n_resp=50, lin_sparsity=0.2, quad_sparsity=0.999)
    model = draw_stage_model(cfg.n_lin, cfg, seed=0)
    assert np.mean(model.A == 0.0) == pytest.approx(0.2, abs=0.02)
    assert model.B.shape == (50, 400 * 401 // 2)
    assert np.mean(model.B == 0.0) == pytest.approx(0.999, abs=0.001)
    nonzero = model.A[model.A != 0.0]
    assert nonzero.min() >= -1.0 and nonzero.max() < 2.0


def test_stage_rejects_wrong_inputs():
    cfg = linear_stage(n_carry=2)
    X = np.zeros((10, 4))
    with pytest.raises(DimensionMismatch):
        simulate_stage(X, None, cfg, seed=0)
    with pytest.raises(DimensionMismatch):
        simulate_stage(X, np.zeros((10, 3)), cfg, seed=0)
    with pytest.raises(DimensionMismatch):
        simulate_stage(np.zeros((10, 5)), np.zeros((10, 2)), cfg, seed=0)


def test_stage_config_validation():
    with pytest.raises(ValidationError):
        linear_stage(lin_range=(2.0, 1.0))
    with pytest.raises(ValidationError):
        linear_stage(lin_sparsity=1.5)
    with pytest.raises(ValidationError):
        linear_stage(n_vars=0)


# Datasets


@pytest.mark.parametrize("dataset_id", [1, 2, 3])
def test_builtin_dataset_shapes(dataset_id):
    factor = DATASET_MULTIPLIERS[dataset_id]
    dataset = generate_dataset(builtin_config(dataset_id), m=40, seed=0)
    assert dataset.block_widths == [10 * factor, 20 * factor, 20 * factor]
    assert dataset.y.shape == (40, 7)
    assert [r.shape[1] for r in dataset.stage_responses] == [5, 6, 7]
    np.testing.assert_array_equal(dataset.y, dataset.stage_responses[-1])


def test_builtin_stage_parameters():
    stages = builtin_config(1)
    assert [s.n_carry for s in stages] == [0, 3, 3]
    assert [s.lin_sparsity for s in stages] == [0.15, 0.2, 0.25]
    assert stages[1].quad_range == (-0.03, 0.03)
    assert all(s.quad_sparsity == 0.999 for s in stages)
    assert stages[0].noise_std == pytest.approx(np.sqrt(0.001))


@pytest.mark.parametrize("dataset_id", [0, 6, -1])
def test_unknown_dataset(dataset_id):
    with pytest.raises(UnknownDataset):
        builtin_config(dataset_id)


def test_responses_carry_forward():
    stages = builtin_config(1)
    dataset = generate_dataset(stages, m=30, seed=9)
    expected = simulate_stage(
        dataset.blocks[1],
        dataset.stage_responses[0][:, :3],
        stages[1],
        derive_seed(9, "stage-2-model"),
    )
    np.testing.assert_array_equal(dataset.stage_responses[1], expected)


def test_carry_chain_is_validated():
    first = linear_stage(n_resp=2)
    with pytest.raises(DimensionMismatch):
        generate_dataset([first, linear_stage(n_carry=3)], m=10, seed=0)
    with pytest.raises(DimensionMismatch):
        generate_dataset([linear_stage(n_carry=1)], m=10, seed=0)
    with pytest.raises(DimensionMismatch):
        generate_dataset([], m=10, seed=0)


def test_dataset_is_deterministic():
    a = generate_dataset(builtin_config(1), m=25, seed=4)
    b = generate_dataset(builtin_config(1), m=25, seed=4)
    for x, y in zip(a.blocks, b.blocks):
        np.testing.assert_array_equal(x, y)
    np.testing.assert_array_equal(a.y, b.y)


@pytest.mark.parametrize("seed", range(5))
def test_earlier_stages_inform_final_quality(seed):
    dataset = generate_dataset(builtin_config(1), m=300, seed=seed)
    r2_all = with_intercept_r2(np.hstack(dataset.blocks), dataset.y)
    r2_last = with_intercept_r2(dataset.blocks[-1], dataset.y)
    assert r2_all - r2_last > 0.3


def test_export_and_load_round_trip(tmp_path):
    dataset = generate_dataset(builtin_config(1), m=20, seed=2)
    export_dataset(dataset, tmp_path / "ds1")
    assert sorted(p.name for p in (tmp_path / "ds1").iterdir()) == [
        "manifest.json", "x1.csv", "x2.csv", "x3.csv", "y.csv"
    ]

    loaded = load_dataset(tmp_path / "ds1")
    for original, restored in zip(dataset.blocks, loaded.blocks):
        np.testing.assert_array_equal(original, restored)
    np.testing.assert_array_equal(dataset.y, loaded.y)
    assert loaded.seed == 2
    assert loaded.stages == dataset.stages


def test_load_dataset_checks_shapes(tmp_path):
    dataset = generate_dataset(builtin_config(1), m=12, seed=0)
    export_dataset(dataset, tmp_path)
    manifest = json.loads((tmp_path / "manifest.json").read_text())
    manifest["shapes"]["y"] = [13, 7]
    (tmp_path / "manifest.json").write_text(json.dumps(manifest))
    with pytest.raises(DimensionMismatch):
        load_dataset(tmp_path)


@pytest.mark.parametrize("broken", [
    lambda manifest: manifest.pop("shapes"),
    lambda manifest: manifest["shapes"].pop("y"),
    lambda manifest: manifest["shapes"].pop("x2"),
    lambda manifest: manifest["shapes"].update(y=[12]),
])
def test_load_dataset_rejects_malformed_manifest(tmp_path, broken):
    dataset = generate_dataset(builtin_config(1), m=12, seed=0)
    export_dataset(dataset, tmp_path)
    manifest = json.loads((tmp_path / "manifest.json").read_text())
    broken(manifest)
    (tmp_path / "manifest.json").write_text(json.dumps(manifest))
    with pytest.raises(ValidationError):
        load_dataset(tmp_path)


def test_load_stage_configs(tmp_path):
    stages = [s.model_dump() for s in builtin_config(1)]
    (tmp_path / "list.json").write_text(json.dumps(stages))
    (tmp_path / "object.json").write_text(json.dumps({"stages": stages}))
    assert load_stage_configs(tmp_path / "list.json") == builtin_config(1)
    assert load_stage_configs(tmp_path / "object.json") == builtin_config(1)
