"""Multistage manufacturing process simulator.

Each stage has its own low-rank block of process variables and a sparse
quadratic model mapping those variables (plus some responses carried over
from the previous stage) to the stage's quality responses. The last stage's
responses are the federation target.
"""

import json
import logging
from functools import lru_cache
from pathlib import Path
from typing import Dict, List, Optional, Tuple, Union

import numpy as np
import pandas as pd
from pydantic import BaseModel, ConfigDict, Field, model_validator
from scipy.optimize import brentq

from .data_models import RealMatrix, as_matrix
from .errors import DimensionMismatch, InvalidDim, UnknownDataset
from .masking import derive_seed

logger = logging.getLogger(__name__)

# Share of variance the top components of each X block should carry
TARGET_COMPONENTS = 4
TARGET_EXPLAINED = 0.9
X_NOISE_STD = 1e-3

# Process-variable width multipliers of the five built-in datasets
DATASET_MULTIPLIERS = {1: 1, 2: 2, 3: 5, 4: 10, 5: 20}


class StageConfig(BaseModel):
    """Generation parameters of one process stage."""
    n_vars: int = Field(description="Process variables (columns of the stage's X block)")
    n_resp: int = Field(description="Quality responses produced by the stage")
    n_carry: int = Field(default=0, description="Responses of the previous stage fed forward")
    lin_range: Tuple[float, float] = Field(description="Uniform range of the linear coefficients")
    quad_range: Tuple[float, float] = Field(description="Uniform range of the quadratic coefficients")
    lin_sparsity: float = Field(description="Probability a linear coefficient is zero")
    quad_sparsity: float = Field(default=0.999, description="Probability a quadratic coefficient is zero")
    noise_std: float = Field(default=float(np.sqrt(0.001)), description="Std of the additive Gaussian noise")

    @model_validator(mode="after")
    def _check(self) -> "StageConfig":
        if self.n_vars < 1 or self.n_resp < 1 or self.n_carry < 0:
            raise ValueError("n_vars and n_resp must be >= 1, n_carry >= 0")
        for name, (low, high) in (("lin_range", self.lin_range), ("quad_range", self.quad_range)):
            if not low < high:
                raise ValueError(f"{name} needs low < high, got {(low, high)}")
        for name, p in (("lin_sparsity", self.lin_sparsity), ("quad_sparsity", self.quad_sparsity)):
            if not 0.0 <= p <= 1.0:
                raise ValueError(f"{name} must be in [0, 1], got {p}")
        if self.noise_std < 0:
            raise ValueError("noise_std must be >= 0")
        return self

    @property
    def n_lin(self) -> int:
        return self.n_vars + self.n_carry


class StageModel(BaseModel):
    """Drawn coefficients of one stage. A is n_resp x n_lin, B is n_resp x n_quad."""
    model_config = ConfigDict(arbitrary_types_allowed=True)

    A: np.ndarray
    B: np.ndarray

    @property
    def n_lin(self) -> int:
        return int(self.A.shape[1])


class SimulatedDataset(BaseModel):
    """Per-stage X blocks and responses; ``y`` is the final stage's response."""
    model_config = ConfigDict(arbitrary_types_allowed=True)

    blocks: List[np.ndarray]
    y: np.ndarray
    stage_responses: List[np.ndarray] = Field(default_factory=list)
    seed: int
    stages: List[StageConfig]
    m: int

    @property
    def block_widths(self) -> List[int]:
        return [int(block.shape[1]) for block in self.blocks]

    @property
    def l(self) -> int:
        return int(self.y.shape[1])


def _spectrum(tau: float, rank: int) -> np.ndarray:
    j = np.arange(rank)
    return np.exp(-(j ** 2) / (2.0 * tau ** 2))


def _top_share(tau: float, rank: int) -> float:
    power = _spectrum(tau, rank) ** 2
    return float(power[:TARGET_COMPONENTS].sum() / power.sum())


@lru_cache(maxsize=None)
def calibrate_width(rank: int) -> float:
    """Width of the bell-shaped spectrum that puts TARGET_EXPLAINED of the variance in the top components."""
    if rank <= TARGET_COMPONENTS:
        return np.inf
    return float(brentq(lambda tau: _top_share(tau, rank) - TARGET_EXPLAINED, 1e-3, 1e3))


def _orthonormal_columns(rows: int, cols: int, rng: np.random.Generator, center: bool) -> RealMatrix:
    draw = rng.standard_normal((rows, cols))
    if center:
        draw -= draw.mean(axis=0)
    q, _ = np.linalg.qr(draw)
    return q


def generate_low_rank_x(m: int, n: int, seed: int) -> RealMatrix:
    """
    Draw an m x n process-variable block with a bell-shaped singular spectrum.

    Returns U diag(sigma) V^T plus small Gaussian noise, scaled to unit
    average entry variance. U has zero-mean columns whenever rank < m, so the
    spectrum describes the centered data.

    Raises:
        InvalidDim: If m or n is < 1.
    """
    if m < 1 or n < 1:
        raise InvalidDim(f"block dimensions must be >= 1, got {m}x{n}")
    rank = min(m, n)
    rng = np.random.default_rng(seed)
    U = _orthonormal_columns(m, rank, rng, center=rank < m)
    V = _orthonormal_columns(n, rank, rng, center=False)

    tau = calibrate_width(rank)
    sigma = np.ones(rank) if np.isinf(tau) else _spectrum(tau, rank)
    sigma *= np.sqrt(m * n / np.sum(sigma ** 2))
    X = (U * sigma) @ V.T
    return X + X_NOISE_STD * rng.standard_normal((m, n))


def explained_variance_profile(X: RealMatrix) -> np.ndarray:
    """Cumulative explained-variance ratios of the centered matrix, one per component."""
    X = as_matrix(X, "X")
    singular = np.linalg.svd(X - X.mean(axis=0), compute_uv=False)
    power = singular ** 2
    total = power.sum()
    if total == 0.0:
        return np.ones_like(power)
    return np.cumsum(power) / total


def quadratic_pairs(n_lin: int) -> Tuple[np.ndarray, np.ndarray]:
    """Index pairs (i <= j) of all squares and pairwise products."""
    return np.triu_indices(n_lin)


def _sparse_uniform(
    rng: np.random.Generator, shape: Tuple[int, int], bounds: Tuple[float, float], sparsity: float
) -> RealMatrix:
    values = rng.uniform(bounds[0], bounds[1], size=shape)
    values[rng.random(shape) < sparsity] = 0.0
    return values


def _stage_streams(seed: int) -> Tuple[np.random.Generator, np.random.Generator]:
    model_seq, noise_seq = np.random.SeedSequence(seed).spawn(2)
    return np.random.default_rng(model_seq), np.random.default_rng(noise_seq)


def draw_stage_model(n_lin: int, cfg: StageConfig, seed: int) -> StageModel:
    """Coefficients simulate_stage uses for the same seed."""
    rng, _ = _stage_streams(seed)
    n_quad = n_lin * (n_lin + 1) // 2
    A = _sparse_uniform(rng, (cfg.n_resp, n_lin), cfg.lin_range, cfg.lin_sparsity)
    B = _sparse_uniform(rng, (cfg.n_resp, n_quad), cfg.quad_range, cfg.quad_sparsity)
    return StageModel(A=A, B=B)


def apply_stage_model(model: StageModel, U_lin: RealMatrix) -> RealMatrix:
    """Noise-free responses U_lin A^T + U_qd B^T, building only the quadratic columns in use."""
    Y = U_lin @ model.A.T
    active = np.flatnonzero(np.any(model.B != 0.0, axis=0))
    if active.size:
        left, right = quadratic_pairs(model.n_lin)
        U_qd = U_lin[:, left[active]] * U_lin[:, right[active]]
        Y = Y + U_qd @ model.B[:, active].T
    return Y


def simulate_stage(
    X_i: RealMatrix,
    Y_prev_carry: Optional[RealMatrix],
    cfg: StageConfig,
    seed: int,
) -> RealMatrix:
    """
    Responses of one stage for its process variables and carried-over responses.

    Raises:
        DimensionMismatch: If the inputs do not match the stage config.
    """
    X_i = as_matrix(X_i, "X_i")
    m = X_i.shape[0]
    if X_i.shape[1] != cfg.n_vars:
        raise DimensionMismatch(f"stage expects {cfg.n_vars} process variables, got {X_i.shape[1]}")
    if cfg.n_carry:
        if Y_prev_carry is None:
            raise DimensionMismatch(f"stage expects {cfg.n_carry} carried responses, got none")
        carry = as_matrix(Y_prev_carry, "Y_prev_carry")
        if carry.shape != (m, cfg.n_carry):
            raise DimensionMismatch(f"carried responses have shape {carry.shape}, expected {(m, cfg.n_carry)}")
        U_lin = np.hstack([X_i, carry])
    else:
        U_lin = X_i

    model = draw_stage_model(cfg.n_lin, cfg, seed)
    _, noise_rng = _stage_streams(seed)
    Y = apply_stage_model(model, U_lin)
    if cfg.noise_std > 0:
        Y = Y + noise_rng.normal(0.0, cfg.noise_std, size=Y.shape)
    return Y


def generate_dataset(stages: List[StageConfig], m: int, seed: int) -> SimulatedDataset:
    """
    Chain the stages: each draws its own X block and feeds the first
    ``n_carry`` responses of the previous stage forward.

    Raises:
        DimensionMismatch: If a stage carries more responses than its predecessor produces.
    """
    if not stages:
        raise DimensionMismatch("a dataset needs at least one stage")
    if stages[0].n_carry:
        raise DimensionMismatch("the first stage has no predecessor to carry responses from")
    for i in range(1, len(stages)):
        if stages[i].n_carry > stages[i - 1].n_resp:
            raise DimensionMismatch(
                f"stage {i + 1} carries {stages[i].n_carry} responses but stage {i} produces {stages[i - 1].n_resp}"
            )

    blocks, responses = [], []
    previous: Optional[RealMatrix] = None
    for i, cfg in enumerate(stages, start=1):
        X_i = generate_low_rank_x(m, cfg.n_vars, derive_seed(seed, f"stage-{i}-x"))
        carry = previous[:, :cfg.n_carry] if cfg.n_carry else None
        previous = simulate_stage(X_i, carry, cfg, derive_seed(seed, f"stage-{i}-model"))
        blocks.append(X_i)
        responses.append(previous)
        logger.debug("Stage %d: X %s, Y %s", i, X_i.shape, previous.shape)

    return SimulatedDataset(
        blocks=blocks, y=responses[-1], stage_responses=responses, seed=seed, stages=list(stages), m=m
    )


def builtin_config(dataset_id: int) -> List[StageConfig]:
    """
    The five built-in three-stage configurations.

    Dataset 1 has 10/20/20 process variables; datasets 2..5 multiply those
    widths by 2, 5, 10 and 20. Responses and coefficient ranges are shared.

    Raises:
        UnknownDataset: If dataset_id is not in 1..5.
    """
    if dataset_id not in DATASET_MULTIPLIERS:
        raise UnknownDataset(f"dataset id must be in 1..5, got {dataset_id}")
    factor = DATASET_MULTIPLIERS[dataset_id]
    return [
        StageConfig(n_vars=10 * factor, n_resp=5, n_carry=0,
                    lin_range=(-1.0, 2.0), quad_range=(-0.01, 0.02), lin_sparsity=0.15),
        StageConfig(n_vars=20 * factor, n_resp=6, n_carry=3,
                    lin_range=(-3.0, 3.0), quad_range=(-0.03, 0.03), lin_sparsity=0.2),
        StageConfig(n_vars=20 * factor, n_resp=7, n_carry=3,
                    lin_range=(-3.0, 2.0), quad_range=(-0.03, 0.02), lin_sparsity=0.25),
    ]


def load_stage_configs(path: Union[str, Path]) -> List[StageConfig]:
    """Stage configs from a JSON file holding a list, or an object with a ``stages`` list."""
    with open(path, "r", encoding="utf-8") as f:
        data = json.load(f)
    if isinstance(data, dict):
        data = data.get("stages", [])
    return [StageConfig.model_validate(item) for item in data]


class DatasetManifest(BaseModel):
    """Contents of ``manifest.json`` next to an exported dataset."""
    seed: int
    m: int = Field(description="Rows of every block and of y")
    stages: List[StageConfig]
    shapes: Dict[str, Tuple[int, int]] = Field(description="File stem (x1..x<g>, y) -> (rows, columns)")

    @model_validator(mode="after")
    def _check_files(self) -> "DatasetManifest":
        blocks = [name for name in self.shapes if name != "y"]
        if "y" not in self.shapes:
            raise ValueError("manifest lists no y file")
        expected = [f"x{i}" for i in range(1, len(blocks) + 1)]
        if not blocks or set(blocks) != set(expected):
            raise ValueError(f"manifest blocks must be x1..x<g>, got {sorted(blocks)}")
        return self

    def block_names(self) -> List[str]:
        return [f"x{i}" for i in range(1, len(self.shapes))]


def _frame(matrix: RealMatrix) -> pd.DataFrame:
    return pd.DataFrame(matrix, columns=[f"v{j}" for j in range(1, matrix.shape[1] + 1)])


def export_dataset(dataset: SimulatedDataset, directory: Union[str, Path]) -> Path:
    """
    Write ``x1.csv``..``x<g>.csv``, ``y.csv`` and ``manifest.json``.

    Returns:
        The directory written to.
    """
    directory = Path(directory)
    directory.mkdir(parents=True, exist_ok=True)
    shapes: Dict[str, Tuple[int, int]] = {}
    for i, block in enumerate(dataset.blocks, start=1):
        _frame(block).to_csv(directory / f"x{i}.csv", index=False, float_format="%.17g")
        shapes[f"x{i}"] = (int(block.shape[0]), int(block.shape[1]))
    _frame(dataset.y).to_csv(directory / "y.csv", index=False, float_format="%.17g")
    shapes["y"] = (int(dataset.y.shape[0]), int(dataset.y.shape[1]))

    manifest = DatasetManifest(seed=dataset.seed, m=dataset.m, stages=dataset.stages, shapes=shapes)
    with open(directory / "manifest.json", "w", encoding="utf-8") as f:
        f.write(manifest.model_dump_json(indent=2))
    logger.info("Exported dataset with %d blocks to %s", len(dataset.blocks), directory)
    return directory


def load_dataset(directory: Union[str, Path]) -> SimulatedDataset:
    """
    Read a dataset written by ``export_dataset``.

    Raises:
        FileNotFoundError: If the manifest or a CSV file is missing.
        ValidationError: If the manifest is malformed or incomplete.
        DimensionMismatch: If a file's shape disagrees with the manifest.
    """
    directory = Path(directory)
    with open(directory / "manifest.json", "r", encoding="utf-8") as f:
        manifest = DatasetManifest.model_validate_json(f.read())

    def read(name: str) -> RealMatrix:
        matrix = pd.read_csv(directory / f"{name}.csv", float_precision="round_trip").to_numpy(dtype=np.float64)
        expected = manifest.shapes[name]
        if matrix.shape != expected:
            raise DimensionMismatch(f"{directory / name}.csv has shape {matrix.shape}, expected {expected}")
        return matrix

    return SimulatedDataset(
        blocks=[read(name) for name in manifest.block_names()],
        y=read("y"),
        seed=manifest.seed,
        stages=manifest.stages,
        m=manifest.m,
    )
