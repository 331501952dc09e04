"""Mask key generation and application.

The TA draws orthogonal keys A (m x m), H (n x n, handed out as column blocks
of H^T) and G (l x l); parties draw invertible local masks. Every generator is
deterministic in its seed, and seeds for individual keys are derived from one
master seed plus a purpose label.
"""

import hashlib
import logging
from typing import List, Literal, Optional, Union, cast

import numpy as np
import scipy.linalg
from pydantic import BaseModel, ConfigDict, Field, model_validator

from .config import BLOCK_SIZE, DEFAULT_MASK_METHOD, MASK_RETRIES, MAX_MASK_CONDITION
from .data_models import RealMatrix, as_matrix
from .errors import DimensionMismatch, InvalidDim, MaskGenerationFailed

logger = logging.getLogger(__name__)

MaskMethod = Literal["dense_qr", "block"]

# P3LS_MASK_METHOD; an unknown value fails when a key is drawn
DEFAULT_METHOD = cast(MaskMethod, DEFAULT_MASK_METHOD)


class OrthogonalMatrix(BaseModel):
    """A seeded random orthogonal matrix."""
    model_config = ConfigDict(arbitrary_types_allowed=True, frozen=True)

    dim: int
    entries: np.ndarray
    method: MaskMethod
    seed: int

    @property
    def T(self) -> RealMatrix:
        return self.entries.T


class InvertibleMask(BaseModel):
    """A seeded random square matrix with a bounded condition number."""
    model_config = ConfigDict(arbitrary_types_allowed=True, frozen=True)

    dim: int
    entries: np.ndarray
    condition: float
    seed: int
    attempts: int = Field(default=1, description="Draws needed to meet the condition bound")

    def inverse(self) -> RealMatrix:
        return np.linalg.inv(self.entries)


class MaskKeySet(BaseModel):
    """TA key material for one training run."""
    model_config = ConfigDict(arbitrary_types_allowed=True, frozen=True)

    A: OrthogonalMatrix
    H_splits: List[np.ndarray] = Field(description="Column blocks of H^T, block i is n x n_i")
    G: OrthogonalMatrix
    block_widths: List[int]

    @model_validator(mode="after")
    def _check_splits(self) -> "MaskKeySet":
        n = sum(self.block_widths)
        if len(self.H_splits) != len(self.block_widths):
            raise ValueError("one H split per block is required")
        for split, width in zip(self.H_splits, self.block_widths):
            if split.shape != (n, width):
                raise ValueError(f"H split has shape {split.shape}, expected {(n, width)}")
        return self

    @property
    def H_transpose(self) -> RealMatrix:
        """H^T rebuilt from its splits."""
        return np.hstack(self.H_splits)

    def H_block(self, i: int) -> RealMatrix:
        """H_i (n_i x n) for 0-based block i."""
        return self.H_splits[i].T


def derive_seed(master_seed: int, label: str) -> int:
    """Stable 63-bit seed for one key, from a master seed and a purpose label."""
    digest = hashlib.blake2b(f"{master_seed}:{label}".encode(), digest_size=8).digest()
    return int.from_bytes(digest, "big") >> 1


def _dense_qr(dim: int, rng: np.random.Generator) -> RealMatrix:
    q, r = scipy.linalg.qr(rng.standard_normal((dim, dim)))
    signs = np.sign(np.diag(r))
    signs[signs == 0] = 1.0
    return q * signs


def generate_orthogonal(
    dim: int,
    seed: int,
    method: MaskMethod = DEFAULT_METHOD,
    block_size: int = BLOCK_SIZE,
) -> OrthogonalMatrix:
    """
    Draw a random orthogonal matrix.

    ``dense_qr`` orthogonalizes a Gaussian matrix and fixes column signs with
    the diagonal of R. ``block`` places independent dense-QR blocks of
    ``block_size`` on the diagonal (the remainder is folded into the last
    block) and shuffles the rows with a seeded permutation.

    Raises:
        InvalidDim: If dim < 1 or block_size < 1.
    """
    if dim < 1:
        raise InvalidDim(f"orthogonal matrix dimension must be >= 1, got {dim}")
    rng = np.random.default_rng(seed)
    if method == "dense_qr":
        entries = _dense_qr(dim, rng)
    elif method == "block":
        if block_size < 1:
            raise InvalidDim(f"block size must be >= 1, got {block_size}")
        sizes = [block_size] * max(dim // block_size, 1)
        sizes[-1] += dim - sum(sizes)
        entries = np.zeros((dim, dim))
        offset = 0
        for size in sizes:
            entries[offset:offset + size, offset:offset + size] = _dense_qr(size, rng)
            offset += size
        entries = entries[rng.permutation(dim)]
    else:
        raise ValueError(f"unknown orthogonal generation method: {method}")
    return OrthogonalMatrix(dim=dim, entries=entries, method=method, seed=seed)


def generate_keys(
    m: int,
    block_widths: List[int],
    l: int,
    seed: int,
    method: MaskMethod = DEFAULT_METHOD,
) -> MaskKeySet:
    """
    Generate A, H (split per block) and G for a training run.

    Raises:
        InvalidDim: If any dimension or block width is < 1.
    """
    if not block_widths or any(width < 1 for width in block_widths):
        raise InvalidDim(f"block widths must all be >= 1, got {block_widths}")
    n = sum(block_widths)
    A = generate_orthogonal(m, derive_seed(seed, "A"), method)
    H = generate_orthogonal(n, derive_seed(seed, "H"), method)
    G = generate_orthogonal(l, derive_seed(seed, "G"), method)

    bounds = np.cumsum([0, *block_widths])
    H_t = H.entries.T
    splits = [H_t[:, start:stop].copy() for start, stop in zip(bounds[:-1], bounds[1:])]
    logger.debug("Generated keys: A %dx%d, H %dx%d in %d splits, G %dx%d", m, m, n, n, len(splits), l, l)
    return MaskKeySet(A=A, H_splits=splits, G=G, block_widths=list(block_widths))


def _entries(key: Union[OrthogonalMatrix, InvertibleMask, RealMatrix]) -> RealMatrix:
    if isinstance(key, (OrthogonalMatrix, InvertibleMask)):
        return key.entries
    return as_matrix(key, "key")


def mask_features(
    X_i: RealMatrix,
    A: Union[OrthogonalMatrix, RealMatrix],
    H_i_T: RealMatrix,
) -> RealMatrix:
    """Masked block A X_i H_i, where H_i is the transpose of the block's H^T split."""
    X_i = as_matrix(X_i, "X_i")
    A_m = _entries(A)
    H_i_T = as_matrix(H_i_T, "H_i_T")
    if A_m.shape != (X_i.shape[0], X_i.shape[0]) or H_i_T.shape[1] != X_i.shape[1]:
        raise DimensionMismatch(
            f"cannot mask X_i {X_i.shape} with A {A_m.shape} and H_i^T {H_i_T.shape}"
        )
    return A_m @ X_i @ H_i_T.T


def mask_targets(
    Y: RealMatrix,
    A: Union[OrthogonalMatrix, RealMatrix],
    G: Union[OrthogonalMatrix, RealMatrix],
) -> RealMatrix:
    """Masked responses A Y G."""
    Y = as_matrix(Y, "Y")
    A_m, G_m = _entries(A), _entries(G)
    if A_m.shape != (Y.shape[0], Y.shape[0]) or G_m.shape != (Y.shape[1], Y.shape[1]):
        raise DimensionMismatch(f"cannot mask Y {Y.shape} with A {A_m.shape} and G {G_m.shape}")
    return A_m @ Y @ G_m


def generate_invertible(
    dim: int,
    seed: int,
    max_condition: float = MAX_MASK_CONDITION,
    retries: Optional[int] = None,
) -> InvertibleMask:
    """
    Draw a Gaussian square matrix, redrawing until its condition number is acceptable.

    Raises:
        InvalidDim: If dim < 1.
        MaskGenerationFailed: If no draw within the retry budget is well conditioned.
    """
    if dim < 1:
        raise InvalidDim(f"mask dimension must be >= 1, got {dim}")
    budget = MASK_RETRIES if retries is None else retries
    rng = np.random.default_rng(seed)
    for attempt in range(1, budget + 1):
        entries = rng.standard_normal((dim, dim))
        condition = float(np.linalg.cond(entries))
        if np.isfinite(condition) and condition <= max_condition:
            return InvertibleMask(dim=dim, entries=entries, condition=condition, seed=seed, attempts=attempt)
        logger.debug("Mask draw %d for dim %d rejected (condition %.3e)", attempt, dim, condition)
    raise MaskGenerationFailed(
        f"no {dim}x{dim} mask with condition <= {max_condition:.0e} after {budget} draws"
    )


def identity_mask(dim: int, seed: int = 0) -> InvertibleMask:
    """The identity as an InvertibleMask; lets tests switch a mask off."""
    return InvertibleMask(dim=dim, entries=np.eye(dim), condition=1.0, seed=seed)
