"""Data models shared by the federation parties, the orchestrator and the harness."""

from enum import Enum
from typing import Any, Dict, List, Literal, Optional

import numpy as np
import numpy.typing as npt
from pydantic import BaseModel, ConfigDict, Field, model_validator

from .config import DEFAULT_MASK_METHOD
from .errors import DimensionMismatch, NonFiniteValues

RealMatrix = npt.NDArray[np.float64]


def as_matrix(values: Any, name: str = "matrix") -> RealMatrix:
    """
    Coerce input to a finite 2-D float64 array.

    Args:
        values: Anything numpy can turn into an array.
        name: Used in error messages.

    Returns:
        A 2-D float64 array (a copy when conversion was needed).

    Raises:
        DimensionMismatch: If the input is not two-dimensional.
        NonFiniteValues: If any entry is NaN or infinite.
    """
    matrix = np.asarray(values, dtype=np.float64)
    if matrix.ndim != 2:
        raise DimensionMismatch(f"{name} must be 2-D, got {matrix.ndim}-D")
    if not np.all(np.isfinite(matrix)):
        raise NonFiniteValues(f"{name} contains NaN or Inf entries")
    return matrix


class PartyRole(str, Enum):
    """Roles a participant can play in the federation."""
    TA = "TA"
    CSP = "CSP"
    FC = "FC"
    LC = "LC"


class PartyId(BaseModel):
    """Address of one participant. FC indices start at 1."""
    model_config = ConfigDict(frozen=True)

    role: PartyRole
    index: Optional[int] = Field(default=None, description="FC index (1..g); None for other roles")

    @model_validator(mode="after")
    def _check_index(self) -> "PartyId":
        if self.role == PartyRole.FC and (self.index is None or self.index < 1):
            raise ValueError("FC parties need an index >= 1")
        if self.role != PartyRole.FC and self.index is not None:
            raise ValueError(f"{self.role.value} parties take no index")
        return self

    @classmethod
    def ta(cls) -> "PartyId":
        return cls(role=PartyRole.TA)

    @classmethod
    def csp(cls) -> "PartyId":
        return cls(role=PartyRole.CSP)

    @classmethod
    def lc(cls) -> "PartyId":
        return cls(role=PartyRole.LC)

    @classmethod
    def fc(cls, index: int) -> "PartyId":
        return cls(role=PartyRole.FC, index=index)

    @classmethod
    def parse(cls, text: str) -> "PartyId":
        """Inverse of ``str(party_id)``: "TA", "CSP", "LC" or "FC-<i>"."""
        if text.startswith("FC-"):
            return cls.fc(int(text[3:]))
        return cls(role=PartyRole(text))

    def __str__(self) -> str:
        if self.role == PartyRole.FC:
            return f"FC-{self.index}"
        return self.role.value


class FederationConfig(BaseModel):
    """Dimensions and seeds of one federation run."""
    block_widths: List[int] = Field(description="Column counts n_1..n_g of the FC blocks")
    m: int = Field(description="Number of training samples shared by all parties")
    l: int = Field(description="Number of response columns held by the LC")
    k: int = Field(description="Number of latent variables to extract")
    master_seed: int = Field(default=0, description="Root seed every key and local mask derives from")
    transport: Literal["in_memory"] = Field(default="in_memory", description="Message transport implementation")
    mask_method: Literal["dense_qr", "block"] = Field(
        default=DEFAULT_MASK_METHOD,
        validate_default=True,
        description="Orthogonal key generation method (P3LS_MASK_METHOD)",
    )
    lc_fc_index: Optional[int] = Field(
        default=None,
        description="When set, the LC is hosted by this FC, which then owns both its block and Y",
    )

    @property
    def g(self) -> int:
        return len(self.block_widths)

    @property
    def n(self) -> int:
        return sum(self.block_widths)

    @model_validator(mode="after")
    def _check_dims(self) -> "FederationConfig":
        if not self.block_widths:
            raise ValueError("a federation needs at least one feature contributor")
        if any(width < 1 for width in self.block_widths):
            raise ValueError("all block widths must be >= 1")
        if self.m < 2 or self.l < 1:
            raise ValueError("m must be >= 2 and l >= 1")
        if not 1 <= self.k <= min(self.m - 1, self.n):
            raise ValueError(
                f"k={self.k} outside [1, min(m-1, n)] = [1, {min(self.m - 1, self.n)}]"
            )
        if self.lc_fc_index is not None and not 1 <= self.lc_fc_index <= self.g:
            raise ValueError(f"lc_fc_index must be in 1..{self.g}")
        return self


class _MatrixModel(BaseModel):
    model_config = ConfigDict(arbitrary_types_allowed=True)


class MaskedModel(_MatrixModel):
    """PLS components in masked space. Only the CSP ever holds this."""
    W: np.ndarray
    T: np.ndarray
    P: np.ndarray
    Q: np.ndarray
    U: np.ndarray
    R: np.ndarray
    B: np.ndarray
    k: int


class FcModelShare(_MatrixModel):
    """What FC-i knows after training: shared scores plus its own block's components."""
    index: int
    T: np.ndarray = Field(description="Shared X-scores, m x k")
    W: np.ndarray = Field(description="Block weights W_i, n_i x k")
    P: np.ndarray = Field(description="Block loadings P_i, n_i x k")
    B: np.ndarray = Field(description="Block coefficients B_i, n_i x l (standardized units)")
    theta: np.ndarray = Field(description="Local X residuals, m x n_i")
    r2_x: float = Field(description="Explained variance of the whole X attributable to this block")
    r2_xy: Optional[float] = Field(default=None, description="Variance of Y explained by this block alone")

    def block_spe(self) -> RealMatrix:
        """Per-sample squared prediction error restricted to this block's columns."""
        return np.sum(self.theta ** 2, axis=1)


class LcModelShare(_MatrixModel):
    """What the LC knows after training."""
    T: np.ndarray
    Q: np.ndarray = Field(description="Y-loadings, l x k")
    U: np.ndarray = Field(description="Y-scores, m x k")
    phi: np.ndarray = Field(description="Y residuals, m x l")
    r2_y: float


class InferenceResult(_MatrixModel):
    """Outcome of one federated inference round."""
    scores: Dict[int, np.ndarray] = Field(description="T_new as recovered by each FC")
    predictions: np.ndarray = Field(description="Y_hat in original units, recovered by the LC")
