"""SVD-based PLS2 regression, prediction, and model-quality / monitoring metrics.

All functions are pure. ``fit`` expects standardized inputs and is used as-is
by the CSP on masked data, so it must not standardize, center or otherwise
look inside its inputs beyond the linear algebra of the algorithm.
"""

import logging
from dataclasses import dataclass, field
from typing import List, Optional, Tuple

import numpy as np
import scipy.linalg
from pydantic import BaseModel, ConfigDict
from scipy.stats import chi2, f

from .config import RANK_TOL, ROTATION_MAX_CONDITION
from .data_models import RealMatrix, as_matrix
from .errors import (
    DimensionMismatch,
    RankDeficient,
    SingularRotation,
    TooFewRows,
    ZeroVarianceColumn,
)

logger = logging.getLogger(__name__)


class StandardizationParams(BaseModel):
    """Column means and sample standard deviations (ddof=1)."""
    model_config = ConfigDict(arbitrary_types_allowed=True, frozen=True)

    means: np.ndarray
    scales: np.ndarray

    @classmethod
    def identity(cls, n: int) -> "StandardizationParams":
        """Parameters that leave data untouched (used for masked-space models)."""
        return cls(means=np.zeros(n), scales=np.ones(n))

    @property
    def width(self) -> int:
        return int(self.means.shape[0])

    def apply(self, X: RealMatrix) -> RealMatrix:
        X = as_matrix(X, "X")
        if X.shape[1] != self.width:
            raise DimensionMismatch(f"expected {self.width} columns, got {X.shape[1]}")
        return (X - self.means) / self.scales

    def invert(self, Xs: RealMatrix) -> RealMatrix:
        Xs = as_matrix(Xs, "X")
        if Xs.shape[1] != self.width:
            raise DimensionMismatch(f"expected {self.width} columns, got {Xs.shape[1]}")
        return Xs * self.scales + self.means


class PlsModel(BaseModel):
    """A fitted PLS model. Matrices are in standardized units."""
    model_config = ConfigDict(arbitrary_types_allowed=True)

    W: np.ndarray
    T: np.ndarray
    P: np.ndarray
    Q: np.ndarray
    U: np.ndarray
    R: np.ndarray
    B: np.ndarray
    k: int
    x_std: StandardizationParams
    y_std: StandardizationParams
    x_residuals: np.ndarray
    y_residuals: np.ndarray

    @property
    def n(self) -> int:
        return int(self.W.shape[0])

    @property
    def l(self) -> int:
        return int(self.Q.shape[0])

    @property
    def score_variance(self) -> np.ndarray:
        """Per-component variance of the training scores (ddof=1)."""
        return np.var(self.T, axis=0, ddof=1)


class MonitoringStats(BaseModel):
    """Per-sample Hotelling T^2 and squared prediction error."""
    model_config = ConfigDict(arbitrary_types_allowed=True)

    t2: np.ndarray
    spe: np.ndarray


class MonitoringLimits(BaseModel):
    alpha: float
    t2: float
    spe: float


@dataclass
class _FitWorkspace:
    E: np.ndarray
    F: np.ndarray
    W: List[np.ndarray] = field(default_factory=list)
    T: List[np.ndarray] = field(default_factory=list)
    P: List[np.ndarray] = field(default_factory=list)
    Q: List[np.ndarray] = field(default_factory=list)
    U: List[np.ndarray] = field(default_factory=list)


def _sum_squares(matrix: RealMatrix) -> float:
    return float(np.sum(np.square(matrix)))


def standardize(X: RealMatrix) -> Tuple[RealMatrix, StandardizationParams]:
    """
    Scale every column to mean 0 and sample standard deviation 1.

    Args:
        X: m x n data matrix.

    Returns:
        The standardized matrix and the parameters needed to repeat or undo it.

    Raises:
        TooFewRows: If m < 2.
        ZeroVarianceColumn: For the first column whose variance is zero.
    """
    X = as_matrix(X, "X")
    if X.shape[0] < 2:
        raise TooFewRows(f"standardization needs at least 2 rows, got {X.shape[0]}")
    means = X.mean(axis=0)
    scales = X.std(axis=0, ddof=1)
    zero = np.flatnonzero(scales <= np.finfo(float).eps * np.maximum(1.0, np.abs(means)))
    if zero.size:
        raise ZeroVarianceColumn(int(zero[0]))
    params = StandardizationParams(means=means, scales=scales)
    return (X - means) / scales, params


def _rotation(W: RealMatrix, P: RealMatrix) -> RealMatrix:
    PtW = P.T @ W
    condition = np.linalg.cond(PtW)
    if not np.isfinite(condition) or condition > ROTATION_MAX_CONDITION:
        raise SingularRotation(f"P^T W condition number {condition:.3e} exceeds {ROTATION_MAX_CONDITION:.0e}")
    # R = W (P^T W)^-1, solved as (P^T W)^T R^T = W^T
    return scipy.linalg.solve(PtW.T, W.T).T


def fit(
    X: RealMatrix,
    Y: RealMatrix,
    k: int,
    x_std: Optional[StandardizationParams] = None,
    y_std: Optional[StandardizationParams] = None,
) -> PlsModel:
    """
    Fit PLS2 by repeated SVD of the deflated cross-product matrix.

    Each score vector is normalized to unit length before the loadings are
    regressed on it, so P and Q carry the explained sums of squares directly.

    Args:
        X: Standardized m x n predictors.
        Y: Standardized m x l responses.
        k: Number of latent variables, 1 <= k <= min(m-1, n).
        x_std: Parameters that produced X (identity when omitted).
        y_std: Parameters that produced Y (identity when omitted).

    Returns:
        The fitted model.

    Raises:
        DimensionMismatch: If X and Y disagree on m or k is out of range.
        RankDeficient: If S vanishes before k components are extracted.
        SingularRotation: If P^T W cannot be inverted reliably.
    """
    X = as_matrix(X, "X")
    Y = as_matrix(Y, "Y")
    m, n = X.shape
    if Y.shape[0] != m:
        raise DimensionMismatch(f"X has {m} rows but Y has {Y.shape[0]}")
    if not 1 <= k <= min(m - 1, n):
        raise DimensionMismatch(f"k={k} outside [1, min(m-1, n)] = [1, {min(m - 1, n)}]")

    ws = _FitWorkspace(E=X.copy(), F=Y.copy())
    first_scale = None
    for j in range(k):
        S = ws.E.T @ ws.F
        left, singular, right_t = np.linalg.svd(S, full_matrices=False)
        # Spectral norm, unchanged by orthogonal masking of X and Y
        scale = float(singular[0]) if singular.size else 0.0
        if first_scale is None:
            first_scale = scale
        if scale == 0.0 or scale <= RANK_TOL * first_scale:
            raise RankDeficient(j, k)

        w = left[:, 0]
        v = right_t[0]
        if w[np.argmax(np.abs(w))] < 0:
            w, v = -w, -v

        t = ws.E @ w
        norm = np.linalg.norm(t)
        if norm == 0.0:
            raise RankDeficient(j, k)
        t = t / norm
        u = ws.F @ v
        p = ws.E.T @ t
        q = ws.F.T @ t

        ws.E -= np.outer(t, p)
        ws.F -= np.outer(t, q)
        for store, vec in ((ws.W, w), (ws.T, t), (ws.P, p), (ws.Q, q), (ws.U, u)):
            store.append(vec)

    W = np.column_stack(ws.W)
    P = np.column_stack(ws.P)
    Q = np.column_stack(ws.Q)
    R = _rotation(W, P)
    logger.debug("Fitted PLS with k=%d on %dx%d / %d responses", k, m, n, Y.shape[1])

    return PlsModel(
        W=W,
        T=np.column_stack(ws.T),
        P=P,
        Q=Q,
        U=np.column_stack(ws.U),
        R=R,
        B=R @ Q.T,
        k=k,
        x_std=x_std if x_std is not None else StandardizationParams.identity(n),
        y_std=y_std if y_std is not None else StandardizationParams.identity(Y.shape[1]),
        x_residuals=ws.E,
        y_residuals=ws.F,
    )


def fit_standardized(X: RealMatrix, Y: RealMatrix, k: int) -> PlsModel:
    """Standardize raw X and Y, then fit."""
    Xs, x_std = standardize(X)
    Ys, y_std = standardize(Y)
    return fit(Xs, Ys, k, x_std=x_std, y_std=y_std)


def transform(model: PlsModel, X_new: RealMatrix) -> RealMatrix:
    """Scores T_new = standardize(X_new) R."""
    X_new = as_matrix(X_new, "X_new")
    if X_new.shape[1] != model.n:
        raise DimensionMismatch(f"model expects {model.n} columns, got {X_new.shape[1]}")
    return model.x_std.apply(X_new) @ model.R


def predict(model: PlsModel, X_new: RealMatrix) -> RealMatrix:
    """Predictions X_new B, returned in the original units of Y."""
    X_new = as_matrix(X_new, "X_new")
    if X_new.shape[1] != model.n:
        raise DimensionMismatch(f"model expects {model.n} columns, got {X_new.shape[1]}")
    return model.y_std.invert(model.x_std.apply(X_new) @ model.B)


def _check_same_shape(Y: RealMatrix, Yhat: RealMatrix) -> Tuple[RealMatrix, RealMatrix]:
    Y = as_matrix(Y, "Y")
    Yhat = as_matrix(Yhat, "Yhat")
    if Y.shape != Yhat.shape:
        raise DimensionMismatch(f"shapes differ: {Y.shape} vs {Yhat.shape}")
    return Y, Yhat


def r2_score(Y: RealMatrix, Yhat: RealMatrix) -> float:
    """
    Coefficient of determination, averaged uniformly over response columns.

    Each column uses its own mean as the baseline.

    Raises:
        DimensionMismatch: If the shapes differ.
        ZeroVarianceColumn: If a column of Y is constant.
    """
    Y, Yhat = _check_same_shape(Y, Yhat)
    ss_tot = np.sum((Y - Y.mean(axis=0)) ** 2, axis=0)
    constant = np.flatnonzero(ss_tot == 0.0)
    if constant.size:
        raise ZeroVarianceColumn(int(constant[0]))
    ss_res = np.sum((Y - Yhat) ** 2, axis=0)
    return float(np.mean(1.0 - ss_res / ss_tot))


def explained_variance_x(P_i: RealMatrix, m: int, n: int) -> float:
    """Share of the total (standardized) X variance explained through block loadings P_i."""
    P_i = as_matrix(P_i, "P_i")
    if m < 2 or n < 1 or P_i.shape[0] > n:
        raise DimensionMismatch(f"invalid dimensions m={m}, n={n} for P_i of shape {P_i.shape}")
    return _sum_squares(P_i) / ((m - 1) * n)


def explained_variance_y(Q: RealMatrix, m: int, l: int) -> float:
    """Share of the total (standardized) Y variance explained by the model."""
    Q = as_matrix(Q, "Q")
    if m < 2 or Q.shape[0] != l:
        raise DimensionMismatch(f"invalid dimensions m={m}, l={l} for Q of shape {Q.shape}")
    return _sum_squares(Q) / ((m - 1) * l)


def r2_block_y(Y: RealMatrix, Yhat_i: RealMatrix, m: int, l: int) -> float:
    """Variance of Y explained by one block's partial prediction, 1 - SS(Y - Yhat_i)/(m l)."""
    Y, Yhat_i = _check_same_shape(Y, Yhat_i)
    if Y.shape != (m, l):
        raise DimensionMismatch(f"expected shape {(m, l)}, got {Y.shape}")
    return 1.0 - _sum_squares(Y - Yhat_i) / (m * l)


def monitoring_stats(model: PlsModel, X_new: RealMatrix) -> MonitoringStats:
    """Hotelling T^2 in the score space and SPE in the residual space of X."""
    scores = transform(model, X_new)
    t2 = np.sum(scores ** 2 / model.score_variance, axis=1)
    spe = np.sum(spe_contributions(model, X_new), axis=1)
    return MonitoringStats(t2=t2, spe=spe)


def spe_contributions(model: PlsModel, X_new: RealMatrix) -> RealMatrix:
    """Per-variable squared residuals; row sums equal SPE."""
    Xs = model.x_std.apply(as_matrix(X_new, "X_new"))
    residual = Xs - (Xs @ model.R) @ model.P.T
    return residual ** 2


def monitoring_limits(model: PlsModel, alpha: float = 0.99) -> MonitoringLimits:
    """
    Control limits for T^2 (scaled F) and SPE (Box's weighted chi-square).

    The SPE limit is matched to the mean and variance of the training residuals.
    """
    if not 0.0 < alpha < 1.0:
        raise ValueError("alpha must be strictly between 0 and 1")
    m, k = model.T.shape
    if m <= k:
        raise TooFewRows(f"need more than k={k} training rows for a T^2 limit")
    t2_limit = k * (m ** 2 - 1) / (m * (m - k)) * f.ppf(alpha, k, m - k)

    spe_train = np.sum(model.x_residuals ** 2, axis=1)
    mean, var = float(np.mean(spe_train)), float(np.var(spe_train))
    if var == 0.0:
        spe_limit = mean
    else:
        g, h = var / (2 * mean), 2 * mean ** 2 / var
        spe_limit = g * chi2.ppf(alpha, h)
    return MonitoringLimits(alpha=alpha, t2=float(t2_limit), spe=float(spe_limit))


def select_k(
    X_tr: RealMatrix,
    Y_tr: RealMatrix,
    X_val: RealMatrix,
    Y_val: RealMatrix,
    k_max: int,
) -> int:
    """
    Pick the number of latent variables with the best validation R^2.

    Ties go to the smaller k. If the training data runs out of rank before
    k_max, the curve stops at the last extractable k.
    """
    if k_max < 1:
        raise ValueError("k_max must be >= 1")
    best_k, best_r2 = 1, -np.inf
    for k in range(1, k_max + 1):
        try:
            model = fit_standardized(X_tr, Y_tr, k)
        except RankDeficient:
            if k == 1:
                raise
            logger.info("Validation curve stops at k=%d (rank exhausted)", k - 1)
            break
        score = r2_score(Y_val, predict(model, X_val))
        if score > best_r2:
            best_k, best_r2 = k, score
    return best_k
