"""Experiment harness: centralized, local-only and federated PLS on simulated process data.

Each repetition splits the data 60/20/20, picks k per model on the
validation rows and scores the chosen model on the test rows. For the
federated model it also measures how far its components are from a
centralized fit with the same k.
"""

import logging
import time
from pathlib import Path
from typing import Callable, Dict, List, Literal, Optional, Sequence, Set, Tuple

import numpy as np
from pydantic import BaseModel, Field, model_validator

from . import pls_core
from .config import DEFAULT_K_MAX, DEFAULT_REPETITIONS, DEFAULT_ROWS
from .data_models import FederationConfig, RealMatrix
from .errors import ExperimentError, ProtocolError, RankDeficient, TooFewRows
from .masking import derive_seed
from .orchestrator import FederationOrchestrator, TrainingResult
from .simulator import SimulatedDataset, builtin_config, generate_dataset, load_dataset

logger = logging.getLogger(__name__)

ModelName = Literal["cen", "local", "p3ls"]
ALL_MODELS: List[ModelName] = ["cen", "local", "p3ls"]


class ExperimentConfig(BaseModel):
    """What to run and how often."""
    datasets: List[str] = Field(description="Built-in dataset ids ('1'..'5') or directories written by export_dataset")
    repetitions: int = Field(default=DEFAULT_REPETITIONS, description="Independent train/validation/test splits")
    seed: int = Field(default=0, description="Master seed for data generation, splits and protocol keys")
    k_max: int = Field(default=DEFAULT_K_MAX, description="Largest number of latent variables tried")
    output_dir: Optional[str] = Field(default=None, description="Where report.json, summary.csv and transcripts go")
    models: List[ModelName] = Field(default_factory=lambda: list(ALL_MODELS))
    rows: int = Field(default=DEFAULT_ROWS, description="Rows generated for built-in datasets")

    @model_validator(mode="after")
    def _check(self) -> "ExperimentConfig":
        if self.repetitions < 1:
            raise ValueError("repetitions must be >= 1")
        if self.k_max < 1:
            raise ValueError("k_max must be >= 1")
        return self


class ModelResult(BaseModel):
    """Outcome of one model in one repetition."""
    r2: float = Field(description="Test R^2, averaged over response columns")
    k: int
    fit_time: float = Field(description="Seconds spent fitting the chosen model")
    inference_time: float = Field(description="Seconds spent predicting the test rows")
    contributions: Dict[int, float] = Field(
        default_factory=dict, description="Per-block R^2 of Y (federated model only)"
    )


class ComponentDistances(BaseModel):
    """Mean squared distances between sign-aligned federated and centralized components."""
    T: float
    W: List[float]
    P: List[float]
    Q: float
    B: float

    def max(self) -> float:
        return max(self.T, self.Q, self.B, *self.W, *self.P)


class RepetitionRecord(BaseModel):
    repetition: int
    results: Dict[str, ModelResult] = Field(default_factory=dict)
    distances: Optional[ComponentDistances] = None


class ModelSummary(BaseModel):
    model: str
    mean_r2: float
    std_r2: float
    mean_fit_time: float
    mean_inference_time: float
    mean_k: float


class DatasetReport(BaseModel):
    name: str
    records: List[RepetitionRecord] = Field(default_factory=list)
    summary: List[ModelSummary] = Field(default_factory=list)
    transcript: Optional[str] = Field(default=None, description="JSONL transcript of the first federated run")


class ExperimentReport(BaseModel):
    config: ExperimentConfig
    datasets: List[DatasetReport] = Field(default_factory=list)


class DataPartition:
    """
    Rows of one split, with every read logged as (reader, item).

    Items are ``x<i>`` for feature blocks (1-based) and ``y`` for responses.
    """

    def __init__(self, blocks: Sequence[RealMatrix], y: RealMatrix):
        self._blocks = list(blocks)
        self._y = y
        self.accesses: List[Tuple[str, str]] = []

    @property
    def g(self) -> int:
        return len(self._blocks)

    @property
    def m(self) -> int:
        return int(self._y.shape[0])

    def block(self, i: int, reader: str) -> RealMatrix:
        self.accesses.append((reader, f"x{i}"))
        return self._blocks[i - 1]

    def labels(self, reader: str) -> RealMatrix:
        self.accesses.append((reader, "y"))
        return self._y

    def all_blocks(self, reader: str) -> RealMatrix:
        return np.hstack([self.block(i, reader) for i in range(1, self.g + 1)])

    def readers_of(self, item: str) -> Set[str]:
        return {reader for reader, read in self.accesses if read == item}


def split_sizes(m: int) -> Tuple[int, int, int]:
    return m * 6 // 10, m * 2 // 10, m - m * 6 // 10 - m * 2 // 10


def split_indices(m: int, seed: int) -> Tuple[np.ndarray, np.ndarray, np.ndarray]:
    """
    Disjoint train/validation/test row indices from a seeded shuffle.

    Raises:
        TooFewRows: If m < 10.
    """
    if m < 10:
        raise TooFewRows(f"need at least 10 rows to split, got {m}")
    n_train, n_val, _ = split_sizes(m)
    order = np.random.default_rng(seed).permutation(m)
    return order[:n_train], order[n_train:n_train + n_val], order[n_train + n_val:]


def split_dataset(dataset: SimulatedDataset, seed: int) -> Tuple[DataPartition, DataPartition, DataPartition]:
    """60/20/20 split applying the same rows to every block and to Y."""
    return tuple(
        DataPartition([block[rows] for block in dataset.blocks], dataset.y[rows])
        for rows in split_indices(dataset.m, seed)
    )


def align_signs(reference: RealMatrix, candidate: RealMatrix) -> np.ndarray:
    """Per-component signs that turn candidate columns toward the reference columns."""
    signs = np.sign(np.sum(reference * candidate, axis=0))
    signs[signs == 0] = 1.0
    return signs


def _msd(a: RealMatrix, b: RealMatrix) -> float:
    return float(np.mean((a - b) ** 2))


def component_distances(cen: pls_core.PlsModel, training: TrainingResult) -> ComponentDistances:
    """Distances between a centralized model and recovered federated shares with the same k."""
    indices = sorted(training.fc_shares)
    T_fed = training.fc_shares[indices[0]].T
    signs = align_signs(cen.T, T_fed)

    W, P = [], []
    offset = 0
    for i in indices:
        share = training.fc_shares[i]
        rows = slice(offset, offset + share.W.shape[0])
        W.append(_msd(cen.W[rows], share.W * signs))
        P.append(_msd(cen.P[rows], share.P * signs))
        offset += share.W.shape[0]

    B_fed = np.vstack([training.fc_shares[i].B for i in indices])
    return ComponentDistances(
        T=_msd(cen.T, T_fed * signs),
        W=W,
        P=P,
        Q=_msd(cen.Q, training.lc_share.Q * signs),
        B=_msd(cen.B, B_fed),
    )


def _k_cap(k_max: int, m_train: int, n: int) -> int:
    return max(1, min(k_max, m_train - 1, n))


def _evaluate_plain(
    reader: str,
    features: Callable[[DataPartition, str], RealMatrix],
    train: DataPartition,
    val: DataPartition,
    test: DataPartition,
    k_max: int,
) -> ModelResult:
    X_tr, Y_tr = features(train, reader), train.labels(reader)
    X_val, Y_val = features(val, reader), val.labels(reader)
    k = pls_core.select_k(X_tr, Y_tr, X_val, Y_val, _k_cap(k_max, train.m, X_tr.shape[1]))

    start = time.perf_counter()
    model = pls_core.fit_standardized(X_tr, Y_tr, k)
    fit_time = time.perf_counter() - start

    X_te = features(test, reader)
    start = time.perf_counter()
    Y_hat = pls_core.predict(model, X_te)
    inference_time = time.perf_counter() - start
    return ModelResult(
        r2=pls_core.r2_score(test.labels(reader), Y_hat), k=k, fit_time=fit_time, inference_time=inference_time
    )


def evaluate_centralized(train: DataPartition, val: DataPartition, test: DataPartition, k_max: int) -> ModelResult:
    """CenPLS: one party holding every block."""
    return _evaluate_plain("CEN", lambda part, reader: part.all_blocks(reader), train, val, test, k_max)


def evaluate_local(train: DataPartition, val: DataPartition, test: DataPartition, k_max: int) -> ModelResult:
    """LocalPLS: the label holder's own last block only."""
    return _evaluate_plain("LOCAL", lambda part, reader: part.block(part.g, reader), train, val, test, k_max)


def _party_blocks(part: DataPartition) -> List[RealMatrix]:
    return [part.block(i, f"FC-{i}") for i in range(1, part.g + 1)]


async def evaluate_federated(
    train: DataPartition,
    val: DataPartition,
    test: DataPartition,
    k_max: int,
    protocol_seed: int,
) -> Tuple[ModelResult, FederationOrchestrator, TrainingResult]:
    """
    P3LS: one federation per candidate k, scored by the LC on validation rows.

    Every block is read only under its owner's name; the last FC also hosts the LC.
    """
    blocks_tr = _party_blocks(train)
    Y_tr = train.labels("LC")
    widths = [block.shape[1] for block in blocks_tr]
    cap = _k_cap(k_max, train.m, sum(widths))

    best = None
    for k in range(1, cap + 1):
        config = FederationConfig(
            block_widths=widths, m=train.m, l=Y_tr.shape[1], k=k,
            master_seed=protocol_seed, lc_fc_index=len(widths),
        )
        orchestrator = FederationOrchestrator(config, blocks_tr, Y_tr)
        start = time.perf_counter()
        try:
            training = await orchestrator.run_training()
        except ProtocolError as exc:
            if isinstance(exc.__cause__, RankDeficient) and k > 1:
                logger.info("Federated validation curve stops at k=%d (rank exhausted)", k - 1)
                break
            raise
        fit_time = time.perf_counter() - start

        inference = await orchestrator.run_inference(_party_blocks(val))
        score = pls_core.r2_score(val.labels("LC"), inference.predictions)
        if best is None or score > best[0]:
            best = (score, k, fit_time, orchestrator, training)

    _, k, fit_time, orchestrator, training = best
    test_blocks = _party_blocks(test)
    start = time.perf_counter()
    inference = await orchestrator.run_inference(test_blocks)
    inference_time = time.perf_counter() - start
    contributions = await orchestrator.run_contribution()

    result = ModelResult(
        r2=pls_core.r2_score(test.labels("LC"), inference.predictions),
        k=k,
        fit_time=fit_time,
        inference_time=inference_time,
        contributions=contributions,
    )
    return result, orchestrator, training


def resolve_dataset(name: str, rows: int, seed: int) -> Tuple[str, SimulatedDataset]:
    """A built-in id is generated on the fly; anything else is read as an exported directory."""
    if name.isdigit():
        dataset_id = int(name)
        stages = builtin_config(dataset_id)
        return f"dataset-{dataset_id}", generate_dataset(stages, rows, derive_seed(seed, f"dataset-{dataset_id}"))
    path = Path(name)
    return path.name, load_dataset(path)


def summarize(records: List[RepetitionRecord]) -> List[ModelSummary]:
    models = [model for model in ALL_MODELS if any(model in rec.results for rec in records)]
    summary = []
    for model in models:
        results = [rec.results[model] for rec in records if model in rec.results]
        r2 = np.array([res.r2 for res in results])
        summary.append(
            ModelSummary(
                model=model,
                mean_r2=float(r2.mean()),
                std_r2=float(r2.std()),
                mean_fit_time=float(np.mean([res.fit_time for res in results])),
                mean_inference_time=float(np.mean([res.inference_time for res in results])),
                mean_k=float(np.mean([res.k for res in results])),
            )
        )
    return summary


async def run_repetition(
    dataset: SimulatedDataset,
    cfg: ExperimentConfig,
    repetition: int,
    transcript_path: Optional[Path] = None,
) -> RepetitionRecord:
    """
    One split, every requested model, and component distances for P3LS.

    Raises:
        ExperimentError: Wrapping any failure with the repetition and the step it failed in.
    """
    record = RepetitionRecord(repetition=repetition)
    phase = "split"
    try:
        train, val, test = split_dataset(dataset, derive_seed(cfg.seed, f"split-{repetition}"))
        if "cen" in cfg.models:
            phase = "cen"
            record.results["cen"] = evaluate_centralized(train, val, test, cfg.k_max)
        if "local" in cfg.models:
            phase = "local"
            record.results["local"] = evaluate_local(train, val, test, cfg.k_max)
        if "p3ls" in cfg.models:
            phase = "p3ls"
            result, orchestrator, training = await evaluate_federated(
                train, val, test, cfg.k_max, derive_seed(cfg.seed, f"protocol-{repetition}")
            )
            record.results["p3ls"] = result
            if transcript_path is not None:
                orchestrator.transcript.to_jsonl(transcript_path)

            phase = "distances"
            cen = pls_core.fit_standardized(train.all_blocks("CEN"), train.labels("CEN"), result.k)
            record.distances = component_distances(cen, training)
    except Exception as exc:
        logger.error(f"Repetition {repetition} failed in {phase}: {exc}")
        raise ExperimentError(str(exc), repetition, phase) from exc
    return record


async def run_experiment(cfg: ExperimentConfig) -> ExperimentReport:
    """
    Run every dataset and repetition, then write the report if an output directory is set.

    Returns:
        The full report with per-repetition records and per-model summaries.
    """
    from .tools.report_writer import emit_report

    report = ExperimentReport(config=cfg)
    output = Path(cfg.output_dir) if cfg.output_dir else None
    for name in cfg.datasets:
        label, dataset = resolve_dataset(name, cfg.rows, cfg.seed)
        logger.info("Dataset %s: blocks %s, l=%d, m=%d", label, dataset.block_widths, dataset.l, dataset.m)
        section = DatasetReport(name=label)
        for r in range(cfg.repetitions):
            transcript_path = None
            if output is not None and r == 0 and "p3ls" in cfg.models:
                transcript_path = output / "transcripts" / f"{label}.jsonl"
                section.transcript = str(transcript_path)
            section.records.append(await run_repetition(dataset, cfg, r, transcript_path))
            logger.info("Dataset %s: repetition %d/%d done", label, r + 1, cfg.repetitions)
        section.summary = summarize(section.records)
        report.datasets.append(section)

    if output is not None:
        emit_report(report, output)
    return report
