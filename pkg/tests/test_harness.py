"""Tests for the experiment harness and the report writer."""

import json

import numpy as np
import pytest

from p3ls.errors import ExperimentError, TooFewRows
from p3ls.harness import (
    DatasetReport,
    ExperimentConfig,
    ExperimentReport,
    ModelSummary,
    evaluate_centralized,
    evaluate_federated,
    evaluate_local,
    resolve_dataset,
    run_experiment,
    split_dataset,
    split_indices,
    split_sizes,
)
from p3ls.simulator import builtin_config, export_dataset, generate_dataset
from p3ls.tools.report_writer import SUMMARY_COLUMNS, emit_report, format_summary, load_report, summary_frame


def strip_timings(report):
    data = report.model_dump()
    for section in data["datasets"]:
        for record in section["records"]:
            for result in record["results"].values():
                result["fit_time"] = result["inference_time"] = 0.0
        for summary in section["summary"]:
            summary["mean_fit_time"] = summary["mean_inference_time"] = 0.0
    return data


@pytest.fixture
def small_dataset():
    return generate_dataset(builtin_config(1), m=80, seed=3)


# Splitting


def test_split_sizes():
    assert split_sizes(100) == (60, 20, 20)
    assert split_sizes(1000) == (600, 200, 200)
    assert sum(split_sizes(57)) == 57


def test_split_indices_are_disjoint_and_deterministic():
    train, val, test = split_indices(50, seed=4)
    assert len(train) == 30 and len(val) == 10 and len(test) == 10
    assert sorted(np.concatenate([train, val, test]).tolist()) == list(range(50))
    again = split_indices(50, seed=4)
    for a, b in zip((train, val, test), again):
        np.testing.assert_array_equal(a, b)
    assert not np.array_equal(train, split_indices(50, seed=5)[0])


def test_split_needs_ten_rows():
    with pytest.raises(TooFewRows):
        split_indices(9, seed=0)


def test_split_keeps_rows_aligned(small_dataset):
    train, _, _ = split_dataset(small_dataset, seed=1)
    rows, _, _ = split_indices(small_dataset.m, seed=1)
    np.testing.assert_array_equal(train.block(2, "test"), small_dataset.blocks[1][rows])
    np.testing.assert_array_equal(train.labels("test"), small_dataset.y[rows])


# Data access


def test_local_model_reads_only_last_block(small_dataset):
    train, val, test = split_dataset(small_dataset, seed=0)
    evaluate_local(train, val, test, k_max=3)
    for part in (train, val, test):
        assert part.readers_of("x1") == set()
        assert part.readers_of("x2") == set()
        assert part.readers_of("x3") == {"LOCAL"}
        assert part.readers_of("y") == {"LOCAL"}


@pytest.mark.asyncio
async def test_federated_model_reads_blocks_only_as_their_owner(small_dataset):
    train, val, test = split_dataset(small_dataset, seed=0)
    await evaluate_federated(train, val, test, k_max=3, protocol_seed=1)
    for part in (train, val, test):
        for i in (1, 2, 3):
            assert part.readers_of(f"x{i}") == {f"FC-{i}"}
        assert part.readers_of("y") == {"LC"}


@pytest.mark.asyncio
async def test_federated_matches_centralized(small_dataset):
    train, val, test = split_dataset(small_dataset, seed=2)
    cen = evaluate_centralized(train, val, test, k_max=4)
    fed, _, training = await evaluate_federated(train, val, test, k_max=4, protocol_seed=7)
    assert fed.k == cen.k
    assert fed.r2 == pytest.approx(cen.r2, abs=1e-8)
    assert sorted(fed.contributions) == [1, 2, 3]
    assert sorted(training.fc_shares) == [1, 2, 3]


def test_resolve_dataset(tmp_path):
    label, dataset = resolve_dataset("1", rows=30, seed=0)
    assert label == "dataset-1"
    assert dataset.m == 30

    export_dataset(dataset, tmp_path / "exported")
    label, loaded = resolve_dataset(str(tmp_path / "exported"), rows=999, seed=0)
    assert label == "exported"
    assert loaded.m == 30


# Experiments


@pytest.mark.asyncio
async def test_small_experiment(tmp_path):
    cfg = ExperimentConfig(datasets=["1"], repetitions=2, seed=5, k_max=4, rows=80, output_dir=str(tmp_path))
    report = await run_experiment(cfg)

    section = report.datasets[0]
    assert section.name == "dataset-1"
    assert len(section.records) == 2
    for record in section.records:
        assert set(record.results) == {"cen", "local", "p3ls"}
        assert record.distances.max() < 1e-12
        assert record.results["p3ls"].r2 == pytest.approx(record.results["cen"].r2, abs=1e-8)
    assert [s.model for s in section.summary] == ["cen", "local", "p3ls"]

    assert (tmp_path / "report.json").exists()
    assert (tmp_path / "summary.csv").exists()
    assert section.transcript == str(tmp_path / "transcripts" / "dataset-1.jsonl")
    assert (tmp_path / "transcripts" / "dataset-1.jsonl").exists()

    loaded = load_report(tmp_path / "report.json")
    assert loaded.datasets[0].records[0].results["p3ls"].contributions.keys() == {1, 2, 3}
    assert len(summary_frame(loaded)) == 3
    assert list(summary_frame(loaded).columns) == SUMMARY_COLUMNS


@pytest.mark.asyncio
async def test_timings_are_sane():
    cfg = ExperimentConfig(datasets=["1"], repetitions=2, seed=4, k_max=3, rows=60)
    report = await run_experiment(cfg)
    section = report.datasets[0]
    for record in section.records:
        for result in record.results.values():
            assert result.fit_time >= 0.0
            assert result.inference_time >= 0.0
        assert record.results["p3ls"].inference_time >= record.results["local"].inference_time
    for summary in section.summary:
        assert summary.mean_fit_time >= 0.0 and summary.mean_inference_time >= 0.0


@pytest.mark.asyncio
async def test_experiment_is_deterministic(tmp_path):
    cfg = ExperimentConfig(datasets=["1"], repetitions=1, seed=11, k_max=3, rows=60, output_dir=str(tmp_path))
    first = await run_experiment(cfg)
    second = await run_experiment(cfg)
    assert strip_timings(first) == strip_timings(second)


@pytest.mark.asyncio
async def test_model_subset():
    cfg = ExperimentConfig(datasets=["1"], repetitions=1, k_max=2, rows=50, models=["local"])
    report = await run_experiment(cfg)
    record = report.datasets[0].records[0]
    assert set(record.results) == {"local"}
    assert record.distances is None
    assert report.datasets[0].transcript is None


@pytest.mark.asyncio
async def test_no_models_gives_empty_summary():
    cfg = ExperimentConfig(datasets=["1"], repetitions=1, rows=30, models=[])
    report = await run_experiment(cfg)
    assert report.datasets[0].summary == []
    assert format_summary(report) == "(no model results)"


@pytest.mark.asyncio
async def test_failed_repetition_names_its_step(tmp_path):
    dataset = generate_dataset(builtin_config(1), m=40, seed=0)
    dataset.blocks[0][:, 2] = 1.5
    export_dataset(dataset, tmp_path / "broken")
    cfg = ExperimentConfig(datasets=[str(tmp_path / "broken")], repetitions=1, k_max=2)
    with pytest.raises(ExperimentError) as excinfo:
        await run_experiment(cfg)
    assert excinfo.value.repetition == 0
    assert excinfo.value.phase == "cen"


def test_experiment_config_validation():
    with pytest.raises(ValueError):
        ExperimentConfig(datasets=["1"], repetitions=0)
    with pytest.raises(ValueError):
        ExperimentConfig(datasets=["1"], models=["svd"])


def test_format_summary_table():
    cfg = ExperimentConfig(datasets=["1"])
    summary = ModelSummary(
        model="cen", mean_r2=0.9, std_r2=0.01, mean_fit_time=0.1, mean_inference_time=0.01, mean_k=3.0
    )
    report = ExperimentReport(config=cfg, datasets=[DatasetReport(name="dataset-1", summary=[summary])])
    table = format_summary(report)
    assert "dataset-1" in table
    assert "mean_r2" in table.splitlines()[0]


def test_report_json_is_plain_json(tmp_path):
    cfg = ExperimentConfig(datasets=["1"], repetitions=1)
    paths = emit_report(ExperimentReport(config=cfg), tmp_path / "out")
    assert json.loads(paths["report"].read_text())["config"]["datasets"] == ["1"]


# Experiment-scale checks


@pytest.mark.slow
@pytest.mark.asyncio
async def test_dataset_one_federated_is_lossless():
    cfg = ExperimentConfig(datasets=["1"], repetitions=10, seed=0, k_max=10, rows=1000)
    report = await run_experiment(cfg)
    for record in report.datasets[0].records:
        assert record.distances.max() < 1e-12
        assert abs(record.results["p3ls"].r2 - record.results["cen"].r2) < 1e-8


@pytest.mark.slow
@pytest.mark.asyncio
async def test_federation_beats_local_model():
    cfg = ExperimentConfig(datasets=["1", "2", "3"], repetitions=5, seed=1, k_max=10, rows=1000)
    report = await run_experiment(cfg)
    for section in report.datasets:
        for record in section.records:
            assert record.results["p3ls"].r2 > record.results["local"].r2
        means = {summary.model: summary.mean_r2 for summary in section.summary}
        assert means["p3ls"] > means["local"]
