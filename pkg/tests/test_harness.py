import csv
import hashlib
import json

import numpy as np
import pytest

from netprobe import NoiseConfig, ProbingConfig
from netprobe.game import PAPER6_DIGEST, PAPER6_INTERACTION
from netprobe.harness import (
    METRIC_HEADER,
    ExperimentConfig,
    MetricRow,
    metrics_csv,
    read_metrics,
    run_experiment,
    summarize,
    support_accuracy,
    true_support,
    write_outputs,
)


def _small_noisy(seeds=(0, 1, 2), grid=(250, 500, 1000)):
    return ExperimentConfig(
        probing=ProbingConfig(0.03, 0, grid[-1]),
        noise=NoiseConfig("gaussian", 0.03),
        pipeline="noisy",
        n_grid=list(grid),
        seeds=list(seeds),
    )


def _row(seed, n, pipeline="adaptive_sparse", acc=1.0, cesaro=1.0):
    return MetricRow(seed, n, pipeline, 0.1, acc, 11, 0.5, cesaro, 1.0, 2.0)


def test_empty_seeds_give_empty_table(tmp_path):
    cfg = ExperimentConfig(seeds=[])
    rows = run_experiment(cfg)
    assert rows == []
    write_outputs(rows, tmp_path)
    assert (tmp_path / "metrics.csv").read_text() == ",".join(METRIC_HEADER) + "\n"


def test_single_row_summary_equals_row():
    row = _row(0, 100)
    summary = summarize([row])
    for entry in summary.aggregate:
        value = getattr(row, entry["metric"])
        assert entry["median"] == entry["min"] == entry["max"] == value


def test_median_of_two_seeds():
    summary = summarize([_row(0, 100, acc=1.0), _row(1, 100, acc=0.9)])
    (entry,) = [a for a in summary.aggregate if a["metric"] == "support_accuracy"]
    assert entry["median"] == pytest.approx(0.95)
    assert (entry["min"], entry["max"]) == (0.9, 1.0)


def test_summarize_rejects_empty():
    with pytest.raises(ValueError):
        summarize([])


def test_support_accuracy_range():
    truth = frozenset({(0, 1), (1, 2)})
    assert support_accuracy(truth, truth, 3) == 1.0
    assert support_accuracy(frozenset(), truth, 3) == pytest.approx(4 / 6)
    assert support_accuracy(frozenset({(0, 2)}), truth, 3) == pytest.approx(3 / 6)


def test_determinism_byte_identical():
    cfg = _small_noisy()
    assert metrics_csv(run_experiment(cfg)) == metrics_csv(run_experiment(cfg))


def test_parallel_matches_serial():
    cfg = _small_noisy()
    assert metrics_csv(run_experiment(cfg, jobs=2)) == metrics_csv(run_experiment(cfg))


def test_rows_sorted_and_complete():
    cfg = _small_noisy()
    rows = run_experiment(cfg)
    assert [r.key() for r in rows] == sorted(r.key() for r in rows)
    assert len(rows) == 3 * 3 * 2
    assert {r.pipeline for r in rows} == {"pilot_rls", "adaptive_sparse"}


def test_prefix_consistency():
    long = run_experiment(_small_noisy(seeds=[4], grid=(250, 500, 1000)))
    short = run_experiment(_small_noisy(seeds=[4], grid=(250, 500)))
    assert metrics_csv(short) == metrics_csv([r for r in long if r.n <= 500])


def test_both_pipeline_rows():
    cfg = ExperimentConfig(
        probing=ProbingConfig(0.03, 0, 300), noise=NoiseConfig("gaussian", 0.03), pipeline="both",
        n_grid=[100, 300], seeds=[0],
    )
    rows = run_experiment(cfg)
    assert {r.pipeline for r in rows} == {"noiseless_ols", "pilot_rls", "adaptive_sparse"}
    quiet = [r for r in rows if r.pipeline == "noiseless_ols"]
    assert all(r.relative_error < 1e-6 for r in quiet)


def test_insufficient_row_is_recorded():
    cfg = ExperimentConfig(probing=ProbingConfig(0.12, 0, 30), n_grid=[2, 30], seeds=[0])
    rows = run_experiment(cfg)
    first = rows[0]
    assert np.isnan(first.relative_error) and np.isnan(first.edge_count)
    assert rows[1].relative_error < 1e-6


@pytest.mark.parametrize(
    "kwargs",
    [
        {"n_grid": [100, 50]},
        {"n_grid": [50, 50]},
        {"n_grid": [50, 600]},
        {"pipeline": "bogus"},
    ],
)
def test_config_validation(kwargs):
    with pytest.raises(ValueError):
        ExperimentConfig(**kwargs)


def test_config_round_trip(tmp_path):
    cfg = _small_noisy()
    path = tmp_path / "cfg.json"
    path.write_text(json.dumps(cfg.to_dict()))
    back = ExperimentConfig.load(path)
    assert back.to_dict() == cfg.to_dict()


def test_paper6_expansion():
    spec = ExperimentConfig().resolve_game()
    assert len(true_support(spec)) == 11
    rows = [list(map(float, r)) for r in PAPER6_INTERACTION]
    assert hashlib.sha256(json.dumps(rows).encode()).hexdigest() == PAPER6_DIGEST
    np.testing.assert_array_equal(spec.G, np.array(rows))
    np.testing.assert_array_equal(spec.alpha, np.ones(6))
    np.testing.assert_array_equal(spec.B, np.eye(6))
    values = sorted(abs(spec.G[i, j]) for i, j in true_support(spec))
    assert values == sorted(abs(v) for r in rows for v in r if v != 0)


def test_metrics_file_round_trip(tmp_path):
    rows = run_experiment(_small_noisy(seeds=[0], grid=(250, 500)))
    write_outputs(rows, tmp_path, true_edge_count=11)
    assert read_metrics(tmp_path / "metrics.csv") == rows
    header = (tmp_path / "metrics.csv").read_text().splitlines()[0]
    assert header == "seed,n,pipeline,relative_error,support_accuracy,edge_count,nash_gap,cesaro_gap,lambda_min,lambda_max"
    assert (tmp_path / "summary.txt").exists() and (tmp_path / "aggregate.csv").exists()


def test_cesaro_trend_flag_matches_independent_recompute(tmp_path):
    cfg = _small_noisy(seeds=range(6), grid=(250, 500, 1000, 2000))
    summary = write_outputs(run_experiment(cfg), tmp_path, 11)
    with open(tmp_path / "metrics.csv", newline="") as fh:
        recs = [r for r in csv.DictReader(fh) if r["pipeline"] == "adaptive_sparse"]
    per_seed = {}
    for r in recs:
        per_seed.setdefault(r["seed"], []).append((int(r["n"]), float(r["cesaro_gap"])))
    hits = 0
    for series in per_seed.values():
        gaps = [g for _, g in sorted(series)]
        hits += all(gaps[k + 1] <= 1.1 * gaps[k] for k in range(len(gaps) - 1))
    ok, detail = summary.flags["AC4-cesaro-monotone"]
    assert detail.startswith(f"{hits}/{len(per_seed)} ")
    assert ok == (hits / len(per_seed) >= 0.9)
