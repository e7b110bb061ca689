"""Seeded experiment grids, metric tables and the reference experiment suite."""

from __future__ import annotations

import csv
import io
import json
import math
import statistics
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field, fields
from pathlib import Path

import numpy as np

from . import estimation as est
from .dynamics import NoiseConfig, ProbingConfig, Trajectory, cesaro_series, simulate
from .game import GameSpec, load_game, paper6, require_valid, solve_nash

METRIC_HEADER = (
    "seed",
    "n",
    "pipeline",
    "relative_error",
    "support_accuracy",
    "edge_count",
    "nash_gap",
    "cesaro_gap",
    "lambda_min",
    "lambda_max",
)
PIPELINES = ("noiseless", "noisy", "both")
NOISY_METHODS = ("pilot_rls", "adaptive_sparse")
MONOTONE_SLACK = 1.10
SEED_FRACTION = 0.90


@dataclass
class ExperimentConfig:
    game: GameSpec | str = "paper-6"
    probing: ProbingConfig = field(default_factory=ProbingConfig)
    noise: NoiseConfig = field(default_factory=NoiseConfig)
    pipeline: str = "noiseless"
    n_grid: list = field(default_factory=lambda: [50, 100, 200, 500])
    seeds: list = field(default_factory=lambda: list(range(10)))
    edge_threshold: float = est.DEFAULT_EDGE_THRESHOLD
    output_dir: str | None = None
    alpha0: float = est.DEFAULT_ALPHA0
    schedule_scale: str | float = "residual"

    def __post_init__(self):
        if self.pipeline not in PIPELINES:
            raise ValueError(f"pipeline must be one of {PIPELINES}, got {self.pipeline!r}")
        grid = [int(n) for n in self.n_grid]
        if any(b <= a for a, b in zip(grid, grid[1:])):
            raise ValueError(f"n_grid must be strictly increasing, got {grid}")
        if grid and (grid[0] < 2 or grid[-1] > self.probing.horizon):
            raise ValueError(f"n_grid values must lie in 2..horizon={self.probing.horizon}")
        self.n_grid = grid
        self.seeds = [int(s) for s in self.seeds]

    def resolve_game(self) -> GameSpec:
        if isinstance(self.game, GameSpec):
            spec = self.game
        elif self.game == "paper-6":
            spec = paper6()
        else:
            spec = load_game(self.game)
        require_valid(spec)
        return spec

    @classmethod
    def from_dict(cls, data: dict, base_dir=None) -> "ExperimentConfig":
        data = dict(data)
        game = data.get("game", "paper-6")
        if isinstance(game, dict):
            game = GameSpec.from_dict(game)
        elif game != "paper-6" and base_dir is not None and not Path(game).is_absolute():
            game = str(Path(base_dir) / game)
        probing = data.get("probing", {})
        horizon = int(probing.get("horizon", max(data.get("n_grid", [500]))))
        return cls(
            game=game,
            probing=ProbingConfig(float(probing.get("epsilon", 0.12)), int(probing.get("seed", 0)), horizon),
            noise=NoiseConfig(**data.get("noise", {})),
            pipeline=data.get("pipeline", "noiseless"),
            n_grid=data.get("n_grid", [50, 100, 200, 500]),
            seeds=data.get("seeds", list(range(10))),
            edge_threshold=float(data.get("edge_threshold", est.DEFAULT_EDGE_THRESHOLD)),
            output_dir=data.get("output_dir"),
            alpha0=float(data.get("alpha0", est.DEFAULT_ALPHA0)),
            schedule_scale=data.get("schedule_scale", "residual"),
        )

    @classmethod
    def load(cls, path) -> "ExperimentConfig":
        path = Path(path)
        return cls.from_dict(json.loads(path.read_text()), base_dir=path.parent)

    def to_dict(self) -> dict:
        game = self.game.to_dict() if isinstance(self.game, GameSpec) else self.game
        return {
            "game": game,
            "probing": {"epsilon": self.probing.epsilon, "horizon": self.probing.horizon},
            "noise": asdict(self.noise),
            "pipeline": self.pipeline,
            "n_grid": list(self.n_grid),
            "seeds": list(self.seeds),
            "edge_threshold": self.edge_threshold,
            "output_dir": self.output_dir,
            "alpha0": self.alpha0,
            "schedule_scale": self.schedule_scale,
        }


@dataclass(frozen=True)
class MetricRow:
    seed: int
    n: int
    pipeline: str
    relative_error: float
    support_accuracy: float
    edge_count: float
    nash_gap: float
    cesaro_gap: float
    lambda_min: float
    lambda_max: float

    def key(self):
        return (self.seed, self.n, self.pipeline)


def support_accuracy(estimated: frozenset, truth: frozenset, n_players: int) -> float:
    """Fraction of off-diagonal positions whose edge/non-edge label is correct."""
    total = n_players * (n_players - 1)
    wrong = len(estimated ^ truth)
    return (total - wrong) / total if total else 1.0


def true_support(spec: GameSpec) -> frozenset:
    return est.extract_support(spec.interaction, 0.0)


def metric_row(seed, n, result: est.RecoveryResult, spec, traj: Trajectory, x_star, cesaro) -> MetricRow:
    nash_gap = float(np.linalg.norm(traj.states[n] - x_star))
    cesaro_gap = float(np.linalg.norm(cesaro[n - 1] - x_star))
    d = result.diagnostics
    if not result.ok:
        nan = float("nan")
        return MetricRow(seed, n, result.method, nan, nan, nan, nash_gap, cesaro_gap, d.lambda_min, d.lambda_max)
    support = result.support
    rel = float(np.linalg.norm(result.g_hat - spec.interaction) / np.linalg.norm(spec.interaction))
    acc = support_accuracy(support, true_support(spec), spec.n_players)
    return MetricRow(seed, n, result.method, rel, acc, len(support), nash_gap, cesaro_gap, d.lambda_min, d.lambda_max)


def _evaluate_seed(config: ExperimentConfig, seed: int) -> list[MetricRow]:
    spec = config.resolve_game()
    x_star = solve_nash(spec).actions
    probing = ProbingConfig(config.probing.epsilon, seed, config.probing.horizon)
    runs = []
    if config.pipeline in ("noiseless", "both"):
        quiet = NoiseConfig() if config.pipeline == "both" else config.noise
        runs.append(("noiseless", simulate(spec, probing, quiet)))
    if config.pipeline in ("noisy", "both"):
        runs.append(("noisy", simulate(spec, probing, config.noise)))
    rows = []
    for kind, full in runs:
        cesaro = cesaro_series(full)
        for n in config.n_grid:
            traj = full.prefix(n)
            if kind == "noiseless":
                try:
                    results = [est.noiseless_recover(traj, config.edge_threshold)]
                except est.NoisyTrajectoryError:
                    results = [est._insufficient("noiseless_ols", float("nan"), 0, config.edge_threshold)]
            else:
                state = est.rls_pilot(traj, config.alpha0)
                results = [
                    est.pilot_recover(traj, config.alpha0, config.edge_threshold, state),
                    est.adaptive_recover(
                        traj, config.alpha0, config.schedule_scale, config.edge_threshold, state=state
                    ),
                ]
            rows.extend(metric_row(seed, n, r, spec, traj, x_star, cesaro) for r in results)
    return rows


def run_experiment(config: ExperimentConfig, jobs: int = 1) -> list[MetricRow]:
    """One simulation per seed, every selected pipeline evaluated on each grid prefix."""
    if not config.seeds:
        return []
    if jobs > 1 and len(config.seeds) > 1:
        with ProcessPoolExecutor(max_workers=jobs) as pool:
            chunks = list(pool.map(_evaluate_seed, [config] * len(config.seeds), config.seeds))
    else:
        chunks = [_evaluate_seed(config, s) for s in config.seeds]
    rows = [r for chunk in chunks for r in chunk]
    return sorted(rows, key=MetricRow.key)


def _fmt(value) -> str:
    if isinstance(value, str):
        return value
    if isinstance(value, (bool, np.bool_)):
        return str(bool(value))
    if isinstance(value, (int, np.integer)):
        return str(int(value))
    v = float(value)
    return "nan" if math.isnan(v) else format(v, ".17g")


def metrics_csv(rows) -> str:
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(METRIC_HEADER)
    for r in rows:
        writer.writerow([_fmt(getattr(r, name)) for name in METRIC_HEADER])
    return buf.getvalue()


def write_metrics(rows, path) -> None:
    Path(path).write_text(metrics_csv(rows))


def read_metrics(path) -> list[MetricRow]:
    with open(path, newline="") as fh:
        reader = csv.DictReader(fh)
        out = []
        for rec in reader:
            out.append(
                MetricRow(
                    int(rec["seed"]),
                    int(rec["n"]),
                    rec["pipeline"],
                    *(float(rec[k]) for k in METRIC_HEADER[3:]),
                )
            )
    return out


# ---------------------------------------------------------------------------
# summaries


@dataclass
class Summary:
    text: str
    aggregate: list  # dicts: pipeline, n, metric, median, min, max
    flags: dict  # criterion id -> (passed, detail)


def _finite(values):
    return [v for v in values if not math.isnan(v)]


def _monotone(gaps, slack=MONOTONE_SLACK) -> bool:
    return all(b <= slack * a for a, b in zip(gaps, gaps[1:]))


def _seed_fraction(by_seed, predicate) -> tuple[float, int]:
    hits = sum(1 for rows in by_seed.values() if predicate(rows))
    return hits / len(by_seed), hits


def summarize(rows, true_edge_count: int | None = None) -> Summary:
    """Per-(pipeline, n) medians and ranges across seeds, plus acceptance flags."""
    if not rows:
        raise ValueError("cannot summarize an empty metric table")
    metrics = [f.name for f in fields(MetricRow)][3:]
    groups: dict = {}
    for r in rows:
        groups.setdefault((r.pipeline, r.n), []).append(r)
    aggregate = []
    for (pipe, n), grp in sorted(groups.items()):
        for m in metrics:
            vals = _finite([float(getattr(r, m)) for r in grp])
            if vals:
                aggregate.append(
                    {"pipeline": pipe, "n": n, "metric": m, "median": statistics.median(vals),
                     "min": min(vals), "max": max(vals), "count": len(vals)}
                )
            else:
                aggregate.append({"pipeline": pipe, "n": n, "metric": m, "median": float("nan"),
                                  "min": float("nan"), "max": float("nan"), "count": 0})

    flags = _acceptance_flags(rows, true_edge_count)
    lines = [f"{'pipeline':<16}{'n':>6}  {'metric':<18}{'median':>14}{'min':>14}{'max':>14}"]
    for a in aggregate:
        lines.append(
            f"{a['pipeline']:<16}{a['n']:>6}  {a['metric']:<18}{a['median']:>14.6g}{a['min']:>14.6g}{a['max']:>14.6g}"
        )
    if flags:
        lines.append("")
        for cid, (ok, detail) in flags.items():
            lines.append(f"[{'PASS' if ok else 'FAIL'}] {cid}: {detail}")
    return Summary("\n".join(lines) + "\n", aggregate, flags)


def _by_seed(rows, pipeline):
    out: dict = {}
    for r in rows:
        if r.pipeline == pipeline:
            out.setdefault(r.seed, []).append(r)
    for v in out.values():
        v.sort(key=lambda r: r.n)
    return out


def _acceptance_flags(rows, true_edge_count) -> dict:
    flags = {}
    noiseless = _by_seed(rows, "noiseless_ols")
    if noiseless:
        last = [s[-1] for s in noiseless.values()]
        ok = all(r.relative_error < 1e-6 and r.support_accuracy == 1.0 for r in last)
        flags["AC1-exact-recovery"] = (ok, f"{sum(r.relative_error < 1e-6 and r.support_accuracy == 1.0 for r in last)}"
                                           f"/{len(last)} seeds exact at n={last[0].n}")
        ok3 = all(s[-1].nash_gap < 0.05 and s[-1].nash_gap < s[0].nash_gap for s in noiseless.values())
        first_n = next(iter(noiseless.values()))[0].n
        hits3 = sum(s[-1].nash_gap < 0.05 and s[-1].nash_gap < s[0].nash_gap for s in noiseless.values())
        flags["AC3-convergence"] = (ok3, f"{hits3}/{len(noiseless)} seeds with nash_gap(n={last[0].n}) < 0.05 "
                                         f"and < nash_gap(n={first_n})")
    adaptive = _by_seed(rows, "adaptive_sparse")
    if adaptive:
        frac, hits = _seed_fraction(adaptive, lambda s: s[-1].support_accuracy == 1.0)
        flags["AC2-adaptive-support"] = (frac >= SEED_FRACTION, f"{hits}/{len(adaptive)} seeds with exact support")
        frac4, hits4 = _seed_fraction(adaptive, lambda s: _monotone([r.cesaro_gap for r in s]))
        flags["AC4-cesaro-monotone"] = (frac4 >= SEED_FRACTION,
                                        f"{hits4}/{len(adaptive)} seeds non-increasing within 10% slack")
    baseline = _by_seed(rows, "pilot_rls")
    if baseline and true_edge_count is not None:
        frac, hits = _seed_fraction(baseline, lambda s: s[-1].edge_count > true_edge_count)
        flags["AC2-baseline-excess"] = (frac >= SEED_FRACTION,
                                        f"{hits}/{len(baseline)} seeds with more than {true_edge_count} edges")
    return flags


def aggregate_csv(summary: Summary) -> str:
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    cols = ["pipeline", "n", "metric", "median", "min", "max", "count"]
    writer.writerow(cols)
    for a in summary.aggregate:
        writer.writerow([_fmt(a[c]) for c in cols])
    return buf.getvalue()


def write_outputs(rows, out_dir, true_edge_count=None) -> Summary:
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    write_metrics(rows, out / "metrics.csv")
    if not rows:
        (out / "summary.txt").write_text("empty metric table\n")
        return Summary("empty metric table\n", [], {})
    summary = summarize(rows, true_edge_count)
    (out / "summary.txt").write_text(summary.text)
    (out / "aggregate.csv").write_text(aggregate_csv(summary))
    return summary


# ---------------------------------------------------------------------------
# reference experiments


def paper_configs(seeds_noiseless=range(10), seeds_noisy=range(20)) -> dict[str, ExperimentConfig]:
    return {
        "noiseless": ExperimentConfig(
            game="paper-6",
            probing=ProbingConfig(0.12, 0, 500),
            noise=NoiseConfig(),
            pipeline="noiseless",
            n_grid=[50, 100, 200, 500],
            seeds=list(seeds_noiseless),
        ),
        "noisy": ExperimentConfig(
            game="paper-6",
            probing=ProbingConfig(0.03, 0, 4000),
            noise=NoiseConfig("gaussian", 0.03),
            pipeline="noisy",
            n_grid=[250, 500, 1000, 2000, 4000],
            seeds=list(seeds_noisy),
        ),
    }


def _series_csv(columns: dict) -> str:
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    names = list(columns)
    writer.writerow(names)
    for row in zip(*columns.values()):
        writer.writerow([_fmt(v) for v in row])
    return buf.getvalue()


def convergence_experiment(out_dir, seed: int = 0) -> dict:
    """Plot data for equilibrium convergence, excitation growth and support patterns."""
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    spec = paper6()
    x_star = solve_nash(spec).actions
    quiet = simulate(spec, ProbingConfig(0.12, seed, 2000))
    noisy = simulate(spec, ProbingConfig(0.03, seed, 4000), NoiseConfig("gaussian", 0.03))
    t_q = np.arange(1, quiet.horizon + 1)
    t_n = np.arange(1, noisy.horizon + 1)
    (out / "convergence_noiseless.csv").write_text(_series_csv({
        "t": t_q,
        "nash_gap": np.linalg.norm(quiet.states[1:] - x_star, axis=1),
        "cesaro_gap": np.linalg.norm(cesaro_series(quiet) - x_star, axis=1),
    }))
    (out / "convergence_noisy.csv").write_text(_series_csv({
        "t": t_n,
        "nash_gap": np.linalg.norm(noisy.states[1:] - x_star, axis=1),
        "cesaro_gap": np.linalg.norm(cesaro_series(noisy) - x_star, axis=1),
    }))
    grid = [50, 100, 200, 500, 1000, 1999]
    ex_q = est.excitation_diagnostics(est.build_incremental_regression(quiet), 0.6, grid)
    grid_n = [250, 500, 1000, 2000, 3999]
    ex_n = est.excitation_diagnostics(noisy, 0.6, grid_n)
    (out / "excitation_noiseless.csv").write_text(_series_csv({
        "n": ex_q.n, "lambda_min": ex_q.lambda_min, "lambda_max": ex_q.lambda_max, "normalized": ex_q.normalized,
    }))
    (out / "excitation_noisy.csv").write_text(_series_csv({
        "n": ex_n.n, "lambda_min": ex_n.lambda_min, "lambda_max": ex_n.lambda_max,
        "normalized": ex_n.normalized, "ratio": ex_n.ratio,
    }))
    baseline = est.pilot_recover(noisy)
    adaptive = est.adaptive_recover(noisy)
    for name, res in (("support_baseline.csv", baseline), ("support_adaptive.csv", adaptive),
                      ("support_true.csv", None)):
        g = spec.interaction if res is None else res.g_hat
        (out / name).write_text("".join(",".join(_fmt(v) for v in row) + "\n" for row in g))
    return {"baseline_edges": len(baseline.support), "adaptive_edges": len(adaptive.support)}


def paper_repro(out_dir, jobs: int = 1) -> dict[str, Summary]:
    """Run the noiseless, noisy and convergence experiments into ``out_dir``."""
    out = Path(out_dir)
    truth = len(true_support(paper6()))
    summaries = {}
    for name, cfg in paper_configs().items():
        (out / name).mkdir(parents=True, exist_ok=True)
        (out / name / "config.json").write_text(json.dumps(cfg.to_dict(), indent=2, sort_keys=True) + "\n")
        rows = run_experiment(cfg, jobs=jobs)
        summaries[name] = write_outputs(rows, out / name, truth)
    convergence_experiment(out / "convergence")
    return summaries
