"""Command-line entry point: simulate, check, recover, experiment, paper-repro."""

from __future__ import annotations

import argparse
import sys
from dataclasses import replace
from pathlib import Path


from . import estimation as est
from .dynamics import NOISE_KINDS, NoiseConfig, ProbingConfig, read_trajectory_csv, simulate, write_trajectory_csv
from .game import load_game, paper6
from .harness import ExperimentConfig, paper_repro, run_experiment, true_support, write_outputs
from .recoverability import check


def _game(ref):
    return paper6() if ref in (None, "paper-6") else load_game(ref)


def _noise(args):
    if args.noise_scale is None or args.noise_scale == 0:
        return NoiseConfig()
    return NoiseConfig(args.noise_kind, args.noise_scale, args.truncation)


def cmd_simulate(args) -> int:
    spec = _game(args.game)
    traj = simulate(spec, ProbingConfig(args.epsilon, args.seed, args.horizon), _noise(args))
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    write_trajectory_csv(traj, out / "trajectory.csv")
    print(f"wrote {out / 'trajectory.csv'} ({traj.horizon} steps, {traj.n_players} players)")
    return 0


def cmd_check(args) -> int:
    report = check(_game(args.game))
    print(report.format())
    return report.exit_code()


def cmd_recover(args) -> int:
    spec = _game(args.game)
    traj = read_trajectory_csv(args.trajectory, spec.probe_selector, args.epsilon)
    if args.pipeline == "noiseless":
        result = est.noiseless_recover(traj, args.edge_threshold)
    else:
        scale = args.schedule_scale if args.schedule_scale == "residual" else float(args.schedule_scale)
        result = est.adaptive_recover(traj, args.alpha0, scale, args.edge_threshold)
    est.write_recovery(result, args.out)
    if not result.ok:
        print(f"insufficient excitation (lambda_min={result.diagnostics.lambda_min:.3g})", file=sys.stderr)
        return 1
    edges = est.sorted_support(result.support)
    print(f"{result.method}: {len(edges)} edges " + " ".join(f"{i + 1}<-{j + 1}" for i, j in edges))
    return 0


def _apply_overrides(cfg: ExperimentConfig, args) -> ExperimentConfig:
    if args.seed is not None:
        cfg.seeds = [args.seed]
    if args.epsilon is not None:
        cfg.probing = replace(cfg.probing, epsilon=args.epsilon)
    if args.noise_scale is not None:
        kind = cfg.noise.kind if cfg.noise.kind != "none" else "gaussian"
        cfg.noise = NoiseConfig(kind, args.noise_scale, cfg.noise.truncation) if args.noise_scale else NoiseConfig()
    if args.edge_threshold is not None:
        cfg.edge_threshold = args.edge_threshold
    return cfg


def cmd_experiment(args) -> int:
    cfg = _apply_overrides(ExperimentConfig.load(args.config), args)
    out = args.out or cfg.output_dir
    if out is None:
        print("no output directory: pass --out or set output_dir in the config", file=sys.stderr)
        return 2
    rows = run_experiment(cfg, jobs=args.jobs)
    summary = write_outputs(rows, out, len(true_support(cfg.resolve_game())))
    print(summary.text, end="")
    return 0


def cmd_paper_repro(args) -> int:
    summaries = paper_repro(args.out, jobs=args.jobs)
    for name, summary in summaries.items():
        print(f"== {name}")
        for cid, (ok, detail) in summary.flags.items():
            print(f"[{'PASS' if ok else 'FAIL'}] {cid}: {detail}")
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="netprobe", description=__doc__)
    sub = parser.add_subparsers(dest="command", required=True)

    def noise_flags(p):
        p.add_argument("--noise-kind", choices=NOISE_KINDS[1:], default="gaussian")
        p.add_argument("--noise-scale", type=float, default=None)
        p.add_argument("--truncation", type=float, default=None)

    p = sub.add_parser("simulate", help="simulate a probed trajectory and export it as CSV")
    p.add_argument("--game", default="paper-6", help="game spec JSON file or 'paper-6'")
    p.add_argument("--epsilon", type=float, default=0.12)
    p.add_argument("--horizon", type=int, default=500)
    p.add_argument("--seed", type=int, default=0)
    noise_flags(p)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_simulate)

    p = sub.add_parser("check", help="recoverability and controllability report")
    p.add_argument("--game", default="paper-6")
    p.set_defaults(func=cmd_check)

    p = sub.add_parser("recover", help="estimate G from a trajectory CSV")
    p.add_argument("--trajectory", required=True)
    p.add_argument("--game", default="paper-6", help="game spec supplying the probe selector")
    p.add_argument("--pipeline", choices=("noiseless", "noisy"), default="noiseless")
    p.add_argument("--edge-threshold", type=float, default=est.DEFAULT_EDGE_THRESHOLD)
    p.add_argument("--alpha0", type=float, default=est.DEFAULT_ALPHA0)
    p.add_argument("--schedule-scale", default="residual")
    p.add_argument("--epsilon", type=float, default=None)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_recover)

    p = sub.add_parser("experiment", help="run a seeded grid from a JSON config")
    p.add_argument("--config", required=True)
    p.add_argument("--seed", type=int, default=None, help="run this single seed instead of the config's list")
    p.add_argument("--epsilon", type=float, default=None)
    p.add_argument("--noise-scale", type=float, default=None)
    p.add_argument("--edge-threshold", type=float, default=None)
    p.add_argument("--jobs", type=int, default=1)
    p.add_argument("--out", default=None)
    p.set_defaults(func=cmd_experiment)

    p = sub.add_parser("paper-repro", help="run the built-in six-player experiments")
    p.add_argument("--out", required=True)
    p.add_argument("--jobs", type=int, default=1)
    p.set_defaults(func=cmd_paper_repro)
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    return args.func(args)


if __name__ == "__main__":
    sys.exit(main())
