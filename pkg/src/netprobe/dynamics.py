"""Decaying probes and probed repeated-play simulation.

The state update is ``x[t+1] = alpha + G x[t] + B u[t] + w[t+1]`` with probes
``u[t] = v[t] / (t + 1) ** (epsilon / 2)`` and ``v[t] ~ N(0, I)``.
"""

from __future__ import annotations

import csv
import hashlib
import json
import warnings
from dataclasses import dataclass, field

import numpy as np
from scipy.special import ndtr, ndtri

from .game import GameSpec, require_valid, spectral_radius

NOISE_KINDS = ("none", "gaussian", "truncated_gaussian", "uniform")


class SimulationError(RuntimeError):
    def __init__(self, message, step=None):
        super().__init__(message)
        self.step = step


@dataclass(frozen=True)
class ProbingConfig:
    epsilon: float = 0.12
    seed: int = 0
    horizon: int = 500

    def __post_init__(self):
        if not self.epsilon >= 0:
            raise ValueError(f"epsilon must be >= 0, got {self.epsilon}")
        if int(self.horizon) < 2:
            raise ValueError(f"horizon must be >= 2, got {self.horizon}")
        if not 0 <= int(self.seed) < 2**64:
            raise ValueError(f"seed must be a 64-bit unsigned integer, got {self.seed}")


@dataclass(frozen=True)
class NoiseConfig:
    kind: str = "none"
    scale: float = 0.0
    truncation: float | None = None

    def __post_init__(self):
        if self.kind not in NOISE_KINDS:
            raise ValueError(f"noise kind must be one of {NOISE_KINDS}, got {self.kind!r}")
        if not self.scale >= 0:
            raise ValueError(f"noise scale must be >= 0, got {self.scale}")
        if self.kind == "none" and self.scale != 0:
            raise ValueError("noise kind 'none' requires scale 0")
        if self.kind == "truncated_gaussian" and not (self.truncation and self.truncation > 0):
            raise ValueError("truncated_gaussian noise requires a positive truncation bound")

    @property
    def is_noiseless(self) -> bool:
        return self.kind == "none" or self.scale == 0


@dataclass(frozen=True, eq=False)
class Trajectory:
    """States ``x_0..x_T``, probes ``u_0..u_{T-1}`` and noises ``w_1..w_T``.

    ``noises[t]`` holds ``w_{t+1}``, the perturbation entering ``states[t + 1]``.
    """

    states: np.ndarray
    probes: np.ndarray
    noises: np.ndarray
    probe_selector: np.ndarray
    noise_kind: str = "none"
    epsilon: float | None = None
    spec_fingerprint: str = ""
    meta: dict = field(default_factory=dict)

    def __post_init__(self):
        t = self.probes.shape[0]
        if self.states.shape[0] != t + 1 or self.noises.shape != self.probes.shape:
            raise ValueError(
                f"inconsistent trajectory lengths: states {self.states.shape}, "
                f"probes {self.probes.shape}, noises {self.noises.shape}"
            )

    @property
    def horizon(self) -> int:
        return self.probes.shape[0]

    @property
    def n_players(self) -> int:
        return self.states.shape[1]

    @property
    def is_noiseless(self) -> bool:
        return self.noise_kind == "none" or not np.any(self.noises)

    @property
    def B(self) -> np.ndarray:
        return np.diag(np.asarray(self.probe_selector, dtype=float))

    def prefix(self, horizon: int) -> "Trajectory":
        """The first ``horizon`` steps, as if simulated with that horizon."""
        if not 1 <= horizon <= self.horizon:
            raise ValueError(f"prefix horizon {horizon} outside 1..{self.horizon}")
        return Trajectory(
            self.states[: horizon + 1],
            self.probes[:horizon],
            self.noises[:horizon],
            self.probe_selector,
            self.noise_kind,
            self.epsilon,
            self.spec_fingerprint,
            dict(self.meta),
        )


def _streams(seed: int):
    probe_ss, noise_ss = np.random.SeedSequence(int(seed)).spawn(2)
    return np.random.default_rng(probe_ss), np.random.default_rng(noise_ss)


def probe_decay(horizon: int, epsilon: float) -> np.ndarray:
    return (np.arange(horizon) + 1.0) ** (-epsilon / 2.0)


def generate_probes(config: ProbingConfig, n_players: int) -> np.ndarray:
    """Probe sequence of shape ``(horizon, n_players)``.

    Draws are consumed row by row, so a shorter horizon yields a prefix of a
    longer one for the same seed.
    """
    rng, _ = _streams(config.seed)
    v = rng.standard_normal((config.horizon, n_players))
    return v * probe_decay(config.horizon, config.epsilon)[:, None]


def generate_noise(noise: NoiseConfig, seed: int, horizon: int, n_players: int) -> np.ndarray:
    if noise.is_noiseless:
        return np.zeros((horizon, n_players))
    _, rng = _streams(seed)
    if noise.kind == "gaussian":
        return noise.scale * rng.standard_normal((horizon, n_players))
    if noise.kind == "uniform":
        return rng.uniform(-noise.scale, noise.scale, (horizon, n_players))
    # inverse-CDF sampling keeps one uniform draw per entry (prefix-stable)
    c = noise.truncation / noise.scale
    lo, hi = ndtr(-c), ndtr(c)
    q = lo + (hi - lo) * rng.random((horizon, n_players))
    return np.clip(noise.scale * ndtri(q), -noise.truncation, noise.truncation)


def replay(spec: GameSpec, x0, probes: np.ndarray, noises: np.ndarray) -> np.ndarray:
    """Run the recursion for given probe and noise sequences; returns all states."""
    g, a = spec.interaction, spec.marginal_utility
    bu = probes * np.asarray(spec.probe_selector, dtype=float)
    horizon = probes.shape[0]
    states = np.empty((horizon + 1, spec.n_players))
    states[0] = x0
    for t in range(horizon):
        nxt = a + g @ states[t] + bu[t] + noises[t]
        if not np.all(np.isfinite(nxt)):
            raise SimulationError(f"non-finite state at step {t + 1}", step=t + 1)
        states[t + 1] = nxt
    return states


def _fingerprint(spec, probing, noise, x0) -> str:
    payload = {
        "game": spec.to_dict(),
        "probing": [float(probing.epsilon), int(probing.seed), int(probing.horizon)],
        "noise": [noise.kind, float(noise.scale), noise.truncation],
        "x0": [float(v) for v in x0],
    }
    return hashlib.sha256(json.dumps(payload, sort_keys=True).encode()).hexdigest()


def simulate(spec: GameSpec, probing: ProbingConfig, noise: NoiseConfig | None = None, x0=None) -> Trajectory:
    noise = noise or NoiseConfig()
    require_valid(spec)
    n = spec.n_players
    x0 = np.zeros(n) if x0 is None else np.asarray(x0, dtype=float)
    if x0.shape != (n,):
        raise ValueError(f"x0 has shape {x0.shape}, expected ({n},)")

    report = spectral_radius(spec)
    if not report.is_stable:
        warnings.warn(
            f"spectral radius {report.spectral_radius:.4g} >= 1: dynamics are unstable", RuntimeWarning, stacklevel=2
        )
    if noise.is_noiseless and probing.epsilon > 1.0 / (n + 1):
        warnings.warn(
            f"epsilon={probing.epsilon} exceeds 1/(N+1)={1 / (n + 1):.4g}; exact recovery is not guaranteed",
            RuntimeWarning,
            stacklevel=2,
        )
    if not noise.is_noiseless and probing.epsilon >= 1.0 / (3 * (n + 2)):
        warnings.warn(
            f"epsilon={probing.epsilon} is not below 1/(3(N+2))={1 / (3 * (n + 2)):.4g}; "
            "support recovery is not guaranteed",
            RuntimeWarning,
            stacklevel=2,
        )

    probes = generate_probes(probing, n)
    noises = generate_noise(noise, probing.seed, probing.horizon, n)
    states = replay(spec, x0, probes, noises)
    return Trajectory(
        states,
        probes,
        noises,
        spec.probe_selector.copy(),
        "none" if noise.is_noiseless else noise.kind,
        float(probing.epsilon),
        _fingerprint(spec, probing, noise, x0),
    )


def cesaro_average(traj: Trajectory, t: int) -> np.ndarray:
    """Running mean ``(1/t) * sum_{s=1..t} x_s``."""
    if not 1 <= t <= traj.horizon:
        raise ValueError(f"t must be in 1..{traj.horizon}, got {t}")
    return traj.states[1 : t + 1].sum(axis=0) / t


def cesaro_series(traj: Trajectory) -> np.ndarray:
    """All running means; row ``t - 1`` is ``cesaro_average(traj, t)``."""
    steps = np.arange(1, traj.horizon + 1)[:, None]
    return np.cumsum(traj.states[1:], axis=0) / steps


def _fmt(v) -> str:
    return format(float(v), ".17g")


def write_trajectory_csv(traj: Trajectory, path) -> None:
    """One row per time step: ``t, x_1..x_N, u_1..u_N, w_1..w_N``.

    Row ``t`` carries ``x_t``, ``u_t`` (blank at ``t = T``) and ``w_t`` (blank at ``t = 0``).
    """
    n, horizon = traj.n_players, traj.horizon
    header = ["t"] + [f"x_{i}" for i in range(1, n + 1)] + [f"u_{i}" for i in range(1, n + 1)]
    header += [f"w_{i}" for i in range(1, n + 1)]
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(header)
        for t in range(horizon + 1):
            u = [_fmt(v) for v in traj.probes[t]] if t < horizon else [""] * n
            w = [_fmt(v) for v in traj.noises[t - 1]] if t > 0 else [""] * n
            writer.writerow([t] + [_fmt(v) for v in traj.states[t]] + u + w)


def read_trajectory_csv(path, probe_selector, epsilon=None) -> Trajectory:
    with open(path, newline="") as fh:
        rows = list(csv.reader(fh))
    header, body = rows[0], rows[1:]
    n = sum(1 for h in header if h.startswith("x_"))
    if len(header) != 1 + 3 * n or len(body) < 2:
        raise ValueError(f"{path}: not a trajectory file")
    states = np.array([[float(v) for v in r[1 : 1 + n]] for r in body])
    probes = np.array([[float(v) for v in r[1 + n : 1 + 2 * n]] for r in body[:-1]])
    noises = np.array([[float(v) for v in r[1 + 2 * n :]] for r in body[1:]])
    b = np.asarray(probe_selector)
    if b.shape != (n,):
        raise ValueError(f"probe selector has {b.size} entries, trajectory has {n} players")
    return Trajectory(states, probes, noises, b, "none" if not np.any(noises) else "unknown", epsilon)
