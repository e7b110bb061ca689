"""Linear-quadratic network game: model types, Nash equilibrium, stability.

Player ``i`` maximizes ``alpha_i x_i - x_i**2 / 2 + sum_j g_ij x_i x_j``, so the
best response is linear and the Nash equilibrium solves ``(I - G) x* = alpha``.
"""

from __future__ import annotations

import hashlib
import json
from dataclasses import dataclass
from pathlib import Path

import numpy as np

NASH_TOLERANCE = 1e-10
CONDITION_LIMIT = 1e12


class GameError(ValueError):
    """Raised when a game spec cannot be analysed or solved."""


@dataclass(frozen=True, eq=False)
class GameSpec:
    """The ground-truth game ``(G, alpha, B)`` with ``B = diag(probe_selector)``."""

    n_players: int
    interaction: np.ndarray
    marginal_utility: np.ndarray
    probe_selector: np.ndarray

    def __post_init__(self):
        g = np.array(self.interaction, dtype=float)
        a = np.array(self.marginal_utility, dtype=float).reshape(-1)
        b = np.array(self.probe_selector).reshape(-1)
        for arr in (g, a, b):
            arr.setflags(write=False)
        object.__setattr__(self, "interaction", g)
        object.__setattr__(self, "marginal_utility", a)
        object.__setattr__(self, "probe_selector", b)

    @property
    def G(self) -> np.ndarray:
        return self.interaction

    @property
    def alpha(self) -> np.ndarray:
        return self.marginal_utility

    @property
    def B(self) -> np.ndarray:
        return np.diag(self.probe_selector.astype(float))

    def to_dict(self) -> dict:
        return {
            "n_players": int(self.n_players),
            "interaction": [[float(v) for v in row] for row in self.interaction],
            "marginal_utility": [float(v) for v in self.marginal_utility],
            "probe_selector": [int(v) for v in self.probe_selector],
        }

    @classmethod
    def from_dict(cls, data: dict) -> "GameSpec":
        missing = {"n_players", "interaction", "marginal_utility", "probe_selector"} - set(data)
        if missing:
            raise GameError(f"game spec is missing fields: {sorted(missing)}")
        return cls(
            n_players=int(data["n_players"]),
            interaction=np.array(data["interaction"], dtype=float),
            marginal_utility=np.array(data["marginal_utility"], dtype=float),
            probe_selector=np.array(data["probe_selector"]),
        )

    def fingerprint(self) -> str:
        return hashlib.sha256(dumps_game(self).encode()).hexdigest()

    def permuted(self, perm) -> "GameSpec":
        """Relabel players: new player ``k`` is old player ``perm[k]``."""
        p = np.asarray(perm)
        return GameSpec(
            self.n_players,
            self.interaction[np.ix_(p, p)],
            self.marginal_utility[p],
            self.probe_selector[p],
        )


@dataclass(frozen=True)
class NashEquilibrium:
    actions: np.ndarray
    residual: float


@dataclass(frozen=True)
class StabilityReport:
    spectral_radius: float
    is_stable: bool
    eigenvalues: tuple


def dumps_game(spec: GameSpec) -> str:
    # json writes floats via repr, which round-trips exactly
    return json.dumps(spec.to_dict(), indent=2, sort_keys=True) + "\n"


def loads_game(text: str) -> GameSpec:
    return GameSpec.from_dict(json.loads(text))


def load_game(path) -> GameSpec:
    return loads_game(Path(path).read_text())


def save_game(spec: GameSpec, path) -> None:
    Path(path).write_text(dumps_game(spec))


def validate_game(spec: GameSpec) -> list[str]:
    """Return a list of human-readable invariant violations (empty if valid)."""
    problems = []
    n = spec.n_players
    if not isinstance(n, (int, np.integer)) or n < 1:
        problems.append(f"n_players: must be a positive integer, got {n!r}")
        return problems
    g, a, b = spec.interaction, spec.marginal_utility, spec.probe_selector
    if g.shape != (n, n):
        problems.append(f"interaction: shape {g.shape} does not match n_players={n}")
    elif np.any(np.diag(g) != 0):
        bad = [i for i in range(n) if g[i, i] != 0]
        problems.append(f"interaction: diagonal must be exactly zero, nonzero at {bad}")
    if g.size and not np.all(np.isfinite(g)):
        problems.append("interaction: entries must be finite")
    if a.shape != (n,):
        problems.append(f"marginal_utility: length {a.size} does not match n_players={n}")
    elif not np.all(np.isfinite(a)):
        problems.append("marginal_utility: entries must be finite")
    if b.shape != (n,):
        problems.append(f"probe_selector: length {b.size} does not match n_players={n}")
    if not np.all(np.isin(b, (0, 1))):
        problems.append("probe_selector: entries must be 0 or 1")
    return problems


def require_valid(spec: GameSpec) -> None:
    problems = validate_game(spec)
    if problems:
        raise GameError("invalid game spec: " + "; ".join(problems))


def spectral_radius(spec: GameSpec) -> StabilityReport:
    require_valid(spec)
    try:
        eig = np.linalg.eigvals(spec.interaction)
    except np.linalg.LinAlgError as exc:
        raise GameError(f"eigenvalue solver failed on the interaction matrix: {exc}") from exc
    rho = float(np.max(np.abs(eig))) if eig.size else 0.0
    return StabilityReport(rho, rho < 1.0, tuple(complex(v) for v in eig))


def solve_nash(spec: GameSpec) -> NashEquilibrium:
    """Solve ``(I - G) x = alpha`` by dense LU."""
    report = spectral_radius(spec)
    if not report.is_stable:
        raise GameError(
            f"spectral radius {report.spectral_radius:.6g} >= 1; equilibrium is not computed for unstable games"
        )
    m = np.eye(spec.n_players) - spec.interaction
    cond = np.linalg.cond(m)
    if not np.isfinite(cond) or cond > CONDITION_LIMIT:
        raise GameError(f"I - G is ill-conditioned (condition number {cond:.3g} > {CONDITION_LIMIT:.0e})")
    x = np.linalg.solve(m, spec.marginal_utility)
    residual = float(np.linalg.norm(m @ x - spec.marginal_utility))
    return NashEquilibrium(x, residual)


# six-player network used throughout the reference experiments
PAPER6_INTERACTION = (
    (0.0, 0.18, 0.0, 0.0, 0.0, 0.0),
    (0.12, 0.0, -0.15, 0.0, 0.0, 0.0),
    (0.0, 0.10, 0.0, 0.14, 0.0, 0.0),
    (0.0, 0.0, 0.16, 0.0, -0.10, 0.0),
    (0.0, 0.0, 0.0, 0.13, 0.0, 0.11),
    (0.09, 0.0, 0.0, 0.0, 0.12, 0.0),
)
PAPER6_DIGEST = "1558a9aeab5b5516d33ceee3bf6141b007252b0d58c04e44fbf22cb28d6abde0"


def _interaction_digest(rows) -> str:
    return hashlib.sha256(json.dumps([list(map(float, r)) for r in rows]).encode()).hexdigest()


def paper6(alpha=None) -> GameSpec:
    """The six-player benchmark game with every player probed; alpha defaults to ones."""
    if _interaction_digest(PAPER6_INTERACTION) != PAPER6_DIGEST:
        raise GameError("paper-6 interaction matrix does not match its stored digest")
    a = np.ones(6) if alpha is None else np.asarray(alpha, dtype=float)
    return GameSpec(6, np.array(PAPER6_INTERACTION), a, np.ones(6, dtype=int))
