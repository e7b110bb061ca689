"""Rank conditions for recovering G from probed trajectories.

Both tests only need to be evaluated at eigenvalues of G: off the spectrum
``lambda I - G`` alone already has full row rank.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass, field

import numpy as np
import scipy.linalg

from .game import GameSpec, require_valid, spectral_radius

EIGEN_MERGE_TOL = 1e-8


@dataclass(frozen=True)
class EigenRecord:
    eigenvalue: complex
    rank_augmented: int  # rank [lambda I - G, alpha, B]
    rank_pbh: int  # rank [lambda I - G, B]
    tolerance: float


@dataclass(frozen=True)
class RecoverabilityReport:
    theorem1_holds: bool | None
    controllable: bool | None
    per_eigenvalue: list = field(default_factory=list)
    rank_tolerance: float = 0.0
    kalman_rank: int | None = None
    pbh_kalman_agree: bool | None = None

    def exit_code(self) -> int:
        if self.theorem1_holds is False:
            return 3
        if self.controllable is False:
            return 2
        return 0

    def format(self) -> str:
        lines = [
            f"{'condition':<28}{'verdict':>10}",
            f"{'rank[lI-G, alpha, B] >= N-1':<28}{_yes(self.theorem1_holds):>10}",
            f"{'(G, B) controllable (PBH)':<28}{_yes(self.controllable):>10}",
        ]
        if self.kalman_rank is not None:
            lines.append(f"{'Kalman rank':<28}{self.kalman_rank:>10d}")
            lines.append(f"{'PBH/Kalman agree':<28}{_yes(self.pbh_kalman_agree):>10}")
        lines.append(f"{'rank tolerance':<28}{self.rank_tolerance:>10.3g}")
        lines.append("")
        lines.append(f"{'eigenvalue':>24}  {'rank[.,a,B]':>11}  {'rank[.,B]':>9}")
        for rec in self.per_eigenvalue:
            ev = rec.eigenvalue
            lines.append(f"{ev.real:>+12.6f}{ev.imag:>+11.6f}j  {rec.rank_augmented:>11d}  {rec.rank_pbh:>9d}")
        return "\n".join(lines)


def _yes(flag) -> str:
    return "n/a" if flag is None else ("yes" if flag else "no")


def numerical_rank(m: np.ndarray) -> tuple[int, float]:
    """SVD rank with tolerance ``max(m.shape) * eps * sigma_max``."""
    if m.size == 0:
        return 0, 0.0
    s = np.linalg.svd(m, compute_uv=False)
    tol = max(m.shape) * np.finfo(float).eps * (s[0] if s.size else 0.0)
    return int(np.sum(s > tol)), float(tol)


def eigenvalue_error_bounds(g: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Eigenvalues with first-order error bounds ``kappa_i * N * eps * ||G||``.

    ``kappa_i = 1 / |y_i^H x_i|`` is the eigenvalue condition number. Defective
    eigenvalues are perturbed by up to ``eps**(1/m)``, so the bound is capped at
    ``eps**(1/N)`` times the scale instead of growing without limit.
    """
    n = g.shape[0]
    w, vl, vr = scipy.linalg.eig(g, left=True, right=True)
    eps = np.finfo(float).eps
    scale = n * max(np.linalg.norm(g, 2), 1.0)
    with np.errstate(divide="ignore", over="ignore"):
        kappa = 1.0 / np.abs(np.sum(vl.conj() * vr, axis=0))
    bound = np.minimum(kappa * eps, eps ** (1.0 / max(n, 1))) * scale
    return w, bound


def distinct_eigenvalues(g: np.ndarray, tol: float = EIGEN_MERGE_TOL) -> list[complex]:
    """One representative per cluster of numerically repeated eigenvalues.

    Eigenvalues closer than ``tol`` are merged, as are pairs that both carry
    error bounds larger than their gap (members of a split Jordan block are all
    ill-conditioned, a well-conditioned neighbour is not); the cluster mean is returned, which stays accurate for a split
    Jordan block even though its members do not.
    """
    w, bound = eigenvalue_error_bounds(g)
    parent = list(range(w.size))

    def root(i):
        while parent[i] != i:
            parent[i] = parent[parent[i]]
            i = parent[i]
        return i

    for i in range(w.size):
        for j in range(i + 1, w.size):
            if abs(w[i] - w[j]) <= max(tol, 2.0 * min(bound[i], bound[j])):
                parent[root(i)] = root(j)
    clusters: dict = {}
    for i in range(w.size):
        clusters.setdefault(root(i), []).append(w[i])
    return [complex(np.mean(members)) for _, members in sorted(clusters.items())]


def kalman_matrix(g: np.ndarray, b: np.ndarray) -> np.ndarray:
    n = g.shape[0]
    blocks, cur = [], b
    for _ in range(n):
        blocks.append(cur)
        cur = g @ cur
    return np.hstack(blocks) if blocks else np.zeros((n, 0))


def _probe_columns(spec: GameSpec) -> np.ndarray:
    # all-zero columns of B cannot change a rank; keep only probed players
    return spec.B[:, np.asarray(spec.probe_selector) == 1]


def _eigen_records(spec: GameSpec) -> list[EigenRecord]:
    n = spec.n_players
    g = spec.interaction.astype(complex)
    b = _probe_columns(spec)
    a = spec.marginal_utility.reshape(n, 1)
    records = []
    spectral_radius(spec)
    for lam in distinct_eigenvalues(spec.interaction):
        pencil = lam * np.eye(n) - g
        r_aug, tol_aug = numerical_rank(np.hstack([pencil, a, b]))
        r_pbh, tol_pbh = numerical_rank(np.hstack([pencil, b]))
        records.append(EigenRecord(lam, r_aug, r_pbh, max(tol_aug, tol_pbh)))
    return records


def check_theorem1(spec: GameSpec) -> RecoverabilityReport:
    """Existence of a recovering experiment: rank ``[lambda I - G, alpha, B] >= N - 1``."""
    require_valid(spec)
    recs = _eigen_records(spec)
    holds = all(r.rank_augmented >= spec.n_players - 1 for r in recs)
    tol = max((r.tolerance for r in recs), default=0.0)
    return RecoverabilityReport(holds, None, recs, tol)


def check_controllability(spec: GameSpec) -> RecoverabilityReport:
    """PBH test at every eigenvalue, cross-checked against the Kalman rank."""
    require_valid(spec)
    n = spec.n_players
    recs = _eigen_records(spec)
    pbh = all(r.rank_pbh == n for r in recs)
    k_rank, k_tol = numerical_rank(kalman_matrix(spec.interaction, _probe_columns(spec)))
    agree = (k_rank == n) == pbh
    if not agree:
        warnings.warn(
            f"PBH ({'controllable' if pbh else 'uncontrollable'}) and Kalman rank ({k_rank}/{n}) disagree; "
            "the instance is numerically ill-conditioned",
            RuntimeWarning,
            stacklevel=2,
        )
    tol = max([r.tolerance for r in recs] + [k_tol])
    return RecoverabilityReport(None, pbh, recs, tol, k_rank, agree)


def check(spec: GameSpec) -> RecoverabilityReport:
    t1 = check_theorem1(spec)
    ctrl = check_controllability(spec)
    return RecoverabilityReport(
        t1.theorem1_holds,
        ctrl.controllable,
        ctrl.per_eigenvalue,
        max(t1.rank_tolerance, ctrl.rank_tolerance),
        ctrl.kalman_rank,
        ctrl.pbh_kalman_agree,
    )
