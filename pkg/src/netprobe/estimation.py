"""Recovering the interaction matrix from trajectories.

Two pipelines:

* noiseless: difference out the intercept, regress ``y_{t+1} = x_{t+1} - x_t`` on
  ``phi_t = [y_t; u_t; u_{t-1}]`` and read ``G`` off the first block of the
  least-squares coefficient ``[G, B, -B]``;
* perturbed: an RLS pilot for ``[alpha, G]`` on ``z_k = [1; x_k]`` followed by a
  weighted lasso whose weights are the inverse shifted pilot magnitudes.

A trajectory of horizon ``T`` yields ``T - 1`` samples in either pipeline
(``t, k = 1 .. T-1``).
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field, replace
from pathlib import Path

import numpy as np

from .dynamics import Trajectory

DEFAULT_EDGE_THRESHOLD = 1e-3
DEFAULT_ALPHA0 = 100.0
CD_TOL = 1e-10
CD_MAX_SWEEPS = 10_000


class InsufficientExcitation(ValueError):
    def __init__(self, message, lambda_min=float("nan")):
        super().__init__(message)
        self.lambda_min = lambda_min


class NoisyTrajectoryError(ValueError):
    pass


# ---------------------------------------------------------------------------
# result types


@dataclass(frozen=True)
class Diagnostics:
    lambda_min: float = float("nan")
    lambda_max: float = float("nan")
    delta_n: float = float("nan")
    lambda_n: float = float("nan")
    schedule_scale: float = 1.0
    iterations: int = 0
    objective: float = float("nan")
    converged: bool = True
    n_samples: int = 0

    def as_dict(self) -> dict:
        return {
            "lambda_min": self.lambda_min,
            "lambda_max": self.lambda_max,
            "delta_n": self.delta_n,
            "lambda_n": self.lambda_n,
            "schedule_scale": self.schedule_scale,
            "iterations": self.iterations,
            "objective": self.objective,
            "converged": self.converged,
            "n_samples": self.n_samples,
        }


@dataclass(frozen=True, eq=False)
class RecoveryResult:
    """Estimate of ``(alpha, G)``.

    ``status`` is ``"ok"`` or ``"insufficient_excitation"``; in the latter case
    no estimate is carried and only ``diagnostics.lambda_min`` is meaningful.
    """

    method: str
    g_hat: np.ndarray | None
    alpha_hat: np.ndarray | None
    diagnostics: Diagnostics
    status: str = "ok"
    edge_threshold: float = DEFAULT_EDGE_THRESHOLD
    extras: dict = field(default_factory=dict)

    @property
    def ok(self) -> bool:
        return self.status == "ok"

    @property
    def support(self) -> frozenset:
        if self.g_hat is None:
            return frozenset()
        return extract_support(self, self.edge_threshold)


def _insufficient(method, lambda_min, n_samples, edge_threshold, **diag):
    return RecoveryResult(
        method,
        None,
        None,
        Diagnostics(lambda_min=lambda_min, n_samples=n_samples, converged=False, **diag),
        status="insufficient_excitation",
        edge_threshold=edge_threshold,
    )


def extract_support(result, threshold: float = DEFAULT_EDGE_THRESHOLD) -> frozenset:
    """Off-diagonal ``(i, j)`` with ``|g_ij| > threshold``."""
    g = result.g_hat if isinstance(result, RecoveryResult) else np.asarray(result)
    if g is None:
        return frozenset()
    mask = np.abs(g) > threshold
    np.fill_diagonal(mask, False)
    return frozenset((int(i), int(j)) for i, j in zip(*np.nonzero(mask)))


def sorted_support(support) -> list:
    return sorted(support)


def _extreme_eigs(m: np.ndarray) -> tuple[float, float]:
    ev = np.linalg.eigvalsh((m + m.T) / 2)
    return float(ev[0]), float(ev[-1])


def _singular(lmin: float, lmax: float, dim: int) -> bool:
    return not lmin > dim * np.finfo(float).eps * max(lmax, 1.0)


# ---------------------------------------------------------------------------
# noiseless pipeline


@dataclass(frozen=True, eq=False)
class IncrementalRegression:
    regressors: np.ndarray  # row t-1 is phi_t
    targets: np.ndarray  # row t-1 is y_{t+1}
    information_matrix: np.ndarray
    trajectory: Trajectory

    @property
    def n_samples(self) -> int:
        return self.regressors.shape[0]


def build_incremental_regression(traj: Trajectory) -> IncrementalRegression:
    if not traj.is_noiseless:
        raise NoisyTrajectoryError(
            "trajectory carries decision perturbations; temporal differencing correlates the noise "
            "with the regressors, use the adaptive (RLS + weighted lasso) pipeline instead"
        )
    if traj.horizon < 2:
        raise ValueError("the incremental regression needs a horizon of at least 2")
    x, u = traj.states, traj.probes
    t = np.arange(1, traj.horizon)
    y_t = x[t] - x[t - 1]
    phi = np.hstack([y_t, u[t], u[t - 1]])
    targets = x[t + 1] - x[t]
    return IncrementalRegression(phi, targets, phi.T @ phi, traj)


def ols_recover(reg: IncrementalRegression, edge_threshold: float = DEFAULT_EDGE_THRESHOLD) -> RecoveryResult:
    n = reg.trajectory.n_players
    info = reg.information_matrix
    lmin, lmax = _extreme_eigs(info)
    if reg.n_samples < 3 * n or _singular(lmin, lmax, 3 * n):
        return _insufficient("noiseless_ols", lmin, reg.n_samples, edge_threshold, lambda_max=lmax)
    theta_t = np.linalg.solve(info, reg.regressors.T @ reg.targets).T  # N x 3N
    g_hat = theta_t[:, :n]
    traj = reg.trajectory
    resid = traj.states[1:] - traj.states[:-1] @ g_hat.T - traj.probes * traj.probe_selector
    alpha_hat = resid.mean(axis=0)
    return RecoveryResult(
        "noiseless_ols",
        g_hat,
        alpha_hat,
        Diagnostics(lambda_min=lmin, lambda_max=lmax, n_samples=reg.n_samples),
        edge_threshold=edge_threshold,
        extras={"b_hat": theta_t[:, n : 2 * n], "b_hat_lag": theta_t[:, 2 * n :]},
    )


def noiseless_recover(traj: Trajectory, edge_threshold: float = DEFAULT_EDGE_THRESHOLD) -> RecoveryResult:
    return ols_recover(build_incremental_regression(traj), edge_threshold)


# ---------------------------------------------------------------------------
# perturbed pipeline


def first_order_regression(traj: Trajectory) -> tuple[np.ndarray, np.ndarray]:
    """Regressors ``z_k = [1; x_k]`` and adjusted targets ``x_{k+1} - B u_k``, k = 1..T-1."""
    k = np.arange(1, traj.horizon)
    z = np.hstack([np.ones((k.size, 1)), traj.states[k]])
    xhat = traj.states[k + 1] - traj.probes[k] * traj.probe_selector
    return z, xhat


@dataclass(frozen=True, eq=False)
class EstimatorState:
    p_matrix: np.ndarray
    theta: np.ndarray  # (N+1) x N; theta.T is the pilot [alpha, G]
    step: int
    info_min: float
    info_max: float
    alpha0: float
    residual_scale: float = float("nan")

    @property
    def pilot(self) -> np.ndarray:
        return self.theta.T


def rls_pilot(traj: Trajectory, alpha0: float = DEFAULT_ALPHA0) -> EstimatorState:
    """Recursive least squares from ``P_0 = alpha0 I``, ``Theta_0 = 0``."""
    if not alpha0 > 0:
        raise ValueError(f"alpha0 must be positive, got {alpha0}")
    z_all, xhat_all = first_order_regression(traj)
    dim = traj.n_players + 1
    p = alpha0 * np.eye(dim)
    theta = np.zeros((dim, traj.n_players))
    for k, (z, xh) in enumerate(zip(z_all, xhat_all), start=1):
        pz = p @ z
        p = p - np.outer(pz, pz) / (1.0 + z @ pz)
        theta = theta + np.outer(p @ z, xh - z @ theta)
        if not (np.all(np.isfinite(p)) and np.all(np.isfinite(theta))):
            raise FloatingPointError(f"non-finite RLS update at step {k}")
    gram = z_all.T @ z_all
    if z_all.shape[0]:
        lmin, lmax = _extreme_eigs(gram)
        resid = xhat_all - z_all @ theta
        sigma = float(np.sqrt(np.mean(resid**2)))
    else:
        lmin = lmax = 0.0
        sigma = float("nan")
    return EstimatorState(p, theta, z_all.shape[0], lmin, lmax, float(alpha0), sigma)


def rls_closed_form(traj: Trajectory, alpha0: float = DEFAULT_ALPHA0) -> np.ndarray:
    """Batch ridge solution ``(I/alpha0 + sum z z')^{-1} sum z xhat'`` matching the RLS recursion."""
    z, xhat = first_order_regression(traj)
    s = np.eye(z.shape[1]) / alpha0 + z.T @ z
    return np.linalg.solve(s, z.T @ xhat)


def compute_schedules(state: EstimatorState, scale: float = 1.0) -> tuple[float, float]:
    """Pilot shift ``delta_n`` and penalty level ``lambda_n``.

    ``delta_n = sqrt(log lmax / lmin)`` and ``lambda_n**2 = lmax * sqrt(log(lmax) * lmin)``
    with ``lmax`` floored at ``e`` inside the logarithms. Both are multiplied by
    ``scale``.
    """
    lmin, lmax = state.info_min, state.info_max
    dim = state.theta.shape[0]
    if lmin <= 0 or _singular(lmin, lmax, dim):
        raise InsufficientExcitation(f"information matrix is singular (lambda_min={lmin:.3g})", lmin)
    log_max = math.log(max(lmax, math.e))
    delta = math.sqrt(log_max / lmin)
    lam = math.sqrt(lmax * math.sqrt(log_max * lmin))
    return scale * delta, scale * lam


def shifted_pilot(pilot: np.ndarray, delta: float) -> np.ndarray:
    sign = np.where(pilot >= 0, 1.0, -1.0)  # sgn(0) taken as +1
    return pilot + sign * delta


def penalty_weights(pilot: np.ndarray, delta: float, lam: float) -> np.ndarray:
    """Per-coefficient l1 penalty ``lam / |shifted pilot|``; zero everywhere when ``lam == 0``."""
    denom = np.abs(shifted_pilot(pilot, delta))
    if lam == 0:
        return np.zeros_like(denom)
    with np.errstate(divide="ignore"):
        return np.where(denom > 0, lam / np.where(denom > 0, denom, 1.0), np.inf)


def _cd_row(gram, cross, penalty, beta, tol, max_sweeps, history=None):
    """Cyclic coordinate descent for ``b'Sb - 2c'b + sum_j pen_j |b_j|``."""
    beta = beta.astype(float).copy()
    diag = np.diag(gram)
    grad = gram @ beta - cross  # half the gradient of the smooth part
    half_pen = penalty / 2.0
    dim = beta.size
    sweeps, converged = 0, False
    while sweeps < max_sweeps:
        sweeps += 1
        biggest = 0.0
        for j in range(dim):
            old = beta[j]
            if diag[j] <= 0 or np.isinf(half_pen[j]):
                new = 0.0
            else:
                r = diag[j] * old - grad[j]
                new = math.copysign(max(abs(r) - half_pen[j], 0.0), r) / diag[j]
            if new != old:
                delta = new - old
                grad += delta * gram[:, j]
                beta[j] = new
                biggest = max(biggest, abs(delta))
        if history is not None:
            history.append(_row_objective(gram, cross, penalty, beta))
        if biggest < tol * (1.0 + np.max(np.abs(beta))):
            converged = True
            break
    return beta, sweeps, converged


def _row_objective(gram, cross, penalty, beta, const=0.0):
    pen = np.sum(np.where(beta != 0, penalty * np.abs(beta), 0.0))
    return float(beta @ gram @ beta - 2 * cross @ beta + const + pen)


@dataclass(frozen=True, eq=False)
class LassoProblem:
    """Row-separable weighted lasso ``sum_k ||xhat_k - Gamma z_k||^2 + sum pen * |Gamma|``."""

    gram: np.ndarray  # sum z z'
    cross: np.ndarray  # sum z xhat', (N+1) x N
    target_energy: float  # sum ||xhat||^2
    penalty: np.ndarray  # N x (N+1)

    def objective(self, gamma: np.ndarray) -> float:
        total = self.target_energy
        for i in range(gamma.shape[0]):
            total += _row_objective(self.gram, self.cross[:, i], self.penalty[i], gamma[i])
        return total


def lasso_problem(traj: Trajectory, penalty: np.ndarray) -> LassoProblem:
    z, xhat = first_order_regression(traj)
    return LassoProblem(z.T @ z, z.T @ xhat, float(np.sum(xhat**2)), penalty)


def lasso_certificate(problem: LassoProblem, gamma: np.ndarray) -> float:
    """Largest violation of the subgradient optimality conditions, relative to the data scale.

    Zero coordinates need ``|grad_j| <= pen_j``; nonzero ones ``grad_j + pen_j sgn(gamma_j) = 0``,
    where ``grad`` is the gradient of the quadratic part.
    """
    grad = 2.0 * (gamma @ problem.gram - problem.cross.T)
    pen = np.where(np.isinf(problem.penalty), 0.0, problem.penalty)
    zero = gamma == 0
    forced = np.isinf(problem.penalty)
    viol_zero = np.where(zero & ~forced, np.maximum(np.abs(grad) - pen, 0.0), 0.0)
    viol_nz = np.where(~zero, np.abs(grad + pen * np.sign(gamma)), 0.0)
    scale = max(1.0, float(np.max(np.abs(problem.cross))))
    return float(max(viol_zero.max(initial=0.0), viol_nz.max(initial=0.0)) / scale)


def weighted_lasso(
    state: EstimatorState,
    traj: Trajectory,
    delta_n: float,
    lambda_n: float,
    *,
    edge_threshold: float = DEFAULT_EDGE_THRESHOLD,
    tol: float = CD_TOL,
    max_sweeps: int = CD_MAX_SWEEPS,
    record_history: bool = False,
) -> RecoveryResult:
    """Minimize the adaptively weighted l1 program row by row.

    Column 0 of the returned ``Gamma`` is the intercept estimate, the rest is ``G``.
    Coordinate descent is warm-started at the pilot.
    """
    if not state.info_min > 0:
        raise InsufficientExcitation("information matrix is singular", state.info_min)
    pilot = state.pilot
    penalty = penalty_weights(pilot, delta_n, lambda_n)
    problem = lasso_problem(traj, penalty)
    gamma = np.empty_like(pilot)
    sweeps, converged, histories = 0, True, []
    for i in range(pilot.shape[0]):
        hist = [] if record_history else None
        gamma[i], s, ok = _cd_row(problem.gram, problem.cross[:, i], penalty[i], pilot[i], tol, max_sweeps, hist)
        sweeps = max(sweeps, s)
        converged &= ok
        histories.append(hist)
    diag = Diagnostics(
        lambda_min=state.info_min,
        lambda_max=state.info_max,
        delta_n=delta_n,
        lambda_n=lambda_n,
        iterations=sweeps,
        objective=problem.objective(gamma),
        converged=converged,
        n_samples=state.step,
    )
    extras = {"shifted_pilot": shifted_pilot(pilot, delta_n), "problem": problem, "gamma": gamma.copy()}
    if record_history:
        extras["history"] = histories
    return RecoveryResult(
        "adaptive_sparse", gamma[:, 1:], gamma[:, 0], diag, edge_threshold=edge_threshold, extras=extras
    )


def pilot_recover(
    traj: Trajectory,
    alpha0: float = DEFAULT_ALPHA0,
    edge_threshold: float = DEFAULT_EDGE_THRESHOLD,
    state: EstimatorState | None = None,
) -> RecoveryResult:
    """Unpenalized baseline: the RLS pilot itself."""
    state = rls_pilot(traj, alpha0) if state is None else state
    if state.step == 0 or _singular(state.info_min, state.info_max, state.theta.shape[0]):
        return _insufficient("pilot_rls", state.info_min, state.step, edge_threshold, lambda_max=state.info_max)
    pilot = state.pilot
    diag = Diagnostics(lambda_min=state.info_min, lambda_max=state.info_max, n_samples=state.step)
    return RecoveryResult("pilot_rls", pilot[:, 1:], pilot[:, 0], diag, edge_threshold=edge_threshold)


def adaptive_recover(
    traj: Trajectory,
    alpha0: float = DEFAULT_ALPHA0,
    schedule_scale="residual",
    edge_threshold: float = DEFAULT_EDGE_THRESHOLD,
    state: EstimatorState | None = None,
    **lasso_kwargs,
) -> RecoveryResult:
    """RLS pilot, shifted weights, weighted lasso.

    ``schedule_scale`` multiplies both ``delta_n`` and ``lambda_n``: ``"residual"``
    uses the pilot's residual standard deviation, a number is used as given
    (``1.0`` is the unscaled schedule).
    """
    state = rls_pilot(traj, alpha0) if state is None else state
    scale = state.residual_scale if schedule_scale == "residual" else float(schedule_scale)
    try:
        delta_raw, lam_raw = compute_schedules(state)
    except InsufficientExcitation as exc:
        return _insufficient("adaptive_sparse", exc.lambda_min, state.step, edge_threshold, lambda_max=state.info_max)
    result = weighted_lasso(
        state, traj, scale * delta_raw, scale * lam_raw, edge_threshold=edge_threshold, **lasso_kwargs
    )
    diag = replace(result.diagnostics, delta_n=delta_raw, lambda_n=lam_raw, schedule_scale=scale)
    return replace(result, diagnostics=diag)


# ---------------------------------------------------------------------------
# excitation diagnostics


@dataclass(frozen=True)
class ExcitationSeries:
    n: np.ndarray
    lambda_min: np.ndarray
    lambda_max: np.ndarray
    normalized: np.ndarray  # lambda_min / n**alpha
    ratio: np.ndarray  # (lmax / lmin) * sqrt(log lmax / lmin)


def _regressor_rows(source) -> tuple[np.ndarray, float | None]:
    if isinstance(source, IncrementalRegression):
        return source.regressors, source.trajectory.epsilon
    if isinstance(source, Trajectory):
        return first_order_regression(source)[0], source.epsilon
    raise TypeError(f"expected IncrementalRegression or Trajectory, got {type(source).__name__}")


def excitation_diagnostics(source, alpha: float, n_grid=None, check_alpha: bool = True) -> ExcitationSeries:
    """``lambda_min(n) / n**alpha`` of the information matrix on a grid of sample sizes.

    ``source`` is an :class:`IncrementalRegression` (noiseless pipeline) or a
    :class:`Trajectory`, whose first-order regressors ``[1; x_k]`` are used.
    """
    rows, eps = _regressor_rows(source)
    if check_alpha and not (0.5 < alpha < 1 - (eps or 0.0)):
        raise ValueError(f"alpha must lie in (1/2, 1 - epsilon) = (0.5, {1 - (eps or 0.0):.4g}), got {alpha}")
    total = rows.shape[0]
    if n_grid is None:
        n_grid = np.unique(np.geomspace(rows.shape[1], total, 20).astype(int))
    grid = np.asarray(sorted(int(n) for n in n_grid))
    if grid.size and (grid[0] < 1 or grid[-1] > total):
        raise ValueError(f"grid values must lie in 1..{total}")
    gram = np.zeros((rows.shape[1], rows.shape[1]))
    lmins, lmaxs, start = [], [], 0
    for n in grid:
        chunk = rows[start:n]
        gram += chunk.T @ chunk
        start = n
        lo, hi = _extreme_eigs(gram)
        lmins.append(lo)
        lmaxs.append(hi)
    lmin, lmax = np.array(lmins), np.array(lmaxs)
    with np.errstate(divide="ignore", invalid="ignore"):
        log_max = np.log(np.maximum(lmax, math.e))
        ratio = (lmax / lmin) * np.sqrt(log_max / lmin)
    return ExcitationSeries(grid, lmin, lmax, lmin / grid.astype(float) ** alpha, ratio)


# ---------------------------------------------------------------------------
# export


def write_recovery(result: RecoveryResult, out_dir) -> None:
    """``g_hat.csv`` (N rows), ``alpha_hat.csv`` (one line), ``diagnostics.csv`` (name,value)."""
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    fmt = lambda v: format(float(v), ".17g")  # noqa: E731
    if result.ok:
        (out / "g_hat.csv").write_text("".join(",".join(fmt(v) for v in row) + "\n" for row in result.g_hat))
        (out / "alpha_hat.csv").write_text(",".join(fmt(v) for v in result.alpha_hat) + "\n")
        edges = sorted_support(result.support)
        (out / "support.csv").write_text("i,j\n" + "".join(f"{i + 1},{j + 1}\n" for i, j in edges))
    with open(out / "diagnostics.csv", "w", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(["name", "value"])
        writer.writerow(["method", result.method])
        writer.writerow(["status", result.status])
        for key, value in result.diagnostics.as_dict().items():
            writer.writerow([key, fmt(value) if isinstance(value, float) else value])
