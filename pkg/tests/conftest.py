import numpy as np
import pytest

from netprobe import GameSpec, NoiseConfig, ProbingConfig, paper6, simulate


def random_game(rng, n, density=0.4, rho_max=0.9, probe_prob=0.5, all_probed=False):
    """Sparse random game with zero diagonal, rescaled so rho(G) <= rho_max."""
    g = rng.normal(size=(n, n)) * (rng.random((n, n)) < density)
    np.fill_diagonal(g, 0.0)
    rho = np.max(np.abs(np.linalg.eigvals(g))) if n else 0.0
    if rho > rho_max:
        g *= rho_max / rho * rng.uniform(0.5, 1.0)
    b = np.ones(n, dtype=int) if all_probed else (rng.random(n) < probe_prob).astype(int)
    return GameSpec(n, g, rng.normal(size=n), b)


@pytest.fixture(scope="session")
def paper_game():
    return paper6()


@pytest.fixture(scope="session")
def noisy_paper_traj(paper_game):
    return simulate(paper_game, ProbingConfig(0.03, 0, 4000), NoiseConfig("gaussian", 0.03))


@pytest.fixture(scope="session")
def quiet_paper_traj(paper_game):
    return simulate(paper_game, ProbingConfig(0.12, 0, 2000))


ACCEPTANCE_LINES: list = []


def record_criterion(cid: str, ok: bool, detail: str) -> None:
    line = f"[{'PASS' if ok else 'FAIL'}] criterion {cid}: {detail}"
    ACCEPTANCE_LINES.append(line)
    print(line)


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)
