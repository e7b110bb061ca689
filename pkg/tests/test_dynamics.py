import warnings

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from netprobe.dynamics import (
    NoiseConfig,
    ProbingConfig,
    SimulationError,
    cesaro_average,
    cesaro_series,
    generate_noise,
    generate_probes,
    read_trajectory_csv,
    replay,
    simulate,
    write_trajectory_csv,
    Trajectory,
)
from netprobe.game import GameSpec, solve_nash

from conftest import random_game


def test_config_invariants():
    with pytest.raises(ValueError):
        ProbingConfig(epsilon=-0.1)
    with pytest.raises(ValueError):
        ProbingConfig(horizon=1)
    with pytest.raises(ValueError):
        NoiseConfig("none", 0.1)
    with pytest.raises(ValueError):
        NoiseConfig("truncated_gaussian", 0.1)
    with pytest.raises(ValueError):
        NoiseConfig("cauchy", 0.1)


def test_zero_epsilon_gives_undamped_normals():
    raw = generate_probes(ProbingConfig(0.0, 11, 300), 4)
    damped = generate_probes(ProbingConfig(0.12, 11, 300), 4)
    decay = (np.arange(300) + 1.0) ** -0.06
    assert np.allclose(damped, raw * decay[:, None], rtol=1e-15, atol=0)
    # undamped draws look standard normal
    assert abs(raw.mean()) < 3 / np.sqrt(raw.size)
    assert abs(raw.var() - 1) < 3 * np.sqrt(2 / raw.size)


def test_probe_second_moment_matches_decay():
    horizon, n = 500, 6
    u = generate_probes(ProbingConfig(0.12, 2024, horizon), n)
    t = np.arange(horizon)
    scaled = np.sum(u**2, axis=1) * (t + 1.0) ** 0.12  # each ~ chi-square(6): mean 6, var 12
    assert abs(scaled.mean() - n) < 3 * np.sqrt(2 * n / horizon)
    # pointwise at fixed t across independent seeds
    m = 400
    at_t = np.array([np.sum(generate_probes(ProbingConfig(0.12, s, horizon), n)[250] ** 2) for s in range(m)])
    expected = n / 251.0**0.12
    assert abs(at_t.mean() - expected) < 3 * np.sqrt(2 * n / m) / 251.0**0.12


def test_probes_are_deterministic():
    a = generate_probes(ProbingConfig(0.1, 5, 50), 3)
    b = generate_probes(ProbingConfig(0.1, 5, 50), 3)
    assert np.array_equal(a, b)
    assert not np.array_equal(a, generate_probes(ProbingConfig(0.1, 6, 50), 3))


def test_collapse_to_intercept():
    a = np.array([0.5, -2.0, 3.0])
    spec = GameSpec(3, np.zeros((3, 3)), a, np.zeros(3, dtype=int))
    traj = simulate(spec, ProbingConfig(0.1, 0, 20), x0=np.array([9.0, 9.0, 9.0]))
    assert np.array_equal(traj.states[1:], np.tile(a, (20, 1)))
    assert not np.any(traj.noises)


def test_lengths_and_fingerprint(paper_game):
    traj = simulate(paper_game, ProbingConfig(0.12, 1, 40))
    assert traj.states.shape == (41, 6) and traj.probes.shape == (40, 6) and traj.noises.shape == (40, 6)
    again = simulate(paper_game, ProbingConfig(0.12, 1, 40))
    assert traj.spec_fingerprint == again.spec_fingerprint
    assert traj.spec_fingerprint != simulate(paper_game, ProbingConfig(0.12, 2, 40)).spec_fingerprint


def test_replay_is_bit_identical(noisy_paper_traj, paper_game):
    states = replay(paper_game, noisy_paper_traj.states[0], noisy_paper_traj.probes, noisy_paper_traj.noises)
    assert np.array_equal(states, noisy_paper_traj.states)


def test_simulation_is_deterministic(paper_game):
    cfg, noise = ProbingConfig(0.03, 9, 300), NoiseConfig("gaussian", 0.03)
    a, b = simulate(paper_game, cfg, noise), simulate(paper_game, cfg, noise)
    assert np.array_equal(a.states, b.states) and np.array_equal(a.noises, b.noises)


def test_noise_does_not_perturb_probes(paper_game):
    cfg = ProbingConfig(0.03, 4, 200)
    quiet = simulate(paper_game, cfg)
    noisy = simulate(paper_game, cfg, NoiseConfig("gaussian", 0.03))
    assert np.array_equal(quiet.probes, noisy.probes)


def test_prefix_consistency(paper_game):
    noise = NoiseConfig("gaussian", 0.03)
    long = simulate(paper_game, ProbingConfig(0.03, 3, 300), noise)
    short = simulate(paper_game, ProbingConfig(0.03, 3, 120), noise)
    pre = long.prefix(120)
    for name in ("states", "probes", "noises"):
        assert np.array_equal(getattr(pre, name), getattr(short, name))


def test_noiseless_error_recursion(paper_game):
    traj = simulate(paper_game, ProbingConfig(0.12, 0, 500))
    e = traj.states - solve_nash(paper_game).actions
    pred = e[:-1] @ paper_game.G.T + traj.probes @ paper_game.B.T
    assert np.max(np.abs(e[1:] - pred)) < 1e-12


def test_probe_superposition():
    rng = np.random.default_rng(8)
    spec = random_game(rng, 4)
    u = rng.normal(size=(60, 4))
    du = rng.normal(size=(60, 4))
    w = 0.1 * rng.normal(size=(60, 4))
    x0 = rng.normal(size=4)
    diff = replay(spec, x0, u + du, w) - replay(spec, x0, u, w)
    zero_game = GameSpec(4, spec.G, np.zeros(4), spec.probe_selector)
    response = replay(zero_game, np.zeros(4), du, np.zeros_like(du))
    assert np.allclose(diff, response, atol=1e-12)


def test_transient_decays_like_geometric_bound(paper_game):
    # e_t = G^t e_0 + (probe-driven part); the x_0 transient falls below 0.05 quickly
    traj = simulate(paper_game, ProbingConfig(0.12, 0, 500))
    xs = solve_nash(paper_game).actions
    e0 = traj.states[0] - xs
    g_t = np.linalg.matrix_power(paper_game.G, 10)
    assert np.linalg.norm(g_t @ e0) < 0.05
    # the remainder is exactly the probe response from a zero initial error
    probe_only = replay(GameSpec(6, paper_game.G, np.zeros(6), paper_game.probe_selector), np.zeros(6),
                        traj.probes, traj.noises)
    transient = np.array([np.linalg.matrix_power(paper_game.G, t) @ e0 for t in range(501)])
    assert np.allclose(traj.states - xs, transient + probe_only, atol=1e-12)


def test_non_finite_state_aborts_with_step():
    spec = GameSpec(2, np.array([[0, 1e200], [1e200, 0]]), np.ones(2), np.ones(2, dtype=int))
    with warnings.catch_warnings():
        warnings.simplefilter("ignore")
        with pytest.raises(SimulationError) as info:
            simulate(spec, ProbingConfig(0.0, 0, 50), x0=np.ones(2))
    assert info.value.step is not None and 1 <= info.value.step <= 50


def test_unstable_game_warns_but_runs():
    spec = GameSpec(2, np.array([[0, 1.5], [1.5, 0]]), np.ones(2), np.ones(2, dtype=int))
    with pytest.warns(RuntimeWarning, match="unstable"):
        traj = simulate(spec, ProbingConfig(0.0, 0, 10))
    assert np.all(np.isfinite(traj.states))


def test_epsilon_regime_warnings(paper_game):
    with pytest.warns(RuntimeWarning, match="1/\\(N\\+1\\)"):
        simulate(paper_game, ProbingConfig(0.5, 0, 10))
    with pytest.warns(RuntimeWarning, match="1/\\(3\\(N\\+2\\)\\)"):
        simulate(paper_game, ProbingConfig(0.12, 0, 10), NoiseConfig("gaussian", 0.03))


@pytest.mark.parametrize("kind,scale,trunc", [("uniform", 0.2, None), ("truncated_gaussian", 0.5, 0.4)])
def test_bounded_noise(kind, scale, trunc):
    w = generate_noise(NoiseConfig(kind, scale, trunc), 7, 5000, 3)
    bound = scale if kind == "uniform" else trunc
    assert np.max(np.abs(w)) <= bound
    assert abs(w.mean()) < 4 * w.std() / np.sqrt(w.size)


def test_gaussian_noise_scale():
    w = generate_noise(NoiseConfig("gaussian", 0.03), 1, 20000, 6)
    assert w.std() == pytest.approx(0.03, rel=0.02)


def test_truncated_noise_prefix_stable():
    cfg = NoiseConfig("truncated_gaussian", 1.0, 1.5)
    assert np.array_equal(generate_noise(cfg, 3, 100, 2), generate_noise(cfg, 3, 400, 2)[:100])


def _const_traj(states):
    states = np.asarray(states, dtype=float)
    t, n = states.shape[0] - 1, states.shape[1]
    return Trajectory(states, np.zeros((t, n)), np.zeros((t, n)), np.ones(n, dtype=int))


def test_cesaro_constant():
    c = np.array([1.5, -2.0])
    assert np.array_equal(cesaro_average(_const_traj(np.tile(c, (11, 1))), 7), c)


def test_cesaro_single_term():
    traj = _const_traj(np.arange(12.0).reshape(6, 2))
    assert np.array_equal(cesaro_average(traj, 1), traj.states[1])


def test_cesaro_alternating_cancels():
    s = np.array([(-1.0) ** k for k in range(21)])
    states = np.stack([s, np.zeros(21)], axis=1)
    assert np.array_equal(cesaro_average(_const_traj(states), 20), np.zeros(2))


@settings(max_examples=30, deadline=None)
@given(seed=st.integers(0, 2**32 - 1), t=st.integers(1, 40))
def test_cesaro_series_matches_average(seed, t):
    rng = np.random.default_rng(seed)
    traj = _const_traj(rng.normal(size=(41, 3)))
    assert np.allclose(cesaro_series(traj)[t - 1], cesaro_average(traj, t), rtol=1e-12, atol=1e-14)


def test_cesaro_gap_shrinks_under_noise(paper_game, noisy_paper_traj):
    xs = solve_nash(paper_game).actions
    gaps = [np.linalg.norm(cesaro_average(noisy_paper_traj, t) - xs) for t in (100, 4000)]
    assert gaps[1] < gaps[0]


def test_csv_round_trip(tmp_path, paper_game):
    traj = simulate(paper_game, ProbingConfig(0.03, 2, 30), NoiseConfig("gaussian", 0.03))
    path = tmp_path / "traj.csv"
    write_trajectory_csv(traj, path)
    header = path.read_text().splitlines()[0].split(",")
    assert header[0] == "t" and header[1] == "x_1" and header[7] == "u_1" and header[-1] == "w_6"
    back = read_trajectory_csv(path, paper_game.probe_selector)
    assert np.array_equal(back.states, traj.states)
    assert np.array_equal(back.probes, traj.probes)
    assert np.array_equal(back.noises, traj.noises)
