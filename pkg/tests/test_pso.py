import numpy as np
import pytest

from adcp.eot import EotConfig
from adcp.oracle import DetectorOracle, GroundTruth, OracleError, mock_always_fooled, \
    mock_never_fooled
from adcp.patch_model import DEFAULT_BOUNDS
from adcp.pso import (SwarmConfig, minimize, position_update, run_attack,
                      velocity_update)


def test_swarm_config_validation():
    with pytest.raises(ValueError):
        SwarmConfig(k=0)
    with pytest.raises(ValueError):
        SwarmConfig(step_max=0)
    with pytest.raises(ValueError):
        SwarmConfig(omega=-0.1)
    with pytest.raises(ValueError):
        SwarmConfig(v_max_frac=0.0)


def test_velocity_update_two_attractors():
    cfg = SwarmConfig()
    v = velocity_update(np.array([0.0]), np.array([0.5]), np.array([0.4]),
                        np.array([0.3]), cfg, v_max=np.array([10.0]))
    assert v[0] == pytest.approx(-0.56, abs=1e-12)


def test_velocity_update_inertia_only():
    cfg = SwarmConfig()
    x = np.array([0.5])
    v = velocity_update(np.array([1.0]), x, x, x, cfg, v_max=np.array([10.0]))
    assert v[0] == pytest.approx(0.9, abs=1e-12)


def test_velocity_update_clamps():
    cfg = SwarmConfig()
    v = velocity_update(np.array([5.0]), np.array([0.0]), np.array([1.0]),
                        np.array([1.0]), cfg, v_max=np.array([0.25]))
    assert v[0] == 0.25
    v = velocity_update(np.array([-5.0]), np.array([1.0]), np.array([0.0]),
                        np.array([0.0]), cfg, v_max=np.array([0.25]))
    assert v[0] == -0.25


def test_position_update_clips():
    pos = position_update(np.array([0.5]), np.array([-0.56]),
                          np.array([0.1]), np.array([0.9]))
    assert pos[0] == 0.1
    pos = position_update(np.array([0.9]), np.array([0.2]),
                          np.array([0.1]), np.array([0.9]))
    assert pos[0] == 0.9
    pos = position_update(np.array([0.4]), np.array([0.0]),
                          np.array([0.1]), np.array([0.9]))
    assert pos[0] == 0.4


def sphere(x, rng):
    return float(np.sum((x - 0.5) ** 2))


def test_minimize_converges_on_sphere():
    res = minimize(sphere, np.zeros(3), np.ones(3),
                   SwarmConfig(k=10, step_max=100), seed=0)
    assert res.best_f < 1e-4
    assert res.n_evals == 10 * 100
    assert not res.early_exit
    assert len(res.trace) == 100


def test_minimize_trace_non_increasing():
    for seed in range(5):
        res = minimize(sphere, np.zeros(4), np.ones(4),
                       SwarmConfig(k=8, step_max=60), seed=seed)
        trace = np.array(res.trace)
        assert np.all(np.diff(trace) <= 0.0 + 1e-15)


def test_minimize_is_deterministic():
    a = minimize(sphere, np.zeros(3), np.ones(3), SwarmConfig(k=6, step_max=40), seed=7)
    b = minimize(sphere, np.zeros(3), np.ones(3), SwarmConfig(k=6, step_max=40), seed=7)
    assert np.array_equal(a.best_x, b.best_x)
    assert a.best_f == b.best_f and a.trace == b.trace
    c = minimize(sphere, np.zeros(3), np.ones(3), SwarmConfig(k=6, step_max=40), seed=8)
    assert not np.array_equal(a.best_x, c.best_x)


def test_minimize_keeps_positions_in_bounds():
    lb, ub = np.array([0.0, -1.0]), np.array([1.0, 2.0])
    seen = []

    def checked(x, rng):
        seen.append(x.copy())
        assert np.all(x >= lb) and np.all(x <= ub)
        return float(np.sum(x ** 2))

    minimize(checked, lb, ub, SwarmConfig(k=5, step_max=30), seed=1)
    assert len(seen) == 150


def test_minimize_respects_pinned_dimension():
    lb = np.array([0.0, 0.42, 0.0])
    ub = np.array([1.0, 0.42, 1.0])

    def pinned(x, rng):
        assert x[1] == 0.42
        return sphere(x, rng)

    res = minimize(pinned, lb, ub, SwarmConfig(k=5, step_max=30), seed=2)
    assert res.best_x[1] == 0.42


def test_minimize_early_exit_stops_evaluating():
    calls = []

    def objective(x, rng):
        calls.append(1)
        f = sphere(x, rng)
        return f, f < 0.05

    res = minimize(objective, np.zeros(3), np.ones(3),
                   SwarmConfig(k=10, step_max=100), seed=3)
    assert res.early_exit
    assert res.n_evals == len(calls) < 1000
    assert sphere(res.best_x, None) < 0.05
    assert len(res.trace) == res.n_iters


def test_minimize_resampled_coefficients():
    cfg = SwarmConfig(k=10, step_max=100, resample_coefficients=True)
    a = minimize(sphere, np.zeros(3), np.ones(3), cfg, seed=0)
    b = minimize(sphere, np.zeros(3), np.ones(3), cfg, seed=0)
    assert a.best_f == b.best_f < 1e-3


def test_minimize_particle_rngs_are_stable_streams():
    # a stochastic objective must see the same per-particle draws regardless
    # of what other particles do, so two runs agree bit for bit
    def noisy(x, rng):
        return float(np.sum((x - 0.5) ** 2) + 0.01 * rng.standard_normal())

    a = minimize(noisy, np.zeros(3), np.ones(3), SwarmConfig(k=4, step_max=20), seed=11)
    b = minimize(noisy, np.zeros(3), np.ones(3), SwarmConfig(k=4, step_max=20), seed=11)
    assert a.best_f == b.best_f and a.trace == b.trace


BOUNDS_VISIBLE = DEFAULT_BOUNDS.replace(r=(32.0, 255.0), g=(32.0, 255.0),
                                        b=(32.0, 255.0))


def test_run_attack_always_fooled(black_image):
    eot = EotConfig(n_samples=6)
    out = run_attack(black_image, GroundTruth(0), mock_always_fooled(), eot,
                     SwarmConfig(bounds=BOUNDS_VISIBLE, seed=5))
    assert out.success
    assert out.evaluations == 1
    assert out.queries == 7  # n_samples + identity
    assert out.iterations_used == 1


def test_run_attack_never_fooled_exhausts_budget(black_image):
    eot = EotConfig(n_samples=2)
    out = run_attack(black_image, GroundTruth(0), mock_never_fooled(), eot,
                     SwarmConfig(k=3, step_max=4, seed=5))
    assert not out.success
    assert out.evaluations == 12
    assert out.queries == 12 * 3
    assert out.fitness_trace == [1.0] * 4
    assert out.iterations_used == 4


def test_run_attack_is_deterministic(black_image):
    eot = EotConfig(n_samples=3)
    cfg = SwarmConfig(k=4, step_max=10, seed=9, bounds=BOUNDS_VISIBLE)
    a = run_attack(black_image, GroundTruth(0), mock_never_fooled(), eot, cfg)
    b = run_attack(black_image, GroundTruth(0), mock_never_fooled(), eot, cfg)
    assert a == b


def test_run_attack_no_queries_after_success(black_image):
    class Counting(DetectorOracle):
        def __init__(self):
            self.calls = 0

        def detect(self, image):
            self.calls += 1
            return []

        def label_space(self):
            return 1

    oracle = Counting()
    eot = EotConfig(n_samples=4)
    out = run_attack(black_image, GroundTruth(0), oracle, eot,
                     SwarmConfig(k=10, step_max=50, seed=0))
    assert out.success
    assert oracle.calls == out.queries == 5


def test_run_attack_propagates_oracle_error_with_spent_queries(black_image):
    class Dying(DetectorOracle):
        def __init__(self):
            self.calls = 0

        def detect(self, image):
            self.calls += 1
            if self.calls > 7:
                raise OracleError("gone")
            return [mock_never_fooled().detect(image)[0]]

        def label_space(self):
            return 1

    eot = EotConfig(n_samples=2)
    with pytest.raises(OracleError) as exc:
        run_attack(black_image, GroundTruth(0), Dying(), eot,
                   SwarmConfig(k=4, step_max=10, seed=1))
    assert exc.value.queries == 7
