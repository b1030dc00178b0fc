import math

import numpy as np
import pytest

from rivernav import pid
from rivernav.pid import (
    FAILURE_COST,
    REFERENCE_GAINS,
    PidConfigError,
    PidGains,
    PidScenario,
    PidState,
    PsoConfig,
    pid_command,
    pid_objective,
    pso_minimize,
    read_gains,
    sphere,
    write_gains,
    write_report,
)


def test_pid_law_in_degrees():
    g = PidGains(2.0, 10.0, 0.5)
    st = PidState()
    out = pid_command(math.radians(3.0), math.radians(0.1), st, g, dt=1.0)
    assert math.degrees(out) == pytest.approx(2 * 3 - 10 * 0.1 + 0.5 * 3)
    assert st.integral == pytest.approx(3.0)


def test_integral_clamped():
    g = PidGains(0.0, 0.0, 0.1)
    st = PidState()
    for _ in range(1000):
        out = pid_command(math.radians(10.0), 0.0, st, g, dt=1.0, max_rudder_deg=20.0)
    assert st.integral == pytest.approx(200.0)
    assert math.degrees(out) == pytest.approx(20.0)


def test_gains_must_be_finite():
    with pytest.raises(PidConfigError):
        PidGains(math.nan, 1.0)
    with pytest.raises(ValueError):
        pid_command(0.0, 0.0, PidState(), REFERENCE_GAINS, dt=0.0)


def test_leaving_the_canal_costs_failure(vessel):
    # reversed proportional action steers away from the path and out of the canal
    assert pid_objective(PidGains(-5.0, 0.0, 0.0), PidScenario(), vessel) == FAILURE_COST


def test_uncontrolled_run_costs_more_than_reference_gains(vessel):
    idle = pid_objective(PidGains(0.0, 0.0, 0.0), PidScenario(), vessel)
    assert idle > 10 * pid_objective(REFERENCE_GAINS, PidScenario(), vessel)


def test_reference_gains_have_finite_cost(vessel):
    j = pid_objective(REFERENCE_GAINS, PidScenario(), vessel)
    assert 0 < j < 10
    # squared course error in rad^2 summed over a 1000 s horizon
    assert j == pytest.approx(pid_objective(REFERENCE_GAINS, PidScenario(), vessel))


@pytest.mark.parametrize("seed", range(10))
def test_pso_sphere_oracle(seed):
    cfg = PsoConfig(lower=(-5.0,) * 3, upper=(5.0,) * 3, seed=seed)
    res = pso_minimize(sphere, cfg)
    vals = [h[1] for h in res.history]
    assert all(b <= a for a, b in zip(vals, vals[1:]))
    assert res.best_value < 1e-3
    assert sphere(res.best) == res.best_value


def test_pso_is_order_independent():
    cfg = PsoConfig(particles=10, iterations=20, lower=(-5.0,) * 2, upper=(5.0,) * 2, seed=3)
    a = pso_minimize(sphere, cfg)
    b = pso_minimize(None, cfg, evaluate_many=lambda xs: [sphere(x) for x in reversed(xs)][::-1])
    assert np.array_equal(a.best, b.best) and a.history == b.history


def test_pso_respects_box():
    cfg = PsoConfig(particles=8, iterations=30, lower=(1.0, 2.0), upper=(3.0, 4.0), seed=0)
    seen = []
    pso_minimize(lambda x: seen.append(np.array(x)) or float(-x.sum()), cfg)
    pts = np.array(seen)
    assert np.all(pts >= [1.0, 2.0]) and np.all(pts <= [3.0, 4.0])


def test_pso_config_errors():
    with pytest.raises(PidConfigError):
        PsoConfig(lower=(0.0, 5.0, 0.0), upper=(10.0, 1.0, 0.1))
    with pytest.raises(PidConfigError):
        PsoConfig(particles=0)
    with pytest.raises(PidConfigError):
        PsoConfig(lower=(0.0,), upper=(1.0, 2.0))
    with pytest.raises(PidConfigError):
        pid.pso_tune(PsoConfig(lower=(0.0,), upper=(1.0,)))


def test_gains_file_roundtrip(tmp_path):
    g = PidGains(2.81, 64.0, 0.0)
    write_gains(g, tmp_path / "g.yaml", {"J": 1.5})
    assert read_gains(tmp_path / "g.yaml") == g
    (tmp_path / "bad.yaml").write_text("Kp: 1\n")
    with pytest.raises(PidConfigError):
        read_gains(tmp_path / "bad.yaml")


def test_report_lists_history(tmp_path):
    res = pso_minimize(sphere, PsoConfig(particles=4, iterations=3, lower=(-1.0,), upper=(1.0,)))
    write_report(res, tmp_path / "r.csv")
    lines = (tmp_path / "r.csv").read_text().splitlines()
    assert lines[0] == "iteration,gbest_J,g0" and len(lines) == 5


def test_noisy_controller_is_seeded(vessel):
    env = pid.scenario_env(PidScenario(), vessel)
    env.reset(heading_noise=0.0)
    a = pid.PidController(REFERENCE_GAINS, 0.01, 0.01, np.random.default_rng(4)).command(env)
    b = pid.PidController(REFERENCE_GAINS, 0.01, 0.01, np.random.default_rng(4)).command(env)
    c = pid.PidController(REFERENCE_GAINS).command(env)
    assert a == b and a != c
