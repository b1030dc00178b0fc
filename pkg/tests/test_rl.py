import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from rivernav.environment import StepInfo
from rivernav.guidance import PathFix
from rivernav.rl import (
    Adam,
    AdamConfig,
    Agent,
    BootstrappedNet,
    CheckpointError,
    ReplayBuffer,
    ShapeError,
    TrainConfig,
    TrainingDiverged,
    adam_step,
    draw_mask,
    dqn_target,
    ensemble_variance,
    epsilon_at,
    keb_statistic,
    keb_target,
    keb_weights,
    load_checkpoint,
    read_curve,
    save_checkpoint,
    select_action_greedy,
    select_action_train,
    train,
    write_curve,
)


def phi(z):
    return 0.5 * (1.0 + math.erf(z / math.sqrt(2.0)))


def brute_keb_value(q, var):
    """Kernel-weighted action value with explicit loops."""
    a_star = max(range(len(q)), key=lambda a: q[a])
    ks = []
    for a in range(len(q)):
        denom = max(math.sqrt(var[a] + var[a_star]), 1e-8)
        ks.append(phi((q[a] - q[a_star]) / denom))
    total = sum(ks)
    return sum(k / total * qa for k, qa in zip(ks, q)), [k / total for k in ks]


# ---------------------------------------------------------------- targets


def test_keb_matches_brute_force():
    rng = np.random.default_rng(0)
    worst = 0.0
    for _ in range(10_000):
        q = rng.normal(0, 3, 3)
        var = rng.exponential(1.0, 3)
        w = keb_weights(q, var)
        value = float((w * q).sum())
        ref, ref_w = brute_keb_value(list(q), list(var))
        worst = max(worst, abs(value - ref), float(np.max(np.abs(w - ref_w))))
        assert abs(w.sum() - 1.0) <= 1e-12
    assert worst <= 1e-10


def test_keb_worked_example():
    w = keb_weights(np.array([2.0, 1.0, 0.0]), np.array([1.0, 1.0, 1.0]))
    assert float(w @ np.array([2.0, 1.0, 0.0])) == pytest.approx(1.51484, abs=1e-4)


def test_zero_variance_recovers_max():
    q = np.array([[0.3, 1.7, -2.0], [5.0, 4.0, 4.5]])
    w = keb_weights(q, np.zeros_like(q))
    assert np.allclose((w * q).sum(axis=1), q.max(axis=1), atol=1e-6)
    y = keb_target([1.0, 0.5], [False, False], q[None], 0.9, var=np.zeros_like(q))
    assert np.allclose(y[:, 0], dqn_target([1.0, 0.5], [False, False], q, 0.9), atol=1e-6)


def test_statistic_is_zero_for_greedy_action():
    z = keb_statistic(np.array([1.0, 3.0, 2.0]), np.array([0.5, 0.5, 0.5]))
    assert z[1] == 0.0 and np.all(z <= 0)


@settings(max_examples=200)
@given(arrays(float, (4, 3), elements=st.floats(-100, 100)), arrays(float, (4, 3), elements=st.floats(0, 50)))
def test_keb_value_bounded_by_actions(q, var):
    v = (keb_weights(q, var) * q).sum(axis=1)
    assert np.all(v <= q.max(axis=1) + 1e-9)
    assert np.all(v >= q.min(axis=1) - 1e-9)


def test_dqn_target_terminal_masks_bootstrap():
    y = dqn_target([1.0, 2.0], [True, False], np.array([[9.0, 1.0], [3.0, 4.0]]), 0.5)
    assert np.array_equal(y, [1.0, 4.0])


def test_keb_target_shapes_and_terminals():
    rng = np.random.default_rng(1)
    q = rng.normal(size=(5, 4, 3))
    y = keb_target(np.ones(4), [False, True, False, False], q, 0.99)
    assert y.shape == (4, 5)
    assert np.all(y[1] == 1.0)
    var = ensemble_variance(q)
    assert np.allclose(var, q.var(axis=0, ddof=1))
    assert np.all(ensemble_variance(q[:1]) == 0.0)


# ---------------------------------------------------------------- network


def test_gradient_check_small_net():
    net = BootstrappedNet((3, 4), (4, 2), n_heads=2).initialize(7)
    rng = np.random.default_rng(3)
    obs = rng.normal(size=(5, 3))
    actions = rng.integers(0, 2, 5)
    targets = rng.normal(size=(5, 2))
    mask = np.array([[1, 1], [1, 0], [0, 1], [1, 1], [1, 0]], bool)
    _, grad = net.loss_and_grad(obs, actions, targets, mask)
    eps = 1e-6
    base = net.params.copy()
    worst = 0.0
    for k in range(net.size):
        net.params[:] = base
        net.params[k] += eps
        lp, _ = net.loss_and_grad(obs, actions, targets, mask)
        net.params[:] = base
        net.params[k] -= eps
        lm, _ = net.loss_and_grad(obs, actions, targets, mask)
        num = (lp - lm) / (2 * eps)
        denom = max(abs(num), abs(grad[k]), 1e-7)
        worst = max(worst, abs(num - grad[k]) / denom)
    net.params[:] = base
    assert worst < 1e-4


def test_forward_shapes_and_head_independence():
    net = BootstrappedNet((14, 16), (16, 8, 3), n_heads=4).initialize(0)
    assert net.forward(np.zeros(14)).shape == (4, 3)
    assert net.forward(np.zeros((7, 14))).shape == (4, 7, 3)
    q = net.forward(np.ones(14))
    assert not np.allclose(q[0], q[1])
    with pytest.raises(ShapeError):
        net.forward(np.zeros(13))
    with pytest.raises(ShapeError):
        BootstrappedNet((3, 4), (5, 2), 1)


def test_initialization_is_seeded_and_bounded():
    a = BootstrappedNet((14, 128), (128, 3), 10).initialize(5)
    b = BootstrappedNet((14, 128), (128, 3), 10).initialize(5)
    assert np.array_equal(a.params, b.params)
    W, _ = a.core[0]
    assert np.max(np.abs(W)) <= 1 / math.sqrt(14)


def test_empty_mask_gives_zero_gradient():
    net = BootstrappedNet((3, 4), (4, 2), n_heads=2).initialize(0)
    loss, grad = net.loss_and_grad(np.ones((2, 3)), [0, 1], np.zeros((2, 2)), np.zeros((2, 2), bool))
    assert loss == 0.0 and not grad.any()


def test_masked_head_receives_no_gradient():
    net = BootstrappedNet((3, 4), (4, 2), n_heads=2).initialize(0)
    mask = np.array([[True, False]] * 3)
    _, grad = net.loss_and_grad(np.ones((3, 3)), [0, 1, 0], np.ones((3, 2)), mask)
    _, heads = net.views(grad)
    assert not heads[0][0][1].any() and heads[0][0][0].any()


# ---------------------------------------------------------------- optimizer, replay


def test_adam_first_step_is_lr_times_sign():
    cfg = AdamConfig(lr=0.01)
    p, m, v = adam_step(np.array([1.0, -1.0]), np.array([3.0, -0.5]), np.zeros(2), np.zeros(2), 1, cfg)
    assert np.allclose(p, [1.0 - 0.01, -1.0 + 0.01], atol=1e-8)


def test_adam_matches_hand_recursion():
    cfg = AdamConfig(lr=0.1)
    opt = Adam(1, cfg)
    x = np.array([2.0])
    m = v = 0.0
    ref = 2.0
    for t in range(1, 6):
        g = 2 * x[0]
        opt.step(x, np.array([g]))
        gr = 2 * ref
        m = 0.9 * m + 0.1 * gr
        v = 0.999 * v + 0.001 * gr * gr
        ref -= 0.1 * (m / (1 - 0.9**t)) / (math.sqrt(v / (1 - 0.999**t)) + 1e-8)
        assert x[0] == pytest.approx(ref, rel=1e-12)
    with pytest.raises(ValueError):
        adam_step(x, x, x, x, 0, cfg)


def test_replay_is_fifo_and_samples_distinct():
    buf = ReplayBuffer(3, 2, 1)
    for k in range(5):
        buf.add(np.full(2, k), k % 3, float(k), np.full(2, k + 1), False, [True])
    assert len(buf) == 3
    assert sorted(buf.rewards) == [2.0, 3.0, 4.0]
    idx = buf.sample_indices(3, np.random.default_rng(0))
    assert len(set(idx)) == 3
    with pytest.raises(ValueError):
        buf.sample_indices(4, np.random.default_rng(0))


def test_mask_never_empty():
    rng = np.random.default_rng(0)
    masks = np.array([draw_mask(rng, 3, 0.1) for _ in range(2000)])
    assert masks.any(axis=1).all()
    full = np.array([draw_mask(rng, 10, 0.5) for _ in range(4000)])
    assert full.mean() == pytest.approx(0.5, abs=0.02)


# ---------------------------------------------------------------- action selection


def test_greedy_uses_head_mean_and_prefers_hold():
    assert select_action_greedy([[1.0, 0.0, 0.0], [0.0, 0.0, 3.0]]) == 2
    assert select_action_greedy([[1.0, 1.0, 0.0]]) == 1
    assert select_action_greedy([[2.0, 1.0, 2.0]]) == 0


def test_epsilon_schedule():
    cfg = TrainConfig(algo="dqn", n_heads=1, eps_decay_steps=100)
    assert epsilon_at(0, cfg) == 1.0
    assert epsilon_at(50, cfg) == pytest.approx(0.505)
    assert epsilon_at(1000, cfg) == pytest.approx(0.01)
    assert select_action_train([0.0, 2.0, 1.0]) == 1
    rng = np.random.default_rng(0)
    picks = {select_action_train([0.0, 2.0, 1.0], rng, 1.0) for _ in range(100)}
    assert picks == {0, 1, 2}


def test_train_config_validation():
    with pytest.raises(ValueError):
        TrainConfig(algo="sarsa")
    with pytest.raises(ValueError):
        TrainConfig(algo="dqn", n_heads=3)
    dqn = TrainConfig.for_algo("dqn")
    assert dqn.n_heads == 1 and dqn.core == (256,) and dqn.head == (128,)
    assert TrainConfig.from_dict(TrainConfig().to_dict()) == TrainConfig()


# ---------------------------------------------------------------- training loop


class ToyEnv:
    """One-dimensional corridor: reward 1 per step near the centre."""

    def __init__(self, seed, bad_reward=False):
        self.rng = np.random.default_rng(seed)
        self.bad = bad_reward

    def reset(self):
        self.x, self.t = float(self.rng.uniform(-1, 1)), 0
        return self._obs()

    def _obs(self):
        o = np.zeros(14)
        o[0] = self.x
        return o

    def step(self, a):
        self.x += 0.1 * (a - 1)
        self.t += 1
        r = math.nan if self.bad else float(abs(self.x) < 0.5)
        terminal = abs(self.x) > 2
        done = terminal or self.t >= 20
        fix = PathFix(0, 0.0, 0.0, 0.0, self.x, 0.0, 0.0, 0.0)
        return self._obs(), r, done, StepInfo("x" if done else None, terminal, fix, None)


def small_cfg(**kw):
    base = dict(total_steps=300, batch=16, learning_starts=32, target_sync=50, n_heads=3, core=(16,),
                head=(16,), checkpoint_every=100, buffer_size=1000)
    base.update(kw)
    return TrainConfig(**base)


def test_zero_step_run_is_valid():
    res = train(lambda s: ToyEnv(s), small_cfg(total_steps=0), seed=0)
    assert res.curve == [] and res.agent.step == 0


def test_training_is_seeded(tmp_path):
    a = train(lambda s: ToyEnv(s), small_cfg(), seed=1)
    b = train(lambda s: ToyEnv(s), small_cfg(), seed=1)
    assert np.array_equal(a.agent.net.params, b.agent.net.params)
    assert a.curve == b.curve
    assert a.agent.updates > 0


def test_checkpoint_roundtrip_and_resume(tmp_path):
    res = train(lambda s: ToyEnv(s), small_cfg(), seed=2, checkpoint_dir=tmp_path, checkpoint_extra={"k": 1})
    assert (tmp_path / "step_100.npz").exists() and (tmp_path / "step_300.npz").exists()
    agent, extra = load_checkpoint(tmp_path / "step_300.npz")
    assert extra == {"k": 1}
    for attr in ("step", "episode", "updates"):
        assert getattr(agent, attr) == getattr(res.agent, attr)
    assert np.array_equal(agent.net.params, res.agent.net.params)
    assert np.array_equal(agent.target.params, res.agent.target.params)
    assert np.array_equal(agent.opt.v, res.agent.opt.v) and agent.opt.t == res.agent.opt.t
    assert agent.rng.random() == res.agent.rng.random()
    save_checkpoint(tmp_path / "again.npz", agent)
    mid, _ = load_checkpoint(tmp_path / "step_100.npz")
    more = train(lambda s: ToyEnv(s), small_cfg(total_steps=250), seed=2, agent=mid)
    assert more.agent.step == 250


def test_checkpoint_errors(tmp_path):
    (tmp_path / "junk.npz").write_bytes(b"not a zip")
    with pytest.raises(CheckpointError):
        load_checkpoint(tmp_path / "junk.npz")
    np.savez(tmp_path / "partial.npz", params=np.zeros(3))
    with pytest.raises(CheckpointError):
        load_checkpoint(tmp_path / "partial.npz")


def test_nan_aborts_with_diagnostic(tmp_path):
    with pytest.raises(TrainingDiverged):
        train(lambda s: ToyEnv(s, bad_reward=True), small_cfg(), seed=0, checkpoint_dir=tmp_path)
    assert (tmp_path / "diagnostic.npz").exists()


def test_dqn_variant_trains():
    cfg = small_cfg(algo="dqn", n_heads=1, eps_decay_steps=200)
    res = train(lambda s: ToyEnv(s), cfg, seed=0)
    assert res.agent.updates > 0 and res.agent.net.n_heads == 1


def test_curve_roundtrip(tmp_path):
    rows = [(1, 20, 3.5, 0.25), (2, 40, -1.0, 1.0 / 3)]
    write_curve(rows, tmp_path / "c.csv")
    assert read_curve(tmp_path / "c.csv") == rows


def test_agent_input_scaling():
    cfg = small_cfg(input_scale=tuple([2.0] * 14))
    agent = Agent(cfg, 0)
    obs = np.arange(14.0)
    assert np.array_equal(agent.q_values(obs), agent.net.forward(obs / 2.0))
