import numpy as np
import pytest

from genpolicy.agent import AgentConfig, PolicyAgent
from genpolicy.config import config_from_dict
from genpolicy.nets import adam_step
from genpolicy.rl import PpoConfig, advantage, blend_raw, policy_optimizer, ppo_loss, ppo_update, rollout
from genpolicy.training import Trainer
from genpolicy.worlds import build_discrete_world, build_gmm_world


@pytest.fixture(scope="module")
def gworld():
    return build_gmm_world(2, 2, seed=0)


def make_rollout(world, paradigm="diffusion", T=3, n=16, seed=0, hidden=(8,)):
    agent = PolicyAgent(paradigm, world, T, AgentConfig(hidden=hidden), rng=np.random.default_rng(seed))
    rng = np.random.default_rng(seed + 1)
    ro = rollout(world, agent, T, rng.integers(0, world.C, n), rng,
                 reward_fn=lambda s: np.tanh(s.sample()[:, 0]), beta=0.8)
    return agent, ro


def test_rollout_shapes(gworld):
    agent, ro = make_rollout(gworld)
    assert ro.features.shape[:2] == (3, 16) and ro.raw.shape == (3, 16, 2)
    assert ro.rewards.shape == (16,) and not ro.aborted
    assert np.all(ro.final.kappa == 0)


def test_first_update_ratios_are_one(gworld):
    agent, ro = make_rollout(gworld)
    res = ppo_loss(ro, agent)
    assert np.max(np.abs(res.ratios - 1.0)) <= 1e-10


def test_clipped_never_exceeds_unclipped(gworld):
    agent, ro = make_rollout(gworld)
    opt = policy_optimizer(agent, PpoConfig(policy_lr=0.05))
    for _ in range(5):
        res = ppo_loss(ro, agent)
        assert np.all(res.surrogate <= res.unclipped + 1e-15)
        agent.net.params, opt = adam_step(agent.net.params, res.grad, opt)
    assert np.max(np.abs(res.ratios - 1)) > 0.2


def test_zero_advantage_and_no_value_term_leave_parameters(gworld):
    agent, ro = make_rollout(gworld)
    ro.rewards = np.zeros_like(ro.rewards)
    assert np.all(advantage(ro) == 0)
    before = agent.net.params.copy()
    cfg = PpoConfig(value_coef=0.0)
    ppo_update(ro, agent, policy_optimizer(agent, cfg), cfg)
    np.testing.assert_array_equal(agent.net.params, before)


def test_ppo_gradient_matches_finite_differences(gworld):
    agent, ro = make_rollout(gworld, hidden=(6,))
    rng = np.random.default_rng(3)
    agent.net.params = agent.net.params + 0.05 * rng.standard_normal(agent.net.n_params)
    res = ppo_loss(ro, agent, eps=0.2, c=0.5)
    num = np.zeros_like(res.grad)
    h = 1e-6
    base = agent.net.params.copy()
    for i in range(len(base)):
        for sgn in (1, -1):
            agent.net.params = base.copy()
            agent.net.params[i] += sgn * h
            num[i] += sgn * ppo_loss(ro, agent, 0.2, 0.5).loss
    agent.net.params = base
    num /= 2 * h
    rel = np.abs(res.grad - num) / np.maximum(np.abs(num), 1e-6)
    assert rel.max() < 1e-4


def test_advantage_is_reward_minus_value(gworld):
    agent, ro = make_rollout(gworld)
    ro.values = np.random.default_rng(0).standard_normal(ro.values.shape)
    np.testing.assert_array_equal(advantage(ro), ro.rewards[None] - ro.values)


def test_blend_raw_broadcasts_per_trajectory():
    a, b = np.zeros((3, 2)), np.ones((3, 2))
    np.testing.assert_allclose(blend_raw(a, b, np.array([0.0, 0.5, 1.0])), [[0, 0], [0.5, 0.5], [1, 1]])


def test_ppo_config_validation():
    with pytest.raises(ValueError):
        PpoConfig(clip_eps=0.0)
    with pytest.raises(ValueError):
        PpoConfig(batch_size=0)


def test_discrete_rollout_runs():
    w = build_discrete_world(4, 2, 2, seed=0)
    agent = PolicyAgent("maskgit", w, 6, rng=np.random.default_rng(0))
    rng = np.random.default_rng(0)
    ro = rollout(w, agent, 6, [0, 1, 1], rng, reward_fn=lambda s: np.zeros(s.n))
    assert np.all(ro.final.tokens >= 0)


def test_training_bit_reproducible():
    cfg = {"paradigm": "diffusion", "T": 3, "seed": 4,
           "ppo": {"batch_size": 32, "iterations": 3}, "eval": {"every": 0},
           "agent": {"hidden": [16]}, "reward": {"hidden": [16]}}
    a = Trainer(config_from_dict(cfg)).run()
    b = Trainer(config_from_dict(cfg)).run()
    np.testing.assert_array_equal(a.agent.net.params, b.agent.net.params)
    np.testing.assert_array_equal(a.reward_model.net.params, b.reward_model.net.params)
    assert a.history == b.history
