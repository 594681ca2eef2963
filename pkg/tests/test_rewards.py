import numpy as np
import pytest

from genpolicy.nets import AdamState, finite_diff_check
from genpolicy.rewards import (FidelityReward, RewardModel, adv_reward, bce_loss_and_grad, disc_update,
                               encode_samples, metric_reward)
from genpolicy.worlds import build_discrete_world, build_gmm_world


@pytest.fixture(scope="module")
def gworld():
    return build_gmm_world(2, 2, seed=0)


def test_encoding_shapes(gworld):
    x = np.zeros((3, 2))
    assert encode_samples(gworld, x, [0, 1, 1]).shape == (3, 4)
    d = build_discrete_world(3, 2, 2, seed=0)
    e = encode_samples(d, np.array([[0, 1, 1]]), [1])
    np.testing.assert_array_equal(e, [[1, 0, 0, 1, 0, 1, 0, 1]])


def test_bce_gradient_matches_finite_differences(gworld):
    rng = np.random.default_rng(0)
    model = RewardModel(gworld, (6, 5), rng=rng)
    model.net.params += 0.2 * rng.standard_normal(model.net.n_params)
    real = (gworld.sample(7, 0, rng), np.zeros(7, dtype=int))
    fake = (rng.standard_normal((5, 2)), np.ones(5, dtype=int))
    loss, grad = bce_loss_and_grad(model, real, fake)
    xr = encode_samples(gworld, *real)
    xf = encode_samples(gworld, *fake)
    x = np.concatenate([xr, xf])
    y = np.r_[np.ones(7), np.zeros(5)]
    wt = np.r_[np.full(7, 1 / 7), np.full(5, 1 / 5)]

    def f(out):
        z = out[:, 0]
        return float(np.sum(wt * (np.logaddexp(0, z) - y * z))), (wt * (1 / (1 + np.exp(-z)) - y))[:, None]

    res = finite_diff_check(model.net, x, None, f, analytic=grad)
    assert res.max_rel_error < 1e-4


def test_reward_strictly_inside_unit_interval(gworld):
    model = RewardModel(gworld, (8,), rng=np.random.default_rng(0))
    model.net.params *= 50.0
    r = adv_reward(model, np.random.default_rng(1).standard_normal((500, 2)) * 10, np.zeros(500, dtype=int))
    assert np.all((r > 0) & (r < 1))


def test_disc_update_learns_separable_clusters(gworld):
    rng = np.random.default_rng(0)
    model = RewardModel(gworld, (16, 16), rng=rng)
    opt = AdamState.zeros(model.net.n_params, lr=1e-2, beta1=0.5)
    cls = np.zeros(256, dtype=int)
    for _ in range(100):
        real = (rng.standard_normal((256, 2)) * 0.3 + [2, 2], cls)
        fake = (rng.standard_normal((256, 2)) * 0.3 - [2, 2], cls)
        opt, loss = disc_update(model, real, fake, opt)
    assert loss < 0.1


def test_disc_update_rejects_empty(gworld):
    model = RewardModel(gworld, (4,), rng=np.random.default_rng(0))
    with pytest.raises(ValueError):
        disc_update(model, (np.zeros((0, 2)), np.zeros(0, dtype=int)), (np.zeros((1, 2)), [0]),
                    AdamState.zeros(model.net.n_params))


def test_fidelity_reward_monotone_in_density(gworld):
    fid = FidelityReward(gworld, n_ref=2000, seed=0)
    mode = gworld.means[gworld.components(0)[0]][None]
    far = np.array([[20.0, 20.0]])
    assert fid(mode, [0])[0] > 0.5 > fid(far, [0])[0]


def test_metric_reward_is_negative_frechet(gworld):
    rng = np.random.default_rng(0)
    mu, cov = gworld.class_moments(None)
    x = rng.multivariate_normal(mu, cov, size=5000)
    assert -0.05 < metric_reward(x, (mu, cov)) <= 0.0
    assert metric_reward(x + 3.0, (mu, cov)) < -10


def test_disc_update_usually_lowers_loss_on_its_batch(gworld):
    rng = np.random.default_rng(5)
    model = RewardModel(gworld, (32, 32), rng=rng)
    opt = AdamState.zeros(model.net.n_params, lr=1e-3, beta1=0.5)
    decreased = 0
    for _ in range(100):
        c = rng.integers(0, 2, 128)
        real = (gworld.sample(128, c, rng), c)
        fake = (rng.standard_normal((128, 2)) * 2.0, c)
        before, _ = bce_loss_and_grad(model, real, fake)
        opt, _ = disc_update(model, real, fake, opt)
        decreased += bce_loss_and_grad(model, real, fake)[0] < before
    assert decreased >= 90


def test_identical_batches_sit_at_log_two(gworld):
    rng = np.random.default_rng(6)
    model = RewardModel(gworld, (8,), rng=rng)
    x, c = gworld.sample(64, 0, rng), np.zeros(64, dtype=int)
    loss, _ = bce_loss_and_grad(model, (x, c), (x, c))
    assert loss >= 2 * np.log(2) - 1e-12


def test_zero_learning_rate_leaves_model(gworld):
    rng = np.random.default_rng(7)
    model = RewardModel(gworld, (8,), rng=rng)
    before = model.net.params.copy()
    batch = (gworld.sample(16, 0, rng), np.zeros(16, dtype=int))
    disc_update(model, batch, (rng.standard_normal((16, 2)), batch[1]), AdamState.zeros(model.net.n_params, lr=0.0))
    np.testing.assert_array_equal(model.net.params, before)
