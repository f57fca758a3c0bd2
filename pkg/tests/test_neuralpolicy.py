import numpy as np
import pytest

from helpers import fd_grad_log_prob, max_relative_error, random_case
from sreinforce import neuralpolicy as nnp


@pytest.fixture
def cartpole_net():
    return nnp.init([4, 128, 2], np.random.default_rng(0))


def test_zero_output_layer_is_uniform():
    net = nnp.init([3, 8, 4], np.random.default_rng(0))
    net.layers[-1].W[:] = 0.0
    dist = nnp.forward(net, np.array([0.3, -2.0, 1.0]))
    assert np.allclose(dist.probs, 0.25)


def test_cartpole_shape_probabilities(cartpole_net):
    dist = nnp.forward(cartpole_net, np.array([0.01, -0.2, 0.03, 0.4]))
    assert dist.probs.shape == (2,)
    assert dist.probs.sum() == pytest.approx(1.0, abs=1e-12)
    assert np.all(dist.probs > 0)


def test_parameter_count(cartpole_net):
    assert cartpole_net.n_params == 4 * 128 + 128 + 128 * 2 + 2


def test_forward_rejects_bad_state(cartpole_net):
    with pytest.raises(ValueError):
        nnp.forward(cartpole_net, np.zeros(3))
    with pytest.raises(ValueError):
        nnp.forward(cartpole_net, np.array([0.0, np.nan, 0.0, 0.0]))


def test_gaussian_head_outputs():
    net = nnp.init([2, 16, 1], np.random.default_rng(1), "gaussian")
    dist = nnp.forward(net, np.array([0.5, 0.0]))
    assert dist.mean.shape == (1,) and dist.std.shape == (1,)
    assert dist.std[0] >= nnp.STD_FLOOR


def test_std_floor():
    net = nnp.init([2, 4, 1], np.random.default_rng(1), "gaussian")
    net.logstd_layer.b[:] = -50.0
    assert nnp.forward(net, np.zeros(2)).std[0] == nnp.STD_FLOOR


@pytest.mark.parametrize("head", ["softmax", "gaussian"])
def test_gradient_matches_finite_differences(head):
    rng = np.random.default_rng(11)
    for _ in range(10):
        policy, state, action = random_case(rng, head)
        exact = nnp.grad_log_prob(policy, state, action)
        assert max_relative_error(exact, fd_grad_log_prob(policy, state, action)) < 1e-4


def test_weighted_grad_is_weighted_sum():
    rng = np.random.default_rng(2)
    net = nnp.init([3, 5, 5, 3], rng)
    S = rng.normal(size=(6, 3))
    A = rng.integers(3, size=6)
    w = rng.normal(size=6)
    expected = sum(w[t] * nnp.grad_log_prob(net, S[t], A[t]) for t in range(6))
    assert np.allclose(nnp.weighted_grad(net, S, A, w), expected, atol=1e-12)


def test_log_prob_matches_forward():
    rng = np.random.default_rng(3)
    net = nnp.init([2, 6, 1], rng, "gaussian")
    s, a = rng.normal(size=2), np.array([0.3])
    dist = nnp.forward(net, s)
    assert nnp.log_prob(net, s[None, :], [a])[0] == pytest.approx(np.log(nnp.density(dist, a)))


def test_sampling_frequencies():
    rng = np.random.default_rng(4)
    dist = nnp.Discrete(np.array([0.2, 0.5, 0.3]))
    counts = np.bincount([nnp.sample(dist, rng)[0] for _ in range(20_000)], minlength=3) / 20_000
    assert np.allclose(counts, dist.probs, atol=0.015)


def test_zero_gradient_leaves_parameters(cartpole_net):
    before = cartpole_net.get_flat()
    nnp.accumulate_and_step(cartpole_net, np.zeros(cartpole_net.n_params), 3e-4)
    assert np.array_equal(cartpole_net.get_flat(), before)


def test_adam_first_step_is_lr_times_sign(cartpole_net):
    before = cartpole_net.get_flat()
    g = np.random.default_rng(5).normal(size=before.size)
    nnp.accumulate_and_step(cartpole_net, g, 1e-3)
    step = cartpole_net.get_flat() - before
    assert np.allclose(step, 1e-3 * np.sign(g), rtol=1e-3, atol=0)


def test_ascent_increases_log_prob():
    net = nnp.init([2, 8, 3], np.random.default_rng(6))
    s = np.array([0.1, -0.4])
    before = nnp.log_prob(net, s[None, :], [2])[0]
    for _ in range(20):
        nnp.accumulate_and_step(net, nnp.grad_log_prob(net, s, 2), 1e-2)
    assert nnp.log_prob(net, s[None, :], [2])[0] > before


def test_non_finite_update_raises(cartpole_net):
    g = np.zeros(cartpole_net.n_params)
    g[0] = np.nan
    with pytest.raises(FloatingPointError):
        nnp.accumulate_and_step(cartpole_net, g, 1e-3)


@pytest.mark.parametrize("head, sizes", [("softmax", [4, 16, 16, 2]), ("gaussian", [2, 8, 1])])
def test_checkpoint_roundtrip(tmp_path, head, sizes):
    net = nnp.init(sizes, np.random.default_rng(7), head)
    nnp.save(net, tmp_path / "net.npz")
    loaded = nnp.load(tmp_path / "net.npz")
    assert loaded.head == head
    assert np.array_equal(loaded.get_flat(), net.get_flat())
    s = np.random.default_rng(8).normal(size=sizes[0])
    if head == "softmax":
        assert np.array_equal(nnp.forward(loaded, s).probs, nnp.forward(net, s).probs)
    else:
        assert np.array_equal(nnp.forward(loaded, s).mean, nnp.forward(net, s).mean)


def test_flat_roundtrip_and_copy_independence(cartpole_net):
    clone = cartpole_net.copy()
    flat = clone.get_flat()
    clone.set_flat(flat + 1.0)
    assert np.array_equal(cartpole_net.get_flat(), flat)
    assert np.allclose(clone.get_flat(), flat + 1.0)


def test_init_validation():
    with pytest.raises(ValueError):
        nnp.init([4], np.random.default_rng(0))
    with pytest.raises(ValueError):
        nnp.init([4, 2], np.random.default_rng(0), "gaussian")
    with pytest.raises(ValueError):
        nnp.init([4, 2], np.random.default_rng(0), "beta")
