import numpy as np
import pytest

from causirl.diffnet import (
    MlpModel, backward, batchnorm, cross_entropy, dense, forward, init_mlp, mlp_specs, relu,
)
from causirl.errors import ConfigurationError, ContractError, DegenerateBatchError, InputError, NumericError, ShapeError
from conftest import central_diff, rel_err


def test_init_is_deterministic():
    a = init_mlp([dense(3, 5)], 7).parameters()
    b = init_mlp([dense(3, 5)], 7).parameters()
    assert all(np.array_equal(a[k], b[k]) for k in a)


def test_init_rejects_broken_chain():
    with pytest.raises(ConfigurationError):
        init_mlp([dense(3, 5), relu(), dense(4, 2)], 0)


def test_init_batchnorm_state():
    m = init_mlp([dense(2, 10), batchnorm(10), relu(), dense(10, 5)], 3)
    bn = m.layers[1]
    np.testing.assert_array_equal(bn.running_mean, np.zeros(10))
    np.testing.assert_array_equal(bn.running_var, np.ones(10))
    np.testing.assert_array_equal(bn.params["gamma"], np.ones(10))
    np.testing.assert_array_equal(bn.params["beta"], np.zeros(10))
    np.testing.assert_array_equal(m.layers[0].params["b"], np.zeros(10))
    W = m.layers[0].params["W"]
    assert np.all(np.abs(W) <= 1 / np.sqrt(2))


def test_zero_weights_give_zero_output(rng):
    m = init_mlp([dense(4, 6), relu(), dense(6, 3), relu()], 0)
    m.set_parameters({k: np.zeros_like(v) for k, v in m.parameters().items()})
    np.testing.assert_array_equal(forward(m, rng.normal(size=(5, 4))), np.zeros((5, 3)))


def test_batchnorm_normalizes_in_train_mode(rng):
    m = init_mlp([batchnorm(4)], 0)
    X = rng.normal(loc=[1, -3, 10, 0], scale=[0.5, 2, 4, 1], size=(256, 4))
    out = forward(m, X)
    assert np.all(np.abs(out.mean(axis=0)) < 1e-6)
    assert np.all(np.abs(out.var(axis=0) - 1) < 1e-3)


def test_batchnorm_rejects_single_row_in_train_mode():
    m = init_mlp([dense(2, 3), batchnorm(3)], 0)
    with pytest.raises(DegenerateBatchError):
        forward(m, np.ones((1, 2)))
    m.eval()
    assert forward(m, np.ones((1, 2))).shape == (1, 3)


def test_eval_mode_is_deterministic_and_uses_running_stats(rng):
    m = init_mlp(mlp_specs((3, 8, 2), batchnorm_hidden=True), 5)
    forward(m, rng.normal(size=(32, 3)))
    m.eval()
    X = rng.normal(size=(10, 3))
    a = forward(m, X)
    b = forward(m, X)
    np.testing.assert_array_equal(a, b)
    # single row gives the same answer as inside a batch: no batch statistics
    np.testing.assert_allclose(forward(m, X[:1]), a[:1], rtol=1e-12, atol=1e-15)


def test_shape_mismatch():
    with pytest.raises(ShapeError):
        forward(init_mlp([dense(3, 2)], 0), np.ones((4, 2)))


def test_cross_entropy_values():
    assert cross_entropy(np.array([[0.0, 0.0]]), [1]) == pytest.approx(np.log(2), abs=1e-12)
    # -log(1 / (1 + e^-10)) = log1p(e^-10)
    assert cross_entropy(np.array([[10.0, 0.0]]), [0]) == pytest.approx(np.log1p(np.exp(-10.0)), rel=1e-9)
    assert cross_entropy(np.array([[10.0, 0.0]]), [0]) == pytest.approx(4.5418e-5, rel=1e-3)
    assert cross_entropy(np.zeros((2, 2)), [0, 1]) == pytest.approx(np.log(2), abs=1e-12)


def test_cross_entropy_errors():
    with pytest.raises(InputError):
        cross_entropy(np.zeros((1, 2)), [2])
    with pytest.raises(NumericError):
        cross_entropy(np.array([[np.nan, 0.0]]), [0])


def test_cross_entropy_nonnegative_and_uniform_max(rng):
    for C in (2, 3, 7):
        logits = rng.normal(size=(20, C)) * 5
        labels = rng.integers(0, C, size=20)
        assert cross_entropy(logits, labels) >= 0
        assert cross_entropy(np.zeros((4, C)), [0, 1, 0, 1]) == pytest.approx(np.log(C), abs=1e-12)


def _fd_check(specs, seed, X, labels, tol=1e-4, step=1e-3):
    m = init_mlp(specs, seed)
    # jitter off the zero-bias init so no ReLU input sits exactly on the kink
    r = np.random.default_rng(seed + 100)
    m.set_parameters({k: v + 0.1 * r.normal(size=v.shape) for k, v in m.parameters().items()})
    loss, grads = backward(m, X, labels=labels)
    params = m.parameters()
    for key, p in params.items():
        fd = central_diff(lambda: _loss_at(m, X, labels), p, step)
        assert rel_err(grads[key], fd) < tol, key
    return loss


def _loss_at(m, X, labels):
    return cross_entropy(m.forward(X), labels)


def test_gradients_match_finite_differences_2_10_5(rng):
    X = rng.normal(size=(8, 2))
    y = rng.integers(0, 5, size=8)
    _fd_check([dense(2, 10), batchnorm(10), relu(), dense(10, 5)], 11, X, y)


@pytest.mark.parametrize("seed", range(20))
def test_gradients_random_architectures(seed):
    r = np.random.default_rng(seed)
    depth = 1 + seed % 3
    sizes = [int(r.integers(2, 6))] + [int(r.integers(3, 7)) for _ in range(depth)] + [int(r.integers(2, 4))]
    specs = mlp_specs(sizes, batchnorm_hidden=bool(seed % 2))
    X = r.normal(size=(8, sizes[0]))
    y = r.integers(0, sizes[-1], size=8)
    # smaller step: random nets can put a ReLU input within 1e-3 of its kink
    _fd_check(specs, seed, X, y, step=1e-5)


def test_upstream_gradient_path(rng):
    m = init_mlp(mlp_specs((3, 6, 4), batchnorm_hidden=True), 2)
    X = rng.normal(size=(6, 3))
    G = rng.normal(size=(6, 4))
    _, grads = backward(m, X, grad_output=G)
    for key, p in m.parameters().items():
        fd = central_diff(lambda: float(np.sum(G * m.forward(X))), p)
        assert rel_err(grads[key], fd) < 1e-4


def test_zero_upstream_gradient_gives_zero_grads(rng):
    m = init_mlp(mlp_specs((3, 6, 4), batchnorm_hidden=True), 2)
    _, grads = backward(m, rng.normal(size=(6, 3)), grad_output=np.zeros((6, 4)))
    assert all(not np.any(g) for g in grads.values())


def test_backward_loss_matches_cross_entropy(rng):
    m = init_mlp(mlp_specs((3, 6, 2)), 4)
    X = rng.normal(size=(9, 3))
    y = rng.integers(0, 2, size=9)
    loss, _ = backward(m, X, labels=y)
    assert abs(loss - cross_entropy(forward(m, X), y)) < 1e-12


def test_backward_requires_train_mode(rng):
    m = init_mlp(mlp_specs((3, 2)), 0).eval()
    with pytest.raises(ContractError):
        backward(m, rng.normal(size=(4, 3)), labels=[0, 1, 0, 1])


def test_determinism_of_activations_and_gradients(rng):
    X = rng.normal(size=(8, 3))
    y = np.array([0, 1] * 4)
    runs = []
    for _ in range(2):
        m = MlpModel(mlp_specs((3, 5, 2), batchnorm_hidden=True), 9)
        runs.append((forward(m, X), backward(m, X, labels=y)[1]))
    np.testing.assert_array_equal(runs[0][0], runs[1][0])
    for k in runs[0][1]:
        np.testing.assert_array_equal(runs[0][1][k], runs[1][1][k])
