import numpy as np
import pytest

from raceproxy.errors import ConfigurationError, DataError, DivergenceError
from raceproxy.ml import ElasticNetConfig, MlrModel, fit_model, predict_mlr, train_mlr
from raceproxy.ml.mlr import smooth_objective, standardize


def blobs(rng, n=600, p=4):
    y = rng.integers(0, 5, n)
    centers = rng.normal(size=(5, p)) * 1.5
    return centers[y] + rng.normal(size=(n, p)), y


def test_gradient_matches_finite_differences(rng):
    X, y = blobs(rng, n=200, p=20)
    Z, _, _ = standardize(X)
    Y = np.eye(5)[y]
    h = 1e-6
    for _ in range(10):
        theta = rng.normal(scale=0.5, size=(4, 21))
        lam = rng.uniform(0, 0.5)
        _, grad = smooth_objective(theta, Z, Y, lam, 0.3)
        fd = np.empty_like(theta)
        for idx in np.ndindex(theta.shape):
            e = np.zeros_like(theta)
            e[idx] = h
            fd[idx] = (smooth_objective(theta + e, Z, Y, lam, 0.3)[0]
                       - smooth_objective(theta - e, Z, Y, lam, 0.3)[0]) / (2 * h)
        rel = np.linalg.norm(grad - fd) / max(np.linalg.norm(grad), np.linalg.norm(fd))
        assert rel <= 1e-5


def test_separable_two_class():
    x = np.linspace(-3, 3, 60)
    X = np.column_stack([x, np.zeros_like(x)])
    y = np.where(x > 0, 0, 1)
    m = train_mlr(X, y, max_epochs=20000)
    p = m.predict_proba(X)
    assert np.all(p.argmax(axis=1) == y)
    assert -np.mean(np.log(p[np.arange(len(y)), y])) < 1e-2


def test_zero_penalty_matches_unregularized(rng):
    X, y = blobs(rng)
    a = train_mlr(X, y)
    b = train_mlr(X, y, reg=ElasticNetConfig(lam=0.0, delta=0.7))
    assert np.max(np.abs(a.predict_proba(X) - b.predict_proba(X))) <= 1e-6


def test_huge_lasso_gives_base_rates(rng):
    X, y = blobs(rng)
    m = train_mlr(X, y, reg=ElasticNetConfig(lam=1e6, delta=1.0))
    assert np.max(np.abs(m.coef[:, 1:])) <= 1e-6
    rates = np.bincount(y, minlength=5) / len(y)
    np.testing.assert_allclose(m.predict_proba(X[:3]), np.tile(rates, (3, 1)), atol=1e-5)


def test_reference_row_is_zero(rng):
    X, y = blobs(rng)
    m = train_mlr(X, y)
    assert np.all(m.coef[4] == 0) and np.all(np.isfinite(m.coef))
    np.testing.assert_allclose(m.predict_proba(X).sum(axis=1), 1.0, atol=1e-9)


def test_zero_coefficients_uniform():
    m = MlrModel(coef=np.zeros((5, 4)))
    assert np.allclose(predict_mlr(m, np.array([1.0, -2.0, 3.0])), 0.2)


def test_hand_logit():
    coef = np.zeros((5, 2))
    coef[0, 0] = 0.4055
    coef[1:4, 0] = -1e3   # leaves white vs other
    p = predict_mlr(MlrModel(coef=coef), np.array([0.0]))[0]
    np.testing.assert_allclose(p[[0, 4]], [0.6, 0.4], atol=1e-4)


def test_saturation():
    coef = np.zeros((5, 6))
    coef[2, 3] = 1e3
    x = np.zeros(5)
    x[2] = 1.0
    assert predict_mlr(MlrModel(coef=coef), x)[0, 2] > 0.999


def test_wrong_width_rejected(rng):
    X, y = blobs(rng, p=4)
    m = train_mlr(X, y)
    with pytest.raises(ConfigurationError):
        m.predict_proba(np.zeros((2, 5)))


def test_permutation_robust(rng):
    X, y = blobs(rng)
    perm = rng.permutation(len(y))
    a = train_mlr(X, y, tol=1e-10)
    b = train_mlr(X[perm], y[perm], tol=1e-10)
    assert np.max(np.abs(a.predict_proba(X) - b.predict_proba(X))) < 1e-4


def test_deterministic(rng):
    X, y = blobs(rng)
    assert np.array_equal(train_mlr(X, y, seed=3).coef, train_mlr(X, y, seed=3).coef)
    a = fit_model("elnet", X, y, {"lambda": 0.01, "delta": 0.5}, seed=1)
    b = fit_model("elnet", X, y, {"lambda": 0.01, "delta": 0.5}, seed=1)
    assert np.array_equal(a.coef, b.coef) and a.params == b.params


@pytest.mark.filterwarnings("ignore::RuntimeWarning")
def test_divergence_names_step(rng):
    X, y = blobs(rng)
    with pytest.raises(DivergenceError, match="step size"):
        train_mlr(X, y, step=1e300)


def test_needs_two_labels():
    with pytest.raises(DataError):
        train_mlr(np.ones((4, 2)), np.zeros(4, dtype=int))


@pytest.mark.parametrize("lam, delta", [(-1, 0.5), (1, 1.5)])
def test_config_bounds(lam, delta):
    with pytest.raises(ConfigurationError):
        ElasticNetConfig(lam, delta)
