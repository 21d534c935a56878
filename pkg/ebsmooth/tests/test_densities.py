import numpy as np
import pytest
from scipy.stats import multivariate_normal

import ebsmooth as ebs
from ebsmooth.tests import fd_grad


@pytest.mark.parametrize(
    "sigma, sigma0, expected", ((0, 1, 1.0), (1, 1, 0.5), (2, 1, 0.2), (1, 2, 0.8))
)
def test_beta_of(sigma, sigma0, expected):
    assert ebs.beta_of(sigma, sigma0) == expected


def test_beta_of_large_noise():

    beta = ebs.beta_of(1e6, 1.0)
    np.testing.assert_allclose(beta, 1e-12, rtol=1e-6)

    model = ebs.IsoGaussian(2)
    result = ebs.bayes_estimate(model, [3.0, -4.0], 1e6)
    np.testing.assert_allclose(result, 0, atol=1e-10)


def test_beta_of_invalid():

    with pytest.raises(ebs.DomainError, match="sigma0 must be positive"):
        ebs.beta_of(1, 0)

    with pytest.raises(ebs.DomainError, match="sigma must be non-negative"):
        ebs.beta_of(-1, 1)


@pytest.mark.parametrize("sigma0", (0, -1))
def test_models_invalid_sigma0(sigma0):

    with pytest.raises(ebs.DomainError, match="sigma0 must be positive"):
        ebs.IsoGaussian(2, sigma0)

    with pytest.raises(ebs.DomainError, match="sigma0 must be positive"):
        ebs.IsoMixture.symmetric([1, 0], sigma0)


def test_mixture_invalid_weights():

    with pytest.raises(ebs.DomainError, match="sum to 1"):
        ebs.IsoMixture([[1, 0], [-1, 0]], 1.0, weights=[0.5, 0.6])

    with pytest.raises(ebs.DomainError, match="Expected 2 weights"):
        ebs.IsoMixture([[1, 0], [-1, 0]], 1.0, weights=[1.0])


def test_sample_gaussian_mean():

    n = 10**5
    model = ebs.IsoGaussian(2, 1.0)
    x = ebs.sample(model, n, ebs.rng_stream(0, 0))

    assert x.shape == (n, 2)
    assert np.all(np.abs(x.mean(axis=0)) < 4 / np.sqrt(n))


def test_sample_mixture_symmetric():

    n = 10**5
    model = ebs.IsoMixture.symmetric([3, 0], 1.0)
    x = ebs.sample(model, n, ebs.rng_stream(0, 0))

    assert abs((x[:, 0] > 0).mean() - 0.5) < 0.01


def test_sample_reproducible():

    model = ebs.IsoMixture.symmetric([3, 0], 1.0)
    a = ebs.sample(model, 1, ebs.rng_stream(42, 0))
    b = ebs.sample(model, 1, ebs.rng_stream(42, 0))

    np.testing.assert_array_equal(a, b)


def test_sample_invalid_n():

    with pytest.raises(ebs.DomainError, match="positive integer"):
        ebs.sample(ebs.IsoGaussian(2), 0, ebs.rng_stream(0))


def test_smoothed_score_gaussian():

    model = ebs.IsoGaussian(2, 1.0)
    result = ebs.smoothed_score(model, [2, 0], 1.0)
    np.testing.assert_allclose(result, [-1, 0])


def test_smoothed_score_mixture_origin():

    model = ebs.IsoMixture.symmetric([2, 1], 0.7)
    result = ebs.smoothed_score(model, [0, 0], 0.5)
    np.testing.assert_allclose(result, [0, 0], atol=1e-15)


def test_smoothed_score_mixture_finite_differences():

    model = ebs.IsoMixture.symmetric([2, 0], 1.0)
    sigma = 0.5
    s = np.sqrt(sigma**2 + 1.0)

    # independent evaluation of the convolved density
    def log_f(y):
        a = multivariate_normal.pdf(y, mean=[2, 0], cov=s**2)
        b = multivariate_normal.pdf(y, mean=[-2, 0], cov=s**2)
        return np.log(0.5 * a + 0.5 * b)

    y = np.array([1.0, 1.0])
    expected = fd_grad(log_f, y)
    result = ebs.smoothed_score(model, y, sigma)

    np.testing.assert_allclose(result, expected, atol=1e-5)
    np.testing.assert_allclose(model.log_density(y, sigma), log_f(y))


@pytest.mark.parametrize("sigma", (0.5, 1.0))
def test_bayes_estimate_mixture_grid(sigma):

    model = ebs.IsoMixture.symmetric([2, 0], 1.0)
    cov = (sigma**2 + 1.0) * np.eye(2)

    def log_f(y):
        a = multivariate_normal.pdf(y, mean=[2, 0], cov=cov)
        b = multivariate_normal.pdf(y, mean=[-2, 0], cov=cov)
        return np.log(0.5 * a + 0.5 * b)

    # 10 x 10 grid on [-4, 4]**2
    ticks = np.linspace(-4, 4, 10)
    grid = np.stack(np.meshgrid(ticks, ticks), -1).reshape(-1, 2)

    result = np.array([ebs.bayes_estimate(model, y, sigma) for y in grid])
    expected = np.array([y + sigma**2 * fd_grad(log_f, y) for y in grid])

    assert np.max(np.abs(result - expected)) <= 1e-5


def test_smoothed_score_mixture_far_away():
    # no overflow in the responsibilities far from both components
    model = ebs.IsoMixture.symmetric([2, 0], 1.0)
    result = ebs.smoothed_score(model, [1e4, 0], 0.5)

    assert np.all(np.isfinite(result))
    np.testing.assert_allclose(result, [-(1e4 - 2) / 1.25, 0])


def test_bayes_estimate_gaussian():

    model = ebs.IsoGaussian(2, 1.0)
    result = ebs.bayes_estimate(model, [2, -2], 1.0)
    np.testing.assert_allclose(result, [1, -1])


def test_bayes_estimate_gaussian_mean():

    model = ebs.IsoGaussian(2, 1.0, mean=[1, 1])
    result = ebs.bayes_estimate(model, [3, -1], 1.0)
    np.testing.assert_allclose(result, [2, 0])


def test_bayes_estimate_mixture():

    model = ebs.IsoMixture.symmetric([2, 0], 1.0)
    y = np.array([4.0, 0.0])

    expected = np.array([2, 0]) + np.tanh(4) / 2 * np.array([2, 0])
    np.testing.assert_allclose(expected, [2.99932, 0], atol=1e-5)

    np.testing.assert_allclose(ebs.bayes_estimate(model, y, 1.0), expected)
    np.testing.assert_allclose(model.tanh_estimate(y, 1.0), expected)

    # y + sigma**2 times the finite-difference score
    score = fd_grad(lambda y: model.log_density(y, 1.0), y)
    np.testing.assert_allclose(y + score, expected, atol=1e-6)


@pytest.mark.parametrize("sigma", (0.3, 1.0, 3.0))
def test_bayes_estimate_mixture_origin(sigma):

    model = ebs.IsoMixture.symmetric([2, -1, 0.5], 0.8)
    np.testing.assert_allclose(ebs.bayes_estimate(model, np.zeros(3), sigma), 0)


@pytest.mark.parametrize(
    "model",
    (
        ebs.IsoGaussian(3, 0.7),
        ebs.IsoMixture.symmetric([1, 2, 0], 0.5),
        ebs.IsoMixture([[1, 0, 0], [0, 1, 0], [0, 0, 1]], 0.3, weights=[0.2, 0.3, 0.5]),
    ),
)
def test_bayes_estimate_consistent_with_score(model):

    gen = ebs.rng_stream(1)
    y = 2 * gen.standard_normal((20, 3))
    sigma = 0.6

    result = ebs.bayes_estimate(model, y, sigma)
    expected = y + sigma**2 * ebs.smoothed_score(model, y, sigma)

    np.testing.assert_allclose(result, expected, rtol=1e-12, atol=1e-12)


def test_tanh_estimate_requires_symmetric():

    model = ebs.IsoMixture([[1, 0], [0, 1]], 1.0)

    with pytest.raises(ebs.DomainError, match="symmetric two-component"):
        model.tanh_estimate([0, 0], 1.0)


def test_mixture_tanh_coefficient_bounded():

    model = ebs.IsoMixture.symmetric([1.5, 0], 1.0)
    sigma = 0.8
    beta = ebs.beta_of(sigma, 1.0)
    mu = np.array([1.5, 0])

    y = 5 * ebs.rng_stream(2).standard_normal((500, 2))
    second = ebs.bayes_estimate(model, y, sigma) - beta * y

    # the second term is coef * mu with |coef| < 1 - beta
    coef = second[:, 0] / mu[0]
    np.testing.assert_allclose(second[:, 1], 0, atol=1e-12)
    assert np.all(np.abs(coef) <= (1 - beta) * (1 + 1e-12))


def test_gaussian_estimator_contracts_noise():

    model = ebs.IsoGaussian(4, 1.0)
    sigma = 0.6
    beta = ebs.beta_of(sigma, 1.0)
    gen = ebs.rng_stream(3)

    x = gen.standard_normal(4)
    eps = sigma * gen.standard_normal((100, 4))

    xhat = ebs.bayes_estimate(model, x, sigma)
    diff = ebs.bayes_estimate(model, x + eps, sigma) - xhat
    np.testing.assert_allclose(
        np.linalg.norm(diff, axis=1), beta * np.linalg.norm(eps, axis=1)
    )


def test_gaussian_estimator_slides_towards_origin():

    model = ebs.IsoGaussian(2, 1.0)
    sigma = 1.0
    n = 10**5
    x = np.array([2.0, -1.0])

    eps = sigma * ebs.rng_stream(4).standard_normal((n, 2))
    mean = ebs.bayes_estimate(model, x + eps, sigma).mean(axis=0)

    # the estimates have standard deviation beta * sigma per coordinate
    beta = ebs.beta_of(sigma, 1.0)
    np.testing.assert_allclose(mean, beta * x, atol=4 * beta * sigma / np.sqrt(n))


def test_class_posterior():

    model = ebs.IsoMixture.symmetric([2, 0], 1.0)
    post = ebs.class_posterior(model, [[0, 0], [4, 0], [-4, 0]], 1.0)

    np.testing.assert_allclose(post.sum(axis=-1), 1)
    np.testing.assert_allclose(post[0], [0.5, 0.5])
    assert post[1, 0] > 0.99
    assert post[2, 1] > 0.99


def test_dimension_mismatch():

    model = ebs.IsoGaussian(2)

    with pytest.raises(ebs.DomainError, match="dimension 2"):
        ebs.smoothed_score(model, [1, 2, 3], 1.0)


def test_bayes_classifier_accuracy():

    model = ebs.IsoMixture.symmetric([3, 4], 5.0)
    np.testing.assert_allclose(ebs.bayes_classifier_accuracy(model), 0.8413447460685429)

    with pytest.raises(ebs.DomainError):
        ebs.bayes_classifier_accuracy(ebs.IsoGaussian(2))


def test_model_energy_matches_log_density():

    model = ebs.IsoMixture.symmetric([1, 1], 0.5)
    energy = model.energy(0.4)
    y = ebs.rng_stream(5).standard_normal((10, 2))

    # energy and -log f_Y differ by a constant
    diff = energy.energy(y) + model.log_density(y, 0.4)
    np.testing.assert_allclose(diff, diff[0])

    np.testing.assert_allclose(energy.score(y), ebs.smoothed_score(model, y, 0.4))
