from dataclasses import dataclass

import numpy as np
from scipy.special import logsumexp, softmax

from ebsmooth._errors import DomainError
from ebsmooth._stats import std_normal_cdf


def beta_of(sigma, sigma0):
    """shrinkage factor ``1 / (1 + (sigma / sigma0)**2)`` of the Gaussian estimator

    Parameters
    ----------
    sigma : float
        Noise scale, ``sigma >= 0``.
    sigma0 : float
        Data scale, ``sigma0 > 0``.

    Returns
    -------
    beta : float
        Value in (0, 1] (exactly 1 without noise).
    """

    if sigma0 <= 0:
        raise DomainError(f"sigma0 must be positive, got {sigma0}")
    if sigma < 0:
        raise DomainError(f"sigma must be non-negative, got {sigma}")

    return 1.0 / (1.0 + (sigma / sigma0) ** 2)


def _as_points(y, dim):
    y = np.asarray(y, dtype=float)
    if y.ndim == 0 or y.shape[-1] != dim:
        raise DomainError(f"Expected points of dimension {dim}, got shape {y.shape}")
    return y


def _check_sigma(sigma):
    if sigma < 0:
        raise DomainError(f"sigma must be non-negative, got {sigma}")


class _IsotropicModel:
    """shared implementation for mixtures of isotropic Gaussians

    Subclasses provide ``means`` (K, d), ``weights`` (K,) and ``sigma0``. The
    noisy variable ``Y = X + N(0, sigma**2 I)`` is again a mixture with component
    scale ``sqrt(sigma**2 + sigma0**2)``; all quantities below are evaluated in
    log space with the max-subtraction trick.
    """

    @property
    def num_components(self):
        return self.means.shape[0]

    def _log_kernel(self, y, sigma):
        # (..., K) unnormalized log responsibilities of Y's components
        s2 = sigma**2 + self.sigma0**2
        sq = ((y[..., None, :] - self.means) ** 2).sum(axis=-1)
        return np.log(self.weights) - sq / (2 * s2)

    def sample(self, n, gen, *, return_labels=False):
        """draw ``n`` i.i.d. points (and optionally their component labels)"""

        if n < 1:
            raise DomainError(f"n must be a positive integer, got {n}")

        labels = gen.choice(self.num_components, size=n, p=self.weights)
        points = self.means[labels] + self.sigma0 * gen.standard_normal((n, self.dim))

        if return_labels:
            return points, labels
        return points

    def log_density(self, y, sigma):
        """log density of ``Y = X + N(0, sigma**2 I)`` at ``y``"""

        _check_sigma(sigma)
        y = _as_points(y, self.dim)
        s2 = sigma**2 + self.sigma0**2
        norm = 0.5 * self.dim * np.log(2 * np.pi * s2)
        return logsumexp(self._log_kernel(y, sigma), axis=-1) - norm

    def class_posterior(self, y, sigma):
        """responsibilities ``P[component k | Y = y]``"""

        _check_sigma(sigma)
        y = _as_points(y, self.dim)
        return softmax(self._log_kernel(y, sigma), axis=-1)

    def smoothed_score(self, y, sigma):
        """score ``grad log f_Y(y)`` of the noisy variable"""

        resp = self.class_posterior(y, sigma)
        y = np.asarray(y, dtype=float)
        s2 = sigma**2 + self.sigma0**2
        return (resp @ self.means - y) / s2

    def bayes_estimate(self, y, sigma):
        """least-squares estimate ``y + sigma**2 * score(y)`` of the clean input"""

        y = _as_points(y, self.dim)
        return y + sigma**2 * self.smoothed_score(y, sigma)

    def energy(self, sigma):
        """the energy ``-log f_Y`` at noise scale ``sigma`` as an Energy"""

        from ebsmooth._energy import ModelEnergy

        _check_sigma(sigma)
        return ModelEnergy(self.means, self.weights, self.sigma0, sigma)


@dataclass(frozen=True, eq=False)
class IsoGaussian(_IsotropicModel):
    """isotropic Gaussian ``N(mean, sigma0**2 I_d)``

    Parameters
    ----------
    dim : int
        Dimension of the data.
    sigma0 : float, default: 1.0
        Scale of the data.
    mean : array_like, optional
        Mean of the data. Defaults to the origin.
    """

    dim: int
    sigma0: float = 1.0
    mean: np.ndarray | None = None

    def __post_init__(self):
        if self.dim < 1:
            raise DomainError(f"dim must be a positive integer, got {self.dim}")
        if self.sigma0 <= 0:
            raise DomainError(f"sigma0 must be positive, got {self.sigma0}")

        if self.mean is None:
            mean = np.zeros(self.dim)
        else:
            mean = np.asarray(self.mean, dtype=float)

        if mean.shape != (self.dim,):
            raise DomainError(f"mean must have shape ({self.dim},), got {mean.shape}")

        object.__setattr__(self, "sigma0", float(self.sigma0))
        object.__setattr__(self, "mean", mean)

    @property
    def means(self):
        return self.mean[None, :]

    @property
    def weights(self):
        return np.ones(1)

    def sample(self, n, gen, *, return_labels=False):
        if n < 1:
            raise DomainError(f"n must be a positive integer, got {n}")

        points = self.mean + self.sigma0 * gen.standard_normal((n, self.dim))
        if return_labels:
            return points, np.zeros(n, dtype=int)
        return points

    def smoothed_score(self, y, sigma):
        _check_sigma(sigma)
        y = _as_points(y, self.dim)
        return -(y - self.mean) / (sigma**2 + self.sigma0**2)

    def bayes_estimate(self, y, sigma):
        """shrinkage ``mean + beta * (y - mean)`` towards the mean"""
        y = _as_points(y, self.dim)
        return self.mean + beta_of(sigma, self.sigma0) * (y - self.mean)


@dataclass(frozen=True, eq=False)
class IsoMixture(_IsotropicModel):
    """mixture of isotropic Gaussians with a shared scale

    Parameters
    ----------
    means : array_like of shape (K, d)
        Component means.
    sigma0 : float
        Component scale.
    weights : array_like of shape (K,), optional
        Component weights, positive and summing to one. Defaults to equal weights.

    See Also
    --------
    IsoMixture.symmetric
    """

    means: np.ndarray
    sigma0: float
    weights: np.ndarray | None = None

    def __post_init__(self):
        means = np.atleast_2d(np.asarray(self.means, dtype=float))
        k = means.shape[0]

        weights = np.full(k, 1 / k) if self.weights is None else self.weights
        weights = np.asarray(weights, dtype=float)

        if self.sigma0 <= 0:
            raise DomainError(f"sigma0 must be positive, got {self.sigma0}")
        if weights.shape != (k,):
            raise DomainError(f"Expected {k} weights, got shape {weights.shape}")
        if np.any(weights <= 0) or abs(weights.sum() - 1) > 1e-12:
            raise DomainError("weights must be positive and sum to 1")

        object.__setattr__(self, "means", means)
        object.__setattr__(self, "weights", weights)
        object.__setattr__(self, "sigma0", float(self.sigma0))

    @property
    def dim(self):
        return self.means.shape[1]

    @classmethod
    def symmetric(cls, mu, sigma0):
        """two equally weighted components at ``+mu`` and ``-mu``"""
        mu = np.asarray(mu, dtype=float)
        return cls(np.stack([mu, -mu]), sigma0)

    @property
    def is_symmetric(self):
        return (
            self.num_components == 2
            and np.array_equal(self.means[0], -self.means[1])
            and self.weights[0] == self.weights[1]
        )

    def tanh_estimate(self, y, sigma):
        """closed-form Bayes estimator of the symmetric two-component mixture

        ``beta * y + (1 - beta) * tanh(<beta * y, mu> / sigma0**2) * mu``, where
        ``mu`` is the mean of the first component.
        """

        if not self.is_symmetric:
            raise DomainError(
                "tanh_estimate requires a symmetric two-component mixture"
            )

        _check_sigma(sigma)
        y = _as_points(y, self.dim)
        mu = self.means[0]
        beta = beta_of(sigma, self.sigma0)
        coef = np.tanh((beta * y) @ mu / self.sigma0**2)
        return beta * y + (1 - beta) * coef[..., None] * mu


def sample(model, n, gen):
    """draw ``n`` i.i.d. points from ``model``"""
    return model.sample(n, gen)


def smoothed_score(model, y, sigma):
    """score of ``Y = X + N(0, sigma**2 I)`` for ``X ~ model``"""
    return model.smoothed_score(y, sigma)


def bayes_estimate(model, y, sigma):
    """Bayes (least-squares) estimate of ``X`` given ``Y = y``"""
    return model.bayes_estimate(y, sigma)


def class_posterior(model, y, sigma):
    """component responsibilities of ``model`` at noise scale ``sigma``"""
    return model.class_posterior(y, sigma)


def bayes_classifier_accuracy(model):
    """accuracy of the Bayes-optimal classifier of a symmetric two-component mixture

    Classifying by the sign of ``<x, mu>`` is optimal and correct with probability
    ``Phi(|mu| / sigma0)``.
    """

    if not (isinstance(model, IsoMixture) and model.is_symmetric):
        raise DomainError("Expected a symmetric two-component IsoMixture")

    return float(std_normal_cdf(np.linalg.norm(model.means[0]) / model.sigma0))
