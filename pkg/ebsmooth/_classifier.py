import math
from dataclasses import dataclass, field

import numpy as np
import torch
from torch import nn

from ebsmooth._densities import _IsotropicModel
from ebsmooth._energy import Energy, _as_tensor, _uniform_init, linear_layers, mlp
from ebsmooth._errors import DomainError
from ebsmooth._stats import rng_stream

# probabilities are floored before taking the log
PROB_FLOOR = 1e-12


def _check_points(x, dim):
    x = np.asarray(x, dtype=float)
    if x.ndim not in (1, 2) or x.shape[-1] != dim:
        raise DomainError(f"Expected points of dimension {dim}, got shape {x.shape}")
    return x


@dataclass(frozen=True, eq=False)
class LinearClassifier:
    """two-class linear classifier ``h(x) = sign(<w, x> + b)``

    Class index 1 corresponds to a positive sign, class index 0 to a negative one.
    Points on the decision boundary get the lowest class index.
    """

    w: np.ndarray
    b: float = 0.0

    def __post_init__(self):
        w = np.asarray(self.w, dtype=float)
        if w.ndim != 1 or not np.any(w):
            raise DomainError("w must be a non-zero vector")
        object.__setattr__(self, "w", w)
        object.__setattr__(self, "b", float(self.b))

    @property
    def dim(self):
        return self.w.shape[0]

    @property
    def num_classes(self):
        return 2

    def decision(self, x):
        """signed value ``<w, x> + b``"""
        return _check_points(x, self.dim) @ self.w + self.b

    def predict(self, x):
        out = (self.decision(x) > 0).astype(int)
        return int(out) if out.ndim == 0 else out


class SoftClassifier(nn.Module):
    """soft classifier ``H: R^d -> P(classes)``, an MLP with softplus activations

    Without hidden layers this is the linear softmax classifier.

    Parameters
    ----------
    dim : int
        Input dimension.
    num_classes : int
        Number of classes K.
    hidden : tuple of int, default: (64, 64)
        Widths of the hidden layers.
    sigma : float, default: 0.0
        Noise scale the classifier was trained for (informational).
    gen : numpy.random.Generator, optional
        Stream for the parameter initialisation.
    """

    def __init__(self, dim, num_classes, hidden=(64, 64), *, sigma=0.0, gen=None):
        super().__init__()

        if num_classes < 2:
            raise DomainError(f"num_classes must be at least 2, got {num_classes}")

        self.dim = int(dim)
        self.num_classes = int(num_classes)
        self.hidden = tuple(int(h) for h in hidden)
        self.sigma = float(sigma)
        self.net = mlp((self.dim, *self.hidden, self.num_classes))

        gen = rng_stream(0) if gen is None else gen
        for linear in linear_layers(self):
            _uniform_init(linear, gen)

    @property
    def widths(self):
        return (self.dim, *self.hidden, self.num_classes)

    def forward(self, x):
        """logits of shape (n, K)"""
        return self.net(x)

    def probs(self, x):
        """class probabilities of shape (K,) or (n, K)"""
        x = _check_points(x, self.dim)
        with torch.no_grad():
            p = torch.softmax(self(_as_tensor(np.atleast_2d(x))), dim=-1).numpy()
        return p[0] if x.ndim == 1 else p

    def predict(self, x):
        # argmax returns the first maximum: ties go to the lowest index
        out = np.argmax(self.probs(x), axis=-1)
        return int(out) if out.ndim == 0 else out


@dataclass(frozen=True, eq=False)
class EbClassifier:
    """empirical Bayes classifier: a base classifier evaluated at ``xhat(x)``

    Parameters
    ----------
    base : LinearClassifier | SoftClassifier
        The base classifier h (or H).
    estimator : Energy | IsoGaussian | IsoMixture | None
        Source of the Bayes estimator: a (learned) energy at scale ``sigma``, an
        analytic data model (closed form), or None for the identity (vanilla
        smoothing).
    sigma : float
        Noise scale.
    m : int, default: 1
        Monte-Carlo samples of the soft classifier ``Pi``.
    """

    base: object
    estimator: object
    sigma: float
    m: int = 1
    _energy: Energy | None = field(init=False, repr=False, default=None)

    def __post_init__(self):
        if self.sigma < 0:
            raise DomainError(f"sigma must be non-negative, got {self.sigma}")
        if self.m < 1:
            raise DomainError(f"m must be a positive integer, got {self.m}")

        est = self.estimator
        if isinstance(est, Energy):
            if not math.isclose(est.sigma, self.sigma, rel_tol=1e-12, abs_tol=1e-12):
                raise DomainError(
                    f"The energy was trained for sigma={est.sigma}, not {self.sigma}"
                )
            energy = est
        elif isinstance(est, _IsotropicModel):
            energy = est.energy(self.sigma)
        elif est is None:
            energy = None
        else:
            raise TypeError(
                f"Expected an Energy, a data model or None, got {type(est)}"
            )

        if energy is not None and energy.dim != self.base.dim:
            raise DomainError("estimator and base classifier dimensions differ")

        object.__setattr__(self, "_energy", energy)

    @property
    def dim(self):
        return self.base.dim

    @property
    def num_classes(self):
        return self.base.num_classes

    def xhat(self, x):
        """Bayes estimate of the clean input (closed form where available)"""

        x = _check_points(x, self.dim)
        if self.estimator is None:
            return x
        if isinstance(self.estimator, _IsotropicModel):
            return self.estimator.bayes_estimate(x, self.sigma)
        return self.estimator.bayes_estimate(x)

    def xhat_torch(self, y_t):
        if self._energy is None:
            return y_t
        return self._energy.bayes_estimate_torch(y_t)

    def predict(self, x):
        """the empirical Bayes hard classifier ``pi(x) = h(xhat(x))``"""
        return self.base.predict(self.xhat(x))

    def draw_noise(self, gen, size=()):
        """noise of shape ``(*size, m, d)`` and scale ``sigma`` for ``Pi``"""
        return self.sigma * gen.standard_normal((*size, self.m, self.dim))


def classify_hard(c, x):
    """hard prediction of a base or empirical Bayes classifier

    Parameters
    ----------
    c : LinearClassifier | SoftClassifier | EbClassifier
    x : array_like of shape (d,) or (n, d)

    Returns
    -------
    k : int or ndarray of int
    """

    _check_points(x, c.dim)
    return c.predict(x)


def _require_soft(c):
    if not isinstance(c, EbClassifier) or not isinstance(c.base, SoftClassifier):
        raise TypeError("Expected an EbClassifier with a SoftClassifier base")


def log_pi_all_torch(c, x_t, noise_t):
    """``log Pi`` over all classes for a batch, shape (B, K)

    Parameters
    ----------
    c : EbClassifier
        With a SoftClassifier base.
    x_t : torch.Tensor of shape (B, d)
    noise_t : torch.Tensor of shape (B, m, d)
        Fixed noise, reused across calls (common random numbers).
    """

    n_batch, m, d = noise_t.shape
    y = (x_t[:, None, :] + noise_t).reshape(n_batch * m, d)

    log_h = torch.log_softmax(c.base(c.xhat_torch(y)), dim=-1)
    log_h = log_h.reshape(n_batch, m, -1)

    # log of the Monte-Carlo mean of the probabilities
    return torch.logsumexp(log_h, dim=1) - math.log(m)


def log_pi_torch(c, x_t, k, noise_t):
    """``log Pi_k`` for a batch, differentiable in ``x_t`` and the base parameters

    Parameters
    ----------
    c : EbClassifier
        With a SoftClassifier base.
    x_t : torch.Tensor of shape (B, d)
    k : torch.Tensor of shape (B,)
        Class per point.
    noise_t : torch.Tensor of shape (B, m, d)
        Fixed noise, reused across calls (common random numbers).

    Returns
    -------
    torch.Tensor of shape (B,)
        Floored at ``log(PROB_FLOOR)``.
    """

    log_pi = log_pi_all_torch(c, x_t, noise_t)
    log_pi_k = log_pi.gather(1, k[:, None]).squeeze(1)

    return torch.clamp(log_pi_k, min=math.log(PROB_FLOOR))


def soft_pi(c, x, gen):
    """Monte-Carlo estimate of ``Pi(x) = E H(xhat(x + eps))``

    Returns
    -------
    p : ndarray of shape (K,)
    """

    _require_soft(c)
    x = _check_points(x, c.dim)

    y = x + c.draw_noise(gen)
    with torch.no_grad():
        log_h = torch.log_softmax(c.base(c.xhat_torch(_as_tensor(y))), dim=-1)
    return torch.exp(log_h).mean(dim=0).numpy()


def grad_log_pi(c, x, k, noise):
    """exact gradient of ``log Pi_k`` at ``x`` for a fixed set of noise vectors

    Parameters
    ----------
    c : EbClassifier
        With a SoftClassifier base.
    x : array_like of shape (d,)
    k : int
        Class index.
    noise : array_like of shape (m, d)
        Noise vectors ``eps_j`` (already scaled by sigma).

    Returns
    -------
    g : ndarray of shape (d,)

    Notes
    -----
    The Bayes estimator is differentiated through, so each sample contributes
    ``(I - sigma**2 hess phi(x + eps_j)) grad H_k(xhat(x + eps_j))``.
    """

    _require_soft(c)
    x = _check_points(x, c.dim)
    noise = np.asarray(noise, dtype=float)

    if noise.ndim != 2 or noise.shape[1] != c.dim:
        raise DomainError(f"Expected noise of shape (m, {c.dim}), got {noise.shape}")
    if not 0 <= k < c.num_classes:
        raise DomainError(f"k must lie in [0, {c.num_classes}), got {k}")

    with torch.enable_grad():
        x_t = _as_tensor(x[None, :]).requires_grad_(True)
        k_t = torch.tensor([k])
        out = log_pi_torch(c, x_t, k_t, _as_tensor(noise[None]))
        (g,) = torch.autograd.grad(out.sum(), x_t)

    return g[0].numpy()
