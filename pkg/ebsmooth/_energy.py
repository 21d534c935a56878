import logging
import math
from dataclasses import dataclass

import numpy as np
import torch
from torch import nn

from ebsmooth._errors import DomainError, TrainingDivergedError
from ebsmooth._stats import rng_stream

logger = logging.getLogger(__name__)

DTYPE = torch.float64


def _as_tensor(y):
    return torch.as_tensor(np.asarray(y, dtype=float), dtype=DTYPE)


def _uniform_init(linear, gen):
    # same bounds as torch's default initialisation, drawn from a numpy stream
    bound = 1 / math.sqrt(linear.in_features)
    with torch.no_grad():
        w = gen.uniform(-bound, bound, size=tuple(linear.weight.shape))
        b = gen.uniform(-bound, bound, size=tuple(linear.bias.shape))
        linear.weight.copy_(_as_tensor(w))
        linear.bias.copy_(_as_tensor(b))


def linear_layers(module):
    """the ``nn.Linear`` layers of ``module`` in forward order"""
    return [m for m in module.modules() if isinstance(m, nn.Linear)]


def mlp(widths, activation=nn.Softplus):
    """fully connected network with ``activation`` between the affine layers"""

    layers = []
    for i, (n_in, n_out) in enumerate(zip(widths[:-1], widths[1:])):
        if i > 0:
            layers.append(activation())
        layers.append(nn.Linear(n_in, n_out, dtype=DTYPE))
    return nn.Sequential(*layers)


class Energy(nn.Module):
    """scalar field ``phi_sigma`` on R^d

    Subclasses implement ``forward`` mapping a tensor of shape (n, d) to the
    energies of shape (n,) and set ``dim`` and ``sigma``. The numpy methods accept
    a single point of shape (d,) or a batch of shape (n, d).
    """

    dim: int
    sigma: float

    def _prepare(self, y):
        y = np.asarray(y, dtype=float)
        if y.ndim not in (1, 2) or y.shape[-1] != self.dim:
            raise DomainError(
                f"Expected points of dimension {self.dim}, got shape {y.shape}"
            )
        return _as_tensor(np.atleast_2d(y)), y.ndim == 1

    @staticmethod
    def _finish(t, single):
        arr = t.detach().numpy()
        return arr[0] if single else arr

    def energy(self, y):
        """energy at ``y``"""
        y_t, single = self._prepare(y)
        with torch.no_grad():
            out = self(y_t)
        out = self._finish(out, single)
        return float(out) if single else out

    def grad_torch(self, y_t, *, create_graph=False):
        """``grad phi(y_t)`` for a tensor ``y_t`` that requires grad"""
        (g,) = torch.autograd.grad(self(y_t).sum(), y_t, create_graph=create_graph)
        return g

    def input_grad(self, y):
        """exact gradient of the energy with respect to the input"""
        y_t, single = self._prepare(y)
        with torch.enable_grad():
            y_t.requires_grad_(True)
            g = self.grad_torch(y_t)
        return self._finish(g, single)

    def input_hvp(self, y, v):
        """Hessian-vector product ``hess phi(y) @ v`` by double backpropagation"""

        y_t, single = self._prepare(y)
        v_t, _ = self._prepare(v)
        v_t = v_t.expand_as(y_t)

        with torch.enable_grad():
            y_t.requires_grad_(True)
            g = self.grad_torch(y_t, create_graph=True)
            if not g.requires_grad:
                # energy is affine in y
                return self._finish(torch.zeros_like(y_t), single)
            (hv,) = torch.autograd.grad(g, y_t, grad_outputs=v_t, allow_unused=True)

        if hv is None:
            hv = torch.zeros_like(y_t)
        return self._finish(hv, single)

    def score(self, y):
        """``-grad phi(y)``"""
        return -self.input_grad(y)

    def bayes_estimate(self, y):
        """Bayes estimate ``y - sigma**2 * grad phi(y)``"""
        y = np.asarray(y, dtype=float)
        return y - self.sigma**2 * self.input_grad(y)

    def bayes_estimate_torch(self, y_t):
        """differentiable Bayes estimate of a tensor of shape (n, d)

        If ``y_t`` is part of a graph, the result is differentiable with respect to
        it (the Jacobian is ``I - sigma**2 hess phi``), otherwise the estimate is
        detached.
        """

        if y_t.requires_grad:
            return y_t - self.sigma**2 * self.grad_torch(y_t, create_graph=True)

        with torch.enable_grad():
            y_leaf = y_t.detach().requires_grad_(True)
            g = self.grad_torch(y_leaf)
        return y_t - self.sigma**2 * g

    def freeze(self):
        """disable parameter gradients (the energy is learned in advance)"""
        for p in self.parameters():
            p.requires_grad_(False)
        return self


class EnergyNet(Energy):
    """learned energy ``phi_sigma(y; theta)``, an MLP with softplus activations

    Parameters
    ----------
    dim : int
        Input dimension.
    hidden : tuple of int, default: (128, 128)
        Widths of the hidden layers.
    sigma : float, default: 1.0
        Noise scale the energy is trained for.
    gen : numpy.random.Generator, optional
        Stream for the parameter initialisation.
    """

    def __init__(self, dim, hidden=(128, 128), sigma=1.0, *, gen=None):
        super().__init__()

        if dim < 1:
            raise DomainError(f"dim must be a positive integer, got {dim}")

        self.dim = int(dim)
        self.hidden = tuple(int(h) for h in hidden)
        self.sigma = float(sigma)
        self.net = mlp((self.dim, *self.hidden, 1))

        gen = rng_stream(0) if gen is None else gen
        for linear in linear_layers(self):
            _uniform_init(linear, gen)

    @property
    def widths(self):
        return (self.dim, *self.hidden, 1)

    def forward(self, y):
        return self.net(y).squeeze(-1)


class ModelEnergy(Energy):
    """energy ``-log f_Y`` (up to a constant) of a mixture of isotropic Gaussians

    Usually obtained from ``IsoGaussian.energy`` or ``IsoMixture.energy``.
    """

    def __init__(self, means, weights, sigma0, sigma):
        super().__init__()

        means = np.atleast_2d(np.asarray(means, dtype=float))
        self.dim = means.shape[1]
        self.sigma = float(sigma)
        self.sigma0 = float(sigma0)

        self.register_buffer("means", _as_tensor(means))
        self.register_buffer("log_weights", _as_tensor(np.log(weights)))

    def forward(self, y):
        s2 = self.sigma**2 + self.sigma0**2
        sq = ((y[:, None, :] - self.means) ** 2).sum(dim=-1)
        return -torch.logsumexp(self.log_weights - sq / (2 * s2), dim=-1)


class QuadraticEnergy(Energy):
    """exact Gaussian energy ``|y - center|**2 / (2 * scale**2)``"""

    def __init__(self, dim, scale=1.0, center=None, sigma=0.0):
        super().__init__()

        if scale <= 0:
            raise DomainError(f"scale must be positive, got {scale}")

        self.dim = int(dim)
        self.scale = float(scale)
        self.sigma = float(sigma)

        center = np.zeros(dim) if center is None else center
        self.register_buffer("center", _as_tensor(center))

    def forward(self, y):
        return ((y - self.center) ** 2).sum(dim=-1) / (2 * self.scale**2)


@dataclass(frozen=True)
class DeenConfig:
    """hyperparameters of the denoising least-squares training of an energy

    Parameters
    ----------
    sigma : float
        Noise scale.
    hidden : tuple of int, default: (128, 128)
        Hidden widths of the energy network.
    batch_size : int, default: 128
    steps : int, default: 5000
    lr : float, default: 1e-3
        Initial learning rate of Adam.
    lr_milestones : tuple of int, default: ()
        Steps at which the learning rate is multiplied by ``lr_gamma``.
    lr_gamma : float, default: 0.1
    betas : tuple of float, default: (0.9, 0.999)
        Moment parameters of Adam.
    seed : int, default: 0
    log_every : int, default: 100
    """

    sigma: float
    hidden: tuple = (128, 128)
    batch_size: int = 128
    steps: int = 5000
    lr: float = 1e-3
    lr_milestones: tuple = ()
    lr_gamma: float = 0.1
    betas: tuple = (0.9, 0.999)
    seed: int = 0
    log_every: int = 100

    def __post_init__(self):
        if self.sigma <= 0:
            raise DomainError(f"sigma must be positive, got {self.sigma}")
        for name in ("batch_size", "steps", "log_every"):
            if getattr(self, name) < 1:
                raise DomainError(f"{name} must be a positive integer")
        if self.lr <= 0:
            raise DomainError(f"lr must be positive, got {self.lr}")
        if not all(0 <= b < 1 for b in self.betas):
            raise DomainError(f"betas must lie in [0, 1), got {self.betas}")

        object.__setattr__(self, "hidden", tuple(self.hidden))
        object.__setattr__(self, "lr_milestones", tuple(self.lr_milestones))
        object.__setattr__(self, "betas", tuple(self.betas))


def deen_loss(net, x_t, y_t):
    """denoising least-squares loss ``mean |x - xhat(y)|**2``"""
    xhat = net.bayes_estimate_torch(y_t)
    return ((x_t - xhat) ** 2).sum(dim=-1).mean()


def train_deen(data, cfg, gen, *, callback=None):
    """fit an energy such that ``y - sigma**2 grad phi(y)`` denoises ``data``

    Parameters
    ----------
    data : array_like of shape (n, d)
        Clean samples.
    cfg : DeenConfig
        Training hyperparameters.
    gen : numpy.random.Generator
        Stream for initialisation, minibatches and noise.
    callback : callable, optional
        Called as ``callback(step, loss)`` after every parameter update.

    Returns
    -------
    net : EnergyNet
        The trained energy, tagged with ``cfg.sigma``.
    """

    data = np.asarray(data, dtype=float)
    if data.ndim != 2 or data.shape[0] == 0:
        raise DomainError(
            f"Expected a non-empty array of shape (n, d), got {data.shape}"
        )

    n, d = data.shape
    batch_size = min(cfg.batch_size, n)

    net = EnergyNet(d, cfg.hidden, cfg.sigma, gen=gen)
    opt = torch.optim.Adam(net.parameters(), lr=cfg.lr, betas=cfg.betas)
    sched = torch.optim.lr_scheduler.MultiStepLR(
        opt, milestones=list(cfg.lr_milestones), gamma=cfg.lr_gamma
    )

    logger.info(f"training energy: n={n}, d={d}, sigma={cfg.sigma}, steps={cfg.steps}")

    for step in range(cfg.steps):
        x = data[gen.integers(0, n, size=batch_size)]
        y = x + cfg.sigma * gen.standard_normal(x.shape)

        y_t = _as_tensor(y).requires_grad_(True)
        loss = deen_loss(net, _as_tensor(x), y_t)

        if not torch.isfinite(loss):
            raise TrainingDivergedError(
                f"energy training diverged at step {step}: loss={loss.item()}", step
            )

        opt.zero_grad()
        loss.backward()
        opt.step()
        sched.step()

        if callback is not None:
            callback(step, loss.item())

        if step % cfg.log_every == 0 or step == cfg.steps - 1:
            logger.info(f"step {step}: loss={loss.item():.6f}")

    return net
