import enum
import logging
import math
import time
import warnings
from dataclasses import dataclass

import numpy as np
import torch
import torch.nn.functional as F

from ebsmooth._classifier import (
    PROB_FLOOR,
    EbClassifier,
    SoftClassifier,
    _check_points,
    _require_soft,
    log_pi_all_torch,
    log_pi_torch,
)
from ebsmooth._energy import Energy, _as_tensor
from ebsmooth._errors import DomainError, TrainingDivergedError

logger = logging.getLogger(__name__)


@dataclass(frozen=True)
class AttackSpec:
    """l2 PGD attack on ``-log Pi_k``

    Parameters
    ----------
    epsilon : float, default: 1.0
        Radius of the l2 ball.
    steps : int, default: 16
        Number of PGD steps.
    step_size : float, optional
        Length of each (normalized) step. Defaults to ``2 * epsilon / steps``.
    m : int, optional
        Noise samples of ``Pi`` inside the attack. By default the attack shares the
        noise of the training loss; otherwise it draws its own set of this size.
    """

    epsilon: float = 1.0
    steps: int = 16
    step_size: float | None = None
    m: int | None = None

    def __post_init__(self):
        if self.epsilon < 0:
            raise DomainError(f"epsilon must be non-negative, got {self.epsilon}")
        if self.steps < 0 or (self.epsilon > 0 and self.steps < 1):
            raise DomainError(
                f"steps must be at least 1 for epsilon > 0, got {self.steps}"
            )
        if self.m is not None and self.m < 1:
            raise DomainError(f"m must be a positive integer, got {self.m}")

        if self.step_size is None:
            step_size = 2 * self.epsilon / self.steps if self.steps else 0.0
            object.__setattr__(self, "step_size", step_size)
        elif self.step_size < 0:
            raise DomainError(f"step_size must be non-negative, got {self.step_size}")


class TrainMode(enum.Enum):
    """objective of ``train_xhat``"""

    # worst case of -log Pi over the epsilon ball
    XHAT = "xhat"
    # -log Pi at the clean point
    XHAT0 = "xhat0"
    # XHAT with the identity in place of the Bayes estimator
    VANILLA_SMOOTH = "vanilla_smooth"
    # plain cross entropy of H on clean points, no noise
    STANDARD = "standard"


@dataclass(frozen=True)
class TrainConfig:
    """hyperparameters of the soft classifier training

    Parameters
    ----------
    sigma : float
        Noise scale of ``Pi``.
    mode : TrainMode or str, default: TrainMode.XHAT
    hidden : tuple of int, default: (64, 64)
        Hidden widths of H. Use ``()`` for a linear softmax classifier.
    steps : int, default: 2000
        Number of minibatch updates.
    batch_size : int, default: 64
    lr : float, default: 0.05
    momentum : float, default: 0.9
        Momentum of SGD (ignored by Adam).
    optimizer : {"sgd", "adam"}, default: "sgd"
    lr_milestones : tuple of int, default: ()
        Steps at which the learning rate is multiplied by ``lr_gamma``.
    lr_gamma : float, default: 0.1
    m : int, default: 1
        Noise samples of ``Pi`` per example.
    seed : int, default: 0
    log_every : int, default: 100
    """

    sigma: float
    mode: TrainMode = TrainMode.XHAT
    hidden: tuple = (64, 64)
    steps: int = 2000
    batch_size: int = 64
    lr: float = 0.05
    momentum: float = 0.9
    optimizer: str = "sgd"
    lr_milestones: tuple = ()
    lr_gamma: float = 0.1
    m: int = 1
    seed: int = 0
    log_every: int = 100

    def __post_init__(self):
        if self.sigma < 0:
            raise DomainError(f"sigma must be non-negative, got {self.sigma}")
        for name in ("steps", "batch_size", "m", "log_every"):
            if getattr(self, name) < 1:
                raise DomainError(f"{name} must be a positive integer")
        if self.lr <= 0:
            raise DomainError(f"lr must be positive, got {self.lr}")
        if self.optimizer not in ("sgd", "adam"):
            raise DomainError(
                f"optimizer must be 'sgd' or 'adam', got {self.optimizer!r}"
            )

        object.__setattr__(self, "mode", TrainMode(self.mode))
        object.__setattr__(self, "hidden", tuple(self.hidden))
        object.__setattr__(self, "lr_milestones", tuple(self.lr_milestones))


@dataclass(frozen=True, eq=False)
class AttackResult:
    """outcome of ``pgd_attack``

    Attributes
    ----------
    point : ndarray of shape (d,)
        ``x + delta`` with the largest loss among the iterates.
    adv_loss : float
        ``-log Pi_k`` at ``point``.
    clean_loss : float
        ``-log Pi_k`` at ``x``.
    aborted : bool
        Whether the attack stopped on a non-finite gradient.
    """

    point: np.ndarray
    adv_loss: float
    clean_loss: float
    aborted: bool


def _pgd_batch(c, x_t, k_t, noise_t, attack):
    # returns (x + delta, best loss, clean loss, aborted) per row

    def loss_fn(z):
        return -log_pi_torch(c, z, k_t, noise_t)

    with torch.no_grad():
        clean = loss_fn(x_t)

    aborted = torch.zeros(x_t.shape[0], dtype=torch.bool)

    if attack.epsilon == 0 or attack.steps == 0:
        return x_t, clean, clean, aborted

    eps = attack.epsilon
    delta = torch.zeros_like(x_t)
    best, best_delta = clean.clone(), delta.clone()

    for _ in range(attack.steps):
        with torch.enable_grad():
            d = delta.clone().requires_grad_(True)
            (g,) = torch.autograd.grad(loss_fn(x_t + d).sum(), d)

        aborted |= ~torch.isfinite(g).all(dim=1)
        active = ~aborted

        norm = g.norm(dim=1, keepdim=True)
        direction = g / norm.clamp(min=torch.finfo(g.dtype).tiny)
        direction = torch.where(active[:, None] & (norm > 0), direction, 0.0)

        delta = delta + attack.step_size * direction
        # project onto the epsilon ball
        delta = delta * (eps / delta.norm(dim=1, keepdim=True).clamp(min=eps))

        with torch.no_grad():
            current = loss_fn(x_t + delta)

        better = active & torch.isfinite(current) & (current > best)
        best = torch.where(better, current, best)
        best_delta = torch.where(better[:, None], delta, best_delta)

    return x_t + best_delta, best, clean, aborted


def pgd_attack(c, x, k, spec, noise):
    """untargeted l2 PGD attack maximizing ``-log Pi_k(x + delta)``

    Parameters
    ----------
    c : EbClassifier
        With a SoftClassifier base.
    x : array_like of shape (d,)
        Clean point.
    k : int
        True class.
    spec : AttackSpec
        Radius, number of steps and step size.
    noise : array_like of shape (m, d)
        Noise vectors of ``Pi`` (already scaled by sigma), fixed over all steps.

    Returns
    -------
    AttackResult

    Notes
    -----
    Each step moves ``step_size`` along the normalized gradient of ``-log Pi_k`` and
    projects onto the ball ``|delta| <= epsilon``. The iterate with the largest
    loss, including ``delta = 0``, is returned. If the gradient becomes non-finite
    the attack stops, returns the best iterate so far and warns.
    """

    _require_soft(c)
    x = _check_points(x, c.dim)
    noise = np.asarray(noise, dtype=float)

    if x.ndim != 1:
        raise DomainError(f"Expected a single point of shape ({c.dim},), got {x.shape}")
    if noise.ndim != 2 or noise.shape[1] != c.dim:
        raise DomainError(f"Expected noise of shape (m, {c.dim}), got {noise.shape}")

    x_adv, best, clean, aborted = _pgd_batch(
        c, _as_tensor(x[None]), torch.tensor([k]), _as_tensor(noise[None]), spec
    )

    if aborted[0]:
        warnings.warn("PGD attack aborted on a non-finite gradient")

    return AttackResult(
        point=x_adv[0].detach().numpy(),
        adv_loss=best.item(),
        clean_loss=clean.item(),
        aborted=bool(aborted[0]),
    )


def _make_optimizer(params, cfg):
    if cfg.optimizer == "adam":
        return torch.optim.Adam(params, lr=cfg.lr)
    return torch.optim.SGD(params, lr=cfg.lr, momentum=cfg.momentum)


def train_xhat(data, energy, cfg, attack, gen, *, callback=None):
    """train the soft classifier H of ``Pi`` with minibatch SGD

    Parameters
    ----------
    data : LabeledDataset
        Training points and labels.
    energy : Energy | IsoGaussian | IsoMixture | None
        Source of the Bayes estimator at ``cfg.sigma``. Frozen before training;
        unused for the ``VANILLA_SMOOTH`` and ``STANDARD`` modes.
    cfg : TrainConfig
        Training hyperparameters and objective.
    attack : AttackSpec
        Inner maximization (``XHAT`` and ``VANILLA_SMOOTH`` only).
    gen : numpy.random.Generator
        Stream for initialisation, minibatches and noise.
    callback : callable, optional
        Called after every update with a dict holding ``step``, ``clean_loss``,
        ``adv_loss``, ``attack_success`` and ``wall_time``.

    Returns
    -------
    classifier : SoftClassifier

    Notes
    -----
    Per step, a minibatch is drawn with one noise set of size ``cfg.m`` per example.
    Unless ``XHAT0``, the PGD attack then runs with that noise, or with a fresh set
    of size ``attack.m`` if given. The parameter gradient of ``-log Pi_k(x + delta)``
    is taken with ``delta`` and the noise of size ``cfg.m`` held fixed.
    """

    points = np.asarray(data.points, dtype=float)
    labels = np.asarray(data.labels, dtype=np.int64)

    if points.ndim != 2 or points.shape[0] == 0:
        raise DomainError(
            f"Expected a non-empty array of shape (n, d), got {points.shape}"
        )

    n, d = points.shape
    batch_size = min(cfg.batch_size, n)
    mode = cfg.mode

    base = SoftClassifier(d, data.num_classes, cfg.hidden, sigma=cfg.sigma, gen=gen)

    if mode in (TrainMode.XHAT, TrainMode.XHAT0):
        if isinstance(energy, Energy):
            energy.freeze()
        estimator = energy
    else:
        estimator = None

    c = EbClassifier(base, estimator, cfg.sigma, m=cfg.m)

    opt = _make_optimizer(base.parameters(), cfg)
    sched = torch.optim.lr_scheduler.MultiStepLR(
        opt, milestones=list(cfg.lr_milestones), gamma=cfg.lr_gamma
    )

    logger.info(
        f"training classifier: mode={mode.value}, n={n}, d={d}, sigma={cfg.sigma}, "
        f"epsilon={attack.epsilon}, steps={cfg.steps}"
    )
    start = time.perf_counter()

    for step in range(cfg.steps):
        idx = gen.integers(0, n, size=batch_size)
        x_t = _as_tensor(points[idx])
        k_t = torch.as_tensor(labels[idx])

        if mode is TrainMode.STANDARD:
            loss = F.cross_entropy(base(x_t), k_t)
            clean_loss, success = loss.item(), float("nan")
        else:
            noise_t = _as_tensor(c.draw_noise(gen, size=(batch_size,)))

            if mode is TrainMode.XHAT0:
                x_adv = x_t
                clean_loss = None
            else:
                attack_noise_t = noise_t
                if attack.m is not None:
                    attack_noise = gen.standard_normal((batch_size, attack.m, d))
                    attack_noise_t = _as_tensor(cfg.sigma * attack_noise)

                x_adv, _, clean, _ = _pgd_batch(c, x_t, k_t, attack_noise_t, attack)
                x_adv = x_adv.detach()
                clean_loss = clean.mean().item()

            log_pi = log_pi_all_torch(c, x_adv, noise_t)
            log_pi_k = log_pi.gather(1, k_t[:, None]).squeeze(1)
            loss = -torch.clamp(log_pi_k, min=math.log(PROB_FLOOR)).mean()

            success = (log_pi.argmax(dim=1) != k_t).double().mean().item()
            if clean_loss is None:
                clean_loss = loss.item()

        if not torch.isfinite(loss):
            raise TrainingDivergedError(
                f"classifier training diverged at step {step}: loss={loss.item()}", step
            )

        opt.zero_grad()
        loss.backward()
        opt.step()
        sched.step()

        record = {
            "step": step,
            "clean_loss": clean_loss,
            "adv_loss": loss.item(),
            "attack_success": success,
            "wall_time": time.perf_counter() - start,
        }

        if callback is not None:
            callback(record)

        if step % cfg.log_every == 0 or step == cfg.steps - 1:
            logger.info(
                f"step {step}: clean loss={clean_loss:.6f}, "
                f"adv loss={loss.item():.6f}, attack success={success:.3f}"
            )

    return base
