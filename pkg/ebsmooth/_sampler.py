import logging
import math
from dataclasses import dataclass

import numpy as np
import xarray as xr

from ebsmooth._densities import _IsotropicModel
from ebsmooth._energy import Energy
from ebsmooth._errors import DomainError, SamplerDivergedError

logger = logging.getLogger(__name__)


@dataclass(frozen=True)
class WalkJumpConfig:
    """parameters of walk-jump sampling

    Parameters
    ----------
    sigma_prime : float, default: 0.05
        Fine noise scale of the walk and the jump.
    delta : float, default: 0.001
        Langevin step size.
    tau : int, default: 100
        Number of walk steps.
    seed : int, default: 0
    """

    sigma_prime: float = 0.05
    delta: float = 0.001
    tau: int = 100
    seed: int = 0

    def __post_init__(self):
        if self.sigma_prime <= 0:
            raise DomainError(f"sigma_prime must be positive, got {self.sigma_prime}")
        if self.delta <= 0:
            raise DomainError(f"delta must be positive, got {self.delta}")
        if self.tau < 1:
            raise DomainError(f"tau must be a positive integer, got {self.tau}")


@dataclass(frozen=True, eq=False)
class FlowResult:
    """endpoint of ``gradient_flow``"""

    point: np.ndarray
    converged: bool
    steps: int


def _check_source_sigma(source, sigma):
    if sigma is None:
        return source.sigma
    if not math.isclose(source.sigma, sigma, rel_tol=1e-12, abs_tol=1e-12):
        raise DomainError(
            f"The energy was trained for sigma={source.sigma}, not {sigma}"
        )
    return sigma


def _energy_grad(source, sigma):
    # gradient of the energy as a function of points

    if isinstance(source, Energy):
        return source.input_grad
    if isinstance(source, _IsotropicModel):
        if sigma is None:
            raise DomainError("sigma is required for an analytic data model")
        return lambda y: -source.smoothed_score(y, sigma)

    raise TypeError(f"Expected an Energy or a data model, got {type(source)}")


def _energy_value(source, sigma):
    if isinstance(source, Energy):
        return source.energy
    return lambda y: -source.log_density(y, sigma)


def _bayes(source, y, sigma):
    if isinstance(source, Energy):
        sigma = _check_source_sigma(source, sigma)
        return y - sigma**2 * source.input_grad(y)
    if isinstance(source, _IsotropicModel):
        if sigma is None:
            raise DomainError("sigma is required for an analytic data model")
        return source.bayes_estimate(y, sigma)

    raise TypeError(f"Expected an Energy or a data model, got {type(source)}")


def langevin_walk(source, y0, cfg, gen, *, return_trajectory=False):
    """unadjusted Langevin walk on the energy at scale ``sigma_prime``

    Iterates ``y <- y - delta**2 * grad phi(y) + sqrt(2) * delta * eps`` for ``tau``
    steps, ``eps ~ N(0, I)``. In the common parameterization with step ``h`` and
    noise ``sqrt(2 h)`` this is ``h = delta**2``.

    Parameters
    ----------
    source : Energy | IsoGaussian | IsoMixture
        Energy (or analytic model, evaluated at ``cfg.sigma_prime``).
    y0 : array_like of shape (d,) or (n, d)
        Start of one chain or of ``n`` independent chains.
    cfg : WalkJumpConfig
    gen : numpy.random.Generator
        One standard normal draw of the shape of ``y0`` per step.
    return_trajectory : bool, default: False
        If True, also return all iterates, shape ``(tau + 1, *y0.shape)``.

    Returns
    -------
    y : ndarray
        The final iterate.
    trajectory : ndarray
        Only if ``return_trajectory``.
    """

    grad = _energy_grad(source, cfg.sigma_prime)
    y = np.array(y0, dtype=float)

    drift = cfg.delta**2
    diffusion = math.sqrt(2) * cfg.delta

    trajectory = [y.copy()] if return_trajectory else None

    for step in range(cfg.tau):
        y = y - drift * grad(y) + diffusion * gen.standard_normal(y.shape)

        if not np.all(np.isfinite(y)):
            raise SamplerDivergedError(f"Langevin walk diverged at step {step}", step)

        if return_trajectory:
            trajectory.append(y.copy())

    if return_trajectory:
        return y, np.stack(trajectory)
    return y


def jump(source, y, sigma_prime):
    """Bayes estimate ``y - sigma_prime**2 * grad phi(y)`` at the fine scale"""
    return _bayes(source, np.asarray(y, dtype=float), sigma_prime)


def walk_jump(coarse, fine, y, cfg, gen, *, sigma=None, return_trajectory=False):
    """denoise ``y`` at ``sigma``, walk at ``sigma_prime``, then jump

    Parameters
    ----------
    coarse : Energy | IsoGaussian | IsoMixture
        Energy at the noise scale ``sigma`` of ``y``.
    fine : Energy | IsoGaussian | IsoMixture
        Energy at ``cfg.sigma_prime``.
    y : array_like of shape (d,) or (n, d)
        Noisy observation(s).
    cfg : WalkJumpConfig
    gen : numpy.random.Generator
    sigma : float, optional
        Noise scale of ``y``. Required for an analytic ``coarse`` model, taken from
        the energy otherwise.
    return_trajectory : bool, default: False
        If True, also return the walk, see ``langevin_walk``.
    """

    y0 = _bayes(coarse, np.asarray(y, dtype=float), sigma)

    if return_trajectory:
        walked, trajectory = langevin_walk(fine, y0, cfg, gen, return_trajectory=True)
        return jump(fine, walked, cfg.sigma_prime), trajectory

    walked = langevin_walk(fine, y0, cfg, gen)
    return jump(fine, walked, cfg.sigma_prime)


def gradient_flow(source, y, step, max_steps, tol, *, sigma=None):
    """explicit Euler steps ``y <- y - step * grad phi(y)`` towards an attractor

    Stops when ``|grad phi(y)| <= tol`` or after ``max_steps`` steps.

    Parameters
    ----------
    source : Energy | IsoGaussian | IsoMixture
    y : array_like of shape (d,)
        Start.
    step : float
        Euler step, ``step > 0``.
    max_steps : int
    tol : float
        Gradient norm at which the flow counts as converged, ``tol > 0``.
    sigma : float, optional
        Noise scale, required for an analytic model.

    Returns
    -------
    FlowResult
    """

    if step <= 0:
        raise DomainError(f"step must be positive, got {step}")
    if tol <= 0:
        raise DomainError(f"tol must be positive, got {tol}")

    grad = _energy_grad(source, sigma)
    y = np.array(y, dtype=float)

    for i in range(max_steps):
        g = grad(y)
        if np.linalg.norm(g) <= tol:
            return FlowResult(y, True, i)

        y = y - step * g
        if not np.all(np.isfinite(y)):
            raise SamplerDivergedError(f"gradient flow diverged at step {i}", i)

    converged = bool(np.linalg.norm(grad(y)) <= tol)
    if not converged:
        logger.warning(f"gradient flow did not converge in {max_steps} steps")

    return FlowResult(y, converged, max_steps)


def trajectory_dataset(trajectory, energy_values=None):
    """walk trajectory as a Dataset over ``(step, chain, coord)``

    Parameters
    ----------
    trajectory : array_like of shape (steps, d) or (steps, n, d)
    energy_values : array_like of shape (steps,) or (steps, n), optional

    Returns
    -------
    xr.Dataset
        Variable ``y`` and, if given, ``energy``.
    """

    trajectory = np.asarray(trajectory, dtype=float)
    if trajectory.ndim == 2:
        trajectory = trajectory[:, None, :]
        if energy_values is not None:
            energy_values = np.asarray(energy_values)[:, None]

    n_steps, n_chains, d = trajectory.shape
    coords = {
        "step": np.arange(n_steps),
        "chain": np.arange(n_chains),
        "coord": [f"y{i}" for i in range(d)],
    }

    ds = xr.Dataset({"y": (("step", "chain", "coord"), trajectory)}, coords=coords)
    if energy_values is not None:
        ds["energy"] = (("step", "chain"), np.asarray(energy_values, dtype=float))

    return ds


def trajectory_energy(source, trajectory, *, sigma=None):
    """energy of every iterate of a trajectory (up to an additive constant)"""

    trajectory = np.asarray(trajectory, dtype=float)
    energy = _energy_value(source, sigma)
    flat = trajectory.reshape(-1, trajectory.shape[-1])
    return np.asarray(energy(flat)).reshape(trajectory.shape[:-1])
