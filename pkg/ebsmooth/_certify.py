import logging
import math
import multiprocessing
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass
from functools import partial

import numpy as np
import torch
from scipy.stats import binomtest

from ebsmooth._densities import beta_of
from ebsmooth._errors import DomainError
from ebsmooth._stats import (
    binom_lower_bound,
    rng_stream,
    std_normal_inv_cdf,
    std_normal_upper_quantile,
)

logger = logging.getLogger(__name__)

# to abstain, predict and certify return this class index
ABSTAIN = -1


@dataclass(frozen=True, eq=False)
class CertResult:
    """outcome of certifying one point

    Attributes
    ----------
    predicted : int
        Predicted class, or ``ABSTAIN``.
    pa_lower : float
        Lower confidence bound on the probability of the predicted class.
    radius : float
        Certified l2 radius (0 when abstaining).
    counts : ndarray of int
        Per-class tallies of the estimation pass.
    spec : ConfidenceSpec
        The sample budget used.
    wall_time : float
        Seconds spent on the point.
    """

    predicted: int
    pa_lower: float
    radius: float
    counts: np.ndarray
    spec: object
    wall_time: float = float("nan")

    @property
    def abstained(self):
        return self.predicted == ABSTAIN


@dataclass(frozen=True)
class OracleResult:
    """analytic prediction and radius of a smoothed linear classifier"""

    predicted: int
    radius: float
    on_boundary: bool


def sample_counts(base, x, sigma, num, gen, *, batch_size=10_000):
    """tally the predictions of ``base`` at ``num`` points ``x + N(0, sigma**2 I)``"""

    x = np.asarray(x, dtype=float)
    counts = np.zeros(base.num_classes, dtype=int)

    remaining = num
    while remaining > 0:
        this_batch = min(batch_size, remaining)
        remaining -= this_batch

        noisy = x + sigma * gen.standard_normal((this_batch, x.shape[-1]))
        pred = np.atleast_1d(base.predict(noisy))
        counts += np.bincount(pred, minlength=base.num_classes)

    return counts


def predict(base, x, sigma, spec, gen, *, batch_size=10_000):
    """prediction of the smoothed classifier, abstaining when it is not significant

    Draws ``spec.n0`` noisy copies of ``x``; returns the most frequent class if a
    two-sided binomial test of its count against ``p = 1/2`` rejects at level
    ``spec.alpha``, else ``ABSTAIN``.
    """

    counts = sample_counts(base, x, sigma, spec.n0, gen, batch_size=batch_size)
    top = int(np.argmax(counts))

    if binomtest(int(counts[top]), spec.n0, 0.5).pvalue > spec.alpha:
        return ABSTAIN
    return top


def certify(base, x, sigma, spec, gen, *, batch_size=10_000):
    """certify the smoothed classifier ``g_sigma[base]`` at ``x``

    Parameters
    ----------
    base : LinearClassifier | SoftClassifier | EbClassifier
        Any hard classifier with ``predict`` and ``num_classes``.
    x : array_like of shape (d,)
        Input.
    sigma : float
        Smoothing noise scale, ``sigma > 0``.
    spec : ConfidenceSpec
        Sample budget and failure probability.
    gen : numpy.random.Generator
        Stream of this point. Split into independent selection and estimation
        streams.
    batch_size : int, default: 10_000
        Number of noisy samples classified at once.

    Returns
    -------
    CertResult

    Notes
    -----
    The selection pass (``spec.n0`` samples) picks the candidate class; a fresh
    estimation pass (``spec.nc`` samples) bounds its probability ``p_A`` from below.
    The radius ``sigma * Phi^-1(p_A_lower)`` uses ``p_B <= 1 - p_A``, which is tight
    for two classes.
    """

    if sigma <= 0:
        raise DomainError(f"sigma must be positive, got {sigma}")

    start = time.perf_counter()
    selection_gen, estimation_gen = gen.spawn(2)

    counts0 = sample_counts(
        base, x, sigma, spec.n0, selection_gen, batch_size=batch_size
    )
    candidate = int(np.argmax(counts0))

    counts = sample_counts(
        base, x, sigma, spec.nc, estimation_gen, batch_size=batch_size
    )
    pa_lower = binom_lower_bound(int(counts[candidate]), spec.nc, spec.alpha)

    if pa_lower <= 0.5:
        wall_time = time.perf_counter() - start
        return CertResult(ABSTAIN, pa_lower, 0.0, counts, spec, wall_time)

    radius = _radius(pa_lower, spec, sigma)
    wall_time = time.perf_counter() - start
    return CertResult(candidate, pa_lower, radius, counts, spec, wall_time)


def _radius(pa_lower, spec, sigma):
    """``sigma * Phi^-1(pa_lower)``, never above ``rmax(spec, sigma)``"""

    # the lower end and the upper tail of rmax may disagree in the last bits
    return min(sigma * std_normal_inv_cdf(pa_lower), rmax(spec, sigma))


def _certify_indexed(base, sigma, spec, seed, batch_size, index, x):
    gen = rng_stream(seed, index)
    return certify(base, x, sigma, spec, gen, batch_size=batch_size)


def _init_worker():
    torch.set_num_threads(1)


def certify_many(base, points, sigma, spec, seed, *, workers=1, batch_size=10_000):
    """certify every row of ``points``

    Point ``i`` uses the stream ``rng_stream(seed, i)``, so the results do not
    depend on ``workers``.

    Returns
    -------
    results : list of CertResult
    """

    points = np.asarray(points, dtype=float)
    n = points.shape[0]
    func = partial(_certify_indexed, base, sigma, spec, seed, batch_size)

    if workers <= 1 or n <= 1:
        results = []
        for i, x in enumerate(points):
            results.append(func(i, x))
            if (i + 1) % max(1, n // 10) == 0:
                logger.info(f"certified {i + 1}/{n} points")
        return results

    ctx = multiprocessing.get_context("spawn")
    chunksize = max(1, math.ceil(n / (4 * workers)))

    logger.info(f"certifying {n} points with {workers} workers")
    with ProcessPoolExecutor(workers, mp_context=ctx, initializer=_init_worker) as pool:
        return list(pool.map(func, range(n), points, chunksize=chunksize))


def rmax(spec, sigma):
    """largest radius certifiable with ``spec``: ``sigma * Phi^-1(alpha**(1 / nc))``

    This is the radius obtained when every estimation sample agrees.
    """

    # upper tail 1 - alpha**(1 / nc), formed without cancellation
    tail = -math.expm1(math.log(spec.alpha) / spec.nc)
    return sigma * std_normal_upper_quantile(tail)


def linear_margin(h, x):
    """distance ``|<w, x> + b| / |w|`` of ``x`` to the decision boundary of ``h``"""
    return np.abs(h.decision(x)) / np.linalg.norm(h.w)


def linear_oracle(h, x, sigma, sigma0):
    """exact smoothed prediction and radius of ``h(xhat(.))`` for Gaussian data

    For ``X ~ N(0, sigma0**2 I)`` the Bayes estimator is ``beta * y``; smoothing
    ``h(beta * .)`` with noise ``sigma`` predicts ``h(beta * x)`` with radius
    ``|<w, beta * x> + b| / (beta * |w|)``, the margin at ``beta * x`` divided by beta.

    Returns
    -------
    OracleResult
        ``on_boundary`` is set (and the radius is 0) when ``beta * x`` lies on the
        decision boundary; the class then follows the lowest-index tie rule.
    """

    beta = beta_of(sigma, sigma0)
    value = float(h.decision(beta * np.asarray(x, dtype=float)))

    if value == 0:
        return OracleResult(0, 0.0, True)

    radius = abs(value) / (beta * np.linalg.norm(h.w))
    return OracleResult(int(value > 0), radius, False)
