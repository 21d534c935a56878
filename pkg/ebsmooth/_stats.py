from dataclasses import dataclass

import numpy as np
from scipy.special import ndtr, ndtri
from statsmodels.stats.proportion import proportion_confint

from ebsmooth._errors import DomainError


@dataclass(frozen=True)
class ConfidenceSpec:
    """sample budget and failure probability of a certification

    Parameters
    ----------
    alpha : float, default: 0.001
        Failure probability, in (0, 1).
    n0 : int, default: 100
        Number of noise samples used to select the candidate class.
    nc : int, default: 100_000
        Number of noise samples used to bound the probability of the candidate.
    """

    alpha: float = 0.001
    n0: int = 100
    nc: int = 100_000

    def __post_init__(self):
        if not 0 < self.alpha < 1:
            raise DomainError(f"alpha must lie in (0, 1), got {self.alpha}")
        if self.n0 < 1:
            raise DomainError(f"n0 must be a positive integer, got {self.n0}")
        if self.nc < 1:
            raise DomainError(f"nc must be a positive integer, got {self.nc}")


def std_normal_cdf(z):
    """cumulative distribution function of the standard normal"""
    return ndtr(z)


def std_normal_inv_cdf(p):
    """inverse of the standard normal cumulative distribution function

    Parameters
    ----------
    p : float or array_like
        Probabilities in the open interval (0, 1).

    Returns
    -------
    z : float or ndarray
        Quantiles such that ``std_normal_cdf(z) == p``.

    Notes
    -----
    Uses the Cephes rational approximation (``scipy.special.ndtri``), which is
    accurate to a few ulp over the whole double-precision range.
    """

    p_arr = np.asarray(p, dtype=float)

    if not np.all((p_arr > 0) & (p_arr < 1)):
        raise DomainError(f"p must lie in the open interval (0, 1), got {p}")

    z = ndtri(p_arr)
    return float(z) if z.ndim == 0 else z


def std_normal_upper_quantile(q):
    """``std_normal_inv_cdf(1 - q)`` without forming ``1 - q``

    Keeps full relative accuracy when the upper tail ``q`` is tiny.
    """
    return -std_normal_inv_cdf(q)


def binom_lower_bound(k, n, alpha):
    """one-sided Clopper-Pearson lower confidence bound of a binomial proportion

    Parameters
    ----------
    k : int
        Number of successes, ``0 <= k <= n``.
    n : int
        Number of trials, ``n >= 1``.
    alpha : float
        Probability that the true proportion lies below the bound.

    Returns
    -------
    p_lower : float
        The proportion ``p`` for which ``P[Bin(n, p) >= k] == alpha``; 0 for ``k == 0``.
    """

    if n < 1:
        raise DomainError(f"n must be a positive integer, got {n}")
    if not 0 <= k <= n:
        raise DomainError(f"k must satisfy 0 <= k <= n, got k={k}, n={n}")
    if not 0 < alpha < 1:
        raise DomainError(f"alpha must lie in (0, 1), got {alpha}")

    if k == 0:
        return 0.0

    # the two-sided interval at level 2 * alpha has the one-sided bound as lower end
    lower, _ = proportion_confint(k, n, alpha=2 * alpha, method="beta")
    return float(lower)


def rng_stream(seed, *keys):
    """deterministic random generator for the stream identified by ``keys``

    Parameters
    ----------
    seed : int
        Experiment seed.
    *keys : int
        Stream identifiers, e.g. the index of a test point. Distinct keys give
        statistically independent streams.

    Returns
    -------
    gen : numpy.random.Generator
        Counter-based (Philox) generator. Normal variates are produced from its
        uniform output with numpy's ziggurat transform.

    Notes
    -----
    The stream only depends on ``(seed, *keys)``, never on how work is scheduled,
    so results do not change with the number of workers. ``Generator.spawn`` derives
    further independent child streams.
    """

    seq = np.random.SeedSequence(int(seed), spawn_key=tuple(int(k) for k in keys))
    return np.random.Generator(np.random.Philox(seq))
