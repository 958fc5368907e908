"""Delay-distribution test and single change-point detection."""
from __future__ import annotations

import numpy as np
from scipy import stats

VARIANCE_FLOOR = 1e-12
MIN_SEGMENT = 2


def ks_uniform_delays(delays, window):
    """Exact two-sided one-sample KS test of delays against U(0, window).

    Returns ``(D, p)``.
    """
    delays = np.asarray(delays, dtype=float)
    if delays.size == 0:
        raise ValueError("no delays to test")
    if window <= 0:
        raise ValueError("window must be > 0")
    if np.any(delays < 0) or np.any(delays > window):
        raise ValueError(f"delays must lie in [0, {window}]")
    res = stats.kstest(delays, stats.uniform(loc=0, scale=window).cdf, method="exact")
    return float(res.statistic), float(res.pvalue)


def _segment_loglik(n, s1, s2):
    var = np.maximum(s2 / n - (s1 / n) ** 2, VARIANCE_FLOOR)
    return -0.5 * n * (np.log(2 * np.pi * var) + 1.0)


def likelihood_gain(series):
    """Log-likelihood gain of every admissible split over the no-change model.

    Entry ``k`` corresponds to a change starting at index ``k``; splits that
    leave fewer than two points on a side are ``-inf``.
    """
    x = np.asarray(series, dtype=float)
    n = len(x)
    c1 = np.concatenate([[0.0], np.cumsum(x)])
    c2 = np.concatenate([[0.0], np.cumsum(x * x)])
    k = np.arange(n + 1)
    gain = np.full(n + 1, -np.inf)
    ok = (k >= MIN_SEGMENT) & (k <= n - MIN_SEGMENT)
    kk = k[ok]
    left = _segment_loglik(kk, c1[kk], c2[kk])
    right = _segment_loglik(n - kk, c1[-1] - c1[kk], c2[-1] - c2[kk])
    gain[ok] = left + right - _segment_loglik(n, c1[-1], c2[-1])
    return gain


def change_point(series, n_permutations=200, quantile=0.95, seed=0):
    """Most likely single change in mean and variance, or ``None``.

    The split maximising the two-segment Gaussian likelihood is accepted
    only if its gain exceeds the ``quantile`` of the maximal gain over
    random permutations of the same values.
    """
    x = np.asarray(series, dtype=float)
    if len(x) < 8:
        raise ValueError(f"change-point detection needs >= 8 points, got {len(x)}")
    gain = likelihood_gain(x)
    best = int(np.argmax(gain))
    rng = np.random.default_rng(seed)
    null = np.array([likelihood_gain(rng.permutation(x)).max() for _ in range(n_permutations)])
    if gain[best] <= np.quantile(null, quantile):
        return None
    return best
