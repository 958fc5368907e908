"""Random-effects Bayesian model selection over a population.

Variational Dirichlet scheme for model frequencies, with exceedance
probabilities protected against the chance that all models are equally
frequent (Bayesian omnibus risk).
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy import integrate, stats
from scipy.special import digamma, gammaln, logsumexp


@dataclass(frozen=True)
class ModelComparison:
    families: tuple
    mean_bic: np.ndarray
    alpha: np.ndarray
    expected_frequency: np.ndarray
    exceedance: np.ndarray
    protected_exceedance: np.ndarray
    bor: float
    degenerate: bool = False


def _vb_dirichlet(log_evidence, alpha0, max_iter=1000, tol=1e-10):
    alpha = alpha0.copy()
    for _ in range(max_iter):
        log_u = log_evidence + digamma(alpha) - digamma(alpha.sum())
        g = np.exp(log_u - logsumexp(log_u, axis=1, keepdims=True))
        new = alpha0 + g.sum(axis=0)
        if np.max(np.abs(new - alpha)) < tol:
            alpha = new
            break
        alpha = new
    log_u = log_evidence + digamma(alpha) - digamma(alpha.sum())
    g = np.exp(log_u - logsumexp(log_u, axis=1, keepdims=True))
    return alpha, g


def _free_energy(log_evidence, alpha0, alpha, g):
    e_log_r = digamma(alpha) - digamma(alpha.sum())
    with np.errstate(divide="ignore", invalid="ignore"):
        g_log_g = np.where(g > 0, g * np.log(g), 0.0)
    return float(
        (g * log_evidence).sum()
        + (g * e_log_r).sum()
        + gammaln(alpha0.sum()) - gammaln(alpha0).sum() + ((alpha0 - 1) * e_log_r).sum()
        - g_log_g.sum()
        - (gammaln(alpha.sum()) - gammaln(alpha).sum() + ((alpha - 1) * e_log_r).sum())
    )


def exceedance_probabilities(alpha) -> np.ndarray:
    """P(r_k is the largest frequency) under Dirichlet(alpha), by quadrature.

    Uses the gamma representation of the Dirichlet: r_k > r_j for all j iff
    the k-th gamma variate is the largest.
    """
    alpha = np.asarray(alpha, dtype=float)
    out = np.empty(len(alpha))
    for k, a_k in enumerate(alpha):
        others = np.delete(alpha, k)

        def integrand(x):
            return stats.gamma.pdf(x, a_k) * np.prod(stats.gamma.cdf(x, others))

        hi = stats.gamma.ppf(1 - 1e-14, alpha.max()) + 10
        points = sorted({float(a) for a in alpha if a < hi})
        out[k] = integrate.quad(integrand, 0, hi, points=points, limit=200, epsabs=1e-12)[0]
    return out / out.sum()


def group_model_comparison(bics, families=None) -> ModelComparison:
    """Compare model families given an ``(n_agents, n_families)`` BIC table.

    Log evidence is approximated by ``-BIC / 2``.
    """
    bics = np.asarray(bics, dtype=float)
    if bics.ndim != 2 or bics.shape[0] < 2 or bics.shape[1] < 2:
        raise ValueError("need a BIC table with >= 2 agents and >= 2 families")
    n_models = bics.shape[1]
    families = tuple(families) if families is not None else tuple(range(n_models))
    log_ev = -0.5 * bics
    mean_bic = bics.mean(axis=0)
    uniform = np.full(n_models, 1.0 / n_models)
    centred = log_ev - log_ev.mean(axis=1, keepdims=True)
    if np.allclose(centred, 0.0, atol=1e-12):
        alpha = np.ones(n_models) + bics.shape[0] / n_models
        return ModelComparison(families, mean_bic, alpha, uniform, uniform, uniform, 1.0, True)
    alpha0 = np.ones(n_models)
    alpha, g = _vb_dirichlet(log_ev, alpha0)
    f1 = _free_energy(log_ev, alpha0, alpha, g)
    f0 = float(logsumexp(log_ev + np.log(uniform), axis=1).sum())
    bor = float(1.0 / (1.0 + np.exp(np.clip(f1 - f0, -700, 700))))
    xp = exceedance_probabilities(alpha)
    pxp = (1 - bor) * xp + bor / n_models
    return ModelComparison(families, mean_bic, alpha, alpha / alpha.sum(), xp, pxp, bor)
