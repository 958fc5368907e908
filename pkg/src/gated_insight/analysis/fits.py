"""Sigmoid, linear and step models of a binned accuracy series, plus BIC."""
from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from scipy.optimize import least_squares
from scipy.special import expit

SIGMOID = "SIGMOID"
LINEAR = "LINEAR"
STEP = "STEP"
FAMILIES = (SIGMOID, LINEAR, STEP)
N_PARAMS = {SIGMOID: 3, LINEAR: 2, STEP: 3}

# Above this slope the logistic rises from 1% to 99% within one bin, so
# steeper values are not identifiable from binned data.
SIGMOID_MAX_SLOPE = 2 * math.log(99)
SSE_FLOOR = 1e-12
EDGE_MARGIN = 0.0


class UndefinedBICError(ValueError):
    pass


@dataclass(frozen=True)
class CurveFit:
    family: str
    params: dict
    sse: float
    n: int
    k: int
    bic: float
    degenerate: bool = False
    extra: dict = field(default_factory=dict, compare=False)

    def predict(self, t):
        t = np.asarray(t, dtype=float)
        p = self.params
        if self.family == SIGMOID:
            return sigmoid(t, p["m"], p["t_s"], p["y_max"], p["y_min"])
        if self.family == LINEAR:
            return p["m"] * t + p["y_0"]
        return np.where(t < p["t_s"], p["y_max"] - p["s"], p["y_max"])

    @property
    def rmse(self):
        return math.sqrt(self.sse / self.n)


def bic(n, k, sse) -> float:
    """Gaussian-residual BIC ``n ln(sse/n) + k ln n`` with sse floored at 1e-12."""
    if n <= k:
        raise UndefinedBICError(f"BIC undefined for n={n} <= k={k}")
    if sse < 0:
        raise ValueError("sse must be >= 0")
    return n * math.log(max(sse, SSE_FLOOR) / n) + k * math.log(n)


def sigmoid(t, m, t_s, y_max, y_min):
    return (y_max - y_min) * expit(m * (np.asarray(t, dtype=float) - t_s)) + y_min


def _values(series):
    if hasattr(series, "bin_values"):
        return np.asarray(series.bin_values, dtype=float), float(series.y_min)
    values, y_min = series
    return np.asarray(values, dtype=float), float(y_min)


def _make(family, params, sse, n, degenerate=False):
    k = N_PARAMS[family]
    return CurveFit(family, params, float(sse), n, k, bic(n, k, sse), degenerate)


def _profile_grid(y, y_min, m_max, top, t_lo, t_hi):
    """Best amplitude and sse for every (m, t_s) on a grid.

    For fixed slope and midpoint the sigmoid is linear in its amplitude,
    which has a closed form once clipped to ``[0, 1 - y_min]``.
    """
    n = len(y)
    t = np.arange(n, dtype=float)
    ms = np.unique(np.concatenate([np.geomspace(0.05, m_max, 24), [0.5, 2.0, 8.0]]))
    ms = ms[ms <= m_max]
    ts = np.linspace(t_lo, t_hi, int(round(4 * (t_hi - t_lo))) + 1)
    mm, tt = np.meshgrid(ms, ts, indexing="ij")
    s = expit(mm[..., None] * (t - tt[..., None]))
    dy = y - y_min
    amp = np.clip((s * dy).sum(-1) / np.maximum((s * s).sum(-1), 1e-300), 0.0, top - y_min)
    sse = ((dy - amp[..., None] * s) ** 2).sum(-1)
    return mm.ravel(), tt.ravel(), amp.ravel(), sse.ravel()


def fit_sigmoid(series, m_max=SIGMOID_MAX_SLOPE, n_refine=3, edge=None) -> CurveFit:
    """Least-squares sigmoid with the lower asymptote fixed at ``y_min``.

    A profile grid over slope and midpoint supplies starting points; the
    best few are refined by bounded trust-region least squares and the
    overall best is kept.  ``y_max`` lies in ``[y_min, 1]``.  If no fit
    beats the flat ``y_min`` line the result is flagged degenerate with
    ``m = 0``.
    """
    y, y_min = _values(series)
    n = len(y)
    t = np.arange(n, dtype=float)
    top = max(1.0, y_min)
    flat_sse = float(((y - y_min) ** 2).sum())
    edge = EDGE_MARGIN if edge is None else edge
    t_lo, t_hi = edge, n - 1 - edge
    mm, tt, amp, sse = _profile_grid(y, y_min, m_max, top, t_lo, t_hi)
    order = np.argsort(sse, kind="stable")

    def resid(p):
        return sigmoid(t, p[0], p[1], p[2], y_min) - y

    def jac(p):
        m, ts, ymax = p
        s = expit(m * (t - ts))
        ds = s * (1 - s)
        a = ymax - y_min
        return np.stack([a * ds * (t - ts), -a * ds * m, s], axis=1)

    best = (float(sse[order[0]]), (float(mm[order[0]]), float(tt[order[0]]), y_min + float(amp[order[0]])))
    lower, upper = [0.0, t_lo, y_min], [m_max, t_hi, top + 1e-12]
    seen = []
    for idx in order:
        if len(seen) >= n_refine:
            break
        start = (mm[idx], tt[idx])
        if any(abs(start[0] - a) < 1e-9 and abs(start[1] - b) < 0.75 for a, b in seen):
            continue
        seen.append(start)
        x0 = np.clip([mm[idx], tt[idx], y_min + amp[idx]], lower, upper)
        res = least_squares(resid, x0, jac=jac, bounds=(lower, upper), method="trf",
                            xtol=1e-10, ftol=1e-10, gtol=1e-10, max_nfev=100)
        val = float((res.fun ** 2).sum())
        if val < best[0]:
            best = (val, tuple(float(v) for v in res.x))
    val, (m, ts, ymax) = best
    if ymax - y_min <= 1e-12 or val >= flat_sse - 1e-15:
        return _make(SIGMOID, {"m": 0.0, "t_s": 0.0, "y_max": y_min, "y_min": y_min},
                     flat_sse, n, degenerate=True)
    return _make(SIGMOID, {"m": m, "t_s": ts, "y_max": ymax, "y_min": y_min}, val, n)


def fit_linear(series) -> CurveFit:
    y, _ = _values(series)
    n = len(y)
    t = np.arange(n, dtype=float)
    tc = t - t.mean()
    slope = float((tc * (y - y.mean())).sum() / (tc * tc).sum())
    y0 = float(y.mean() - slope * t.mean())
    sse = float(((y - (slope * t + y0)) ** 2).sum())
    return _make(LINEAR, {"m": slope, "y_0": y0}, sse, n)


def fit_step(series) -> CurveFit:
    """Exhaustive search over integer switch points; levels are segment means."""
    y, _ = _values(series)
    n = len(y)
    csum = np.cumsum(y)
    csq = np.cumsum(y * y)
    best = None
    for ts in range(1, n):
        pre_n, post_n = ts, n - ts
        pre_mean = csum[ts - 1] / pre_n
        post_mean = (csum[-1] - csum[ts - 1]) / post_n
        sse = (csq[ts - 1] - pre_n * pre_mean**2) + (csq[-1] - csq[ts - 1] - post_n * post_mean**2)
        sse = max(float(sse), 0.0)
        if best is None or sse < best[0] - 1e-15:
            best = (sse, ts, float(post_mean), float(post_mean - pre_mean))
    sse, ts, ymax, s = best
    # recompute exactly, cumulative sums lose a few ulps
    pred = np.where(np.arange(n) < ts, ymax - s, ymax)
    sse = float(((y - pred) ** 2).sum())
    return _make(STEP, {"t_s": ts, "s": s, "y_max": ymax}, sse, n)


def fit_all(series) -> dict[str, CurveFit]:
    return {SIGMOID: fit_sigmoid(series), LINEAR: fit_linear(series), STEP: fit_step(series)}
