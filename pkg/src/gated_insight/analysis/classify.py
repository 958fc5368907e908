"""Steepness at the inflection point, control-threshold classification and
switch-point alignment."""
from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .fits import SIGMOID, CurveFit, sigmoid


def slope_at_inflection(fit: CurveFit, y_min=None, y_max=None) -> float:
    """Rate of change of the fitted sigmoid at its midpoint: m (y_max - y_min) / 4."""
    if fit.family != SIGMOID:
        raise ValueError(f"slope at inflection needs a sigmoid fit, got {fit.family}")
    p = fit.params
    y_min = p["y_min"] if y_min is None else y_min
    y_max = p["y_max"] if y_max is None else y_max
    return 0.25 * p["m"] * (y_max - y_min)


def _bin_values(series):
    return np.asarray(getattr(series, "bin_values", series), dtype=float)


def observed_steepness(fit: CurveFit, series) -> float:
    """Slope at inflection with the plateau limited to the highest observed bin.

    A transition at the series edge can put the fitted plateau above
    anything the data show; only the observed part of the rise counts.
    Equals :func:`slope_at_inflection` whenever the series reaches the plateau.
    """
    values = _bin_values(series)
    p = fit.params
    top = max(float(values.max()), p["y_min"])
    return slope_at_inflection(fit, y_max=min(p["y_max"], top))


def corrected_steepness(fit: CurveFit, series) -> float:
    """Observed steepness minus the fit's root-mean-square error on ``series``."""
    values = _bin_values(series)
    resid = fit.predict(np.arange(len(values))) - values
    return observed_steepness(fit, values) - math.sqrt(float(np.mean(resid**2)))


def switch_bin(t_s: float) -> int:
    """First bin at or after the inflection point."""
    return int(math.ceil(t_s - 1e-9))


@dataclass(frozen=True)
class InsightClassification:
    raw_steepness: float
    fit_correction: float
    corrected_steepness: float
    threshold: float
    is_insight: bool
    switch_bin: int | None
    delay_bins: int | None


def classify_cohort(experimental: Sequence[float], control: Sequence[float], raw=None,
                    switch_points=None, t_origin=0) -> list[InsightClassification]:
    """Flag agents whose corrected steepness exceeds every control value.

    ``raw`` (uncorrected steepness) and ``switch_points`` (fitted t_s) are
    optional per-agent extras used to fill the remaining fields; the switch
    bin and delay are only reported for insight agents.
    """
    control = np.asarray(list(control), dtype=float)
    if control.size == 0:
        raise ValueError("control cohort is empty")
    threshold = float(control.max())
    out = []
    for i, value in enumerate(experimental):
        value = float(value)
        insight = value > threshold
        r = float(raw[i]) if raw is not None else float("nan")
        sb = delay = None
        if insight and switch_points is not None:
            sb = switch_bin(switch_points[i])
            delay = sb - int(t_origin)
        out.append(InsightClassification(r, r - value if raw is not None else float("nan"),
                                         value, threshold, insight, sb, delay))
    return out


@dataclass(frozen=True)
class AlignedSeries:
    matrix: np.ndarray       # rows: insight agents; columns: offsets
    offsets: np.ndarray      # offset of each column from the switch bin
    pre_mean: float
    post_mean: float
    empty: bool = False

    def column(self, offset):
        return self.matrix[:, int(np.flatnonzero(self.offsets == offset)[0])]


def switch_align(series_list, classifications, width=None) -> AlignedSeries:
    """Time-lock insight agents' series to their switch bins.

    Column offset 0 is the switch bin; the pre/post means compare offsets
    -1 and 0.  Missing bins (switch near an edge) are NaN and ignored.
    """
    rows = [(np.asarray(getattr(s, "bin_values", s), dtype=float), c.switch_bin)
            for s, c in zip(series_list, classifications) if c.is_insight and c.switch_bin is not None]
    if width is None:
        width = max((len(s) for s in (np.asarray(getattr(x, "bin_values", x)) for x in series_list)),
                    default=1)
    offsets = np.arange(-width, width + 1)
    if not rows:
        return AlignedSeries(np.empty((0, len(offsets))), offsets, float("nan"), float("nan"), True)
    matrix = np.full((len(rows), len(offsets)), np.nan)
    for r, (values, sb) in enumerate(rows):
        idx = np.arange(len(values)) - sb + width
        keep = (idx >= 0) & (idx < len(offsets))
        matrix[r, idx[keep]] = values[keep]
    pre = matrix[:, width - 1]
    post = matrix[:, width]
    pre_mean = float(np.nanmean(pre)) if np.isfinite(pre).any() else float("nan")
    post_mean = float(np.nanmean(post)) if np.isfinite(post).any() else float("nan")
    return AlignedSeries(matrix, offsets, pre_mean, post_mean)


def sigmoid_curve(fit: CurveFit, t):
    p = fit.params
    return sigmoid(t, p["m"], p["t_s"], p["y_max"], p["y_min"])
