"""Binned accuracy on the lowest-coherence trials."""
from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence

import numpy as np

from ..task import LOWEST_COHERENCE, PhaseKind

DEFAULT_BIN_SIZE = 15


class InsufficientDataError(ValueError):
    pass


@dataclass(frozen=True)
class AccuracySeries:
    bin_values: np.ndarray
    bin_size: int
    t_origin: int
    y_min: float

    def __len__(self):
        return len(self.bin_values)

    @property
    def t(self):
        return np.arange(len(self.bin_values), dtype=float)


def bin_correct(correct, coherence, phase, bin_size=DEFAULT_BIN_SIZE,
                level=LOWEST_COHERENCE) -> AccuracySeries:
    """Array form of :func:`bin_series` for one agent's chronological trials."""
    correct = np.asarray(correct, dtype=float)
    coherence = np.asarray(coherence)
    phase = np.asarray(phase).astype(str)
    low = coherence == level
    n_bins = int(low.sum()) // bin_size
    if n_bins < 2:
        raise InsufficientDataError(
            f"need at least {2 * bin_size} trials at {level}% coherence, got {int(low.sum())}")
    values = correct[low][: n_bins * bin_size].reshape(n_bins, bin_size).mean(axis=1)
    baseline = low & (phase == PhaseKind.MOTION.value)
    if not baseline.any():
        raise InsufficientDataError(f"no {level}% coherence trials in the MOTION phase")
    y_min = float(correct[baseline].mean())
    onset_hits = np.flatnonzero(phase == PhaseKind.MOTION_AND_COLOUR.value)
    before = int(low[: onset_hits[0]].sum()) if onset_hits.size else int(low.sum())
    return AccuracySeries(values, bin_size, before // bin_size, y_min)


def bin_series(trials: Sequence, bin_size=DEFAULT_BIN_SIZE) -> AccuracySeries:
    """Bin the correctness of lowest-coherence trials chronologically.

    ``trials`` holds objects with ``trial``, ``phase``, ``coherence`` and
    ``correct`` attributes (e.g. :class:`gated_insight.io.TrialRecord`).
    A trailing partial bin is dropped.  ``y_min`` is the mean accuracy of
    lowest-coherence trials in the MOTION phase.
    """
    trials = sorted(trials, key=lambda r: r.trial)
    return bin_correct(
        [bool(r.correct) for r in trials],
        [int(r.coherence) for r in trials],
        [getattr(r.phase, "value", r.phase) for r in trials],
        bin_size,
    )


def binned_cohort(correct, coherence, phase, bin_size=DEFAULT_BIN_SIZE) -> list[AccuracySeries]:
    """:func:`bin_correct` for every row of ``(n_agents, n_trials)`` arrays."""
    return [bin_correct(correct[a], coherence[a], phase[a], bin_size) for a in range(len(correct))]
