"""Symbolic version of the spontaneous strategy switch task.

A curriculum is a list of phases, each a number of 100-trial blocks with a
set of active motion coherence levels.  Building it yields trial
skeletons (phase, coherence, correct label, colour sign); the per-agent
input values are sampled separately so that many agents can share one
skeleton sequence while keeping private input noise.
"""
from __future__ import annotations

import csv
from dataclasses import dataclass
from enum import Enum
from typing import Sequence

import numpy as np

BLOCK_SIZE = 100
COHERENCE_LEVELS = (5, 10, 20, 30, 45)
# trials per 100 when all five levels are active
LEVEL_FREQUENCIES = {5: 30, 10: 10, 20: 20, 30: 20, 45: 20}
LOWEST_COHERENCE = COHERENCE_LEVELS[0]


class PhaseKind(str, Enum):
    TRAINING = "TRAINING"
    MOTION = "MOTION"
    MOTION_AND_COLOUR = "MOTION_AND_COLOUR"


class ConfigError(ValueError):
    pass


class CalibrationMissingError(KeyError):
    pass


@dataclass(frozen=True)
class Phase:
    kind: PhaseKind
    block_count: int
    coherence_levels: tuple = COHERENCE_LEVELS

    def __post_init__(self):
        object.__setattr__(self, "kind", PhaseKind(self.kind))
        object.__setattr__(self, "coherence_levels", tuple(int(c) for c in self.coherence_levels))

    @property
    def colour_predictive(self) -> bool:
        return self.kind is PhaseKind.MOTION_AND_COLOUR


@dataclass(frozen=True)
class CoherenceLevel:
    label: int
    trials_per_100: int


@dataclass(frozen=True)
class TrialSkeleton:
    index: int
    phase: PhaseKind
    coherence: int
    y: int
    colour_sign: int
    colour_predictive: bool


def default_curriculum() -> list[Phase]:
    return [
        Phase(PhaseKind.TRAINING, 6, (20, 30, 45)),
        Phase(PhaseKind.MOTION, 2, COHERENCE_LEVELS),
        Phase(PhaseKind.MOTION_AND_COLOUR, 5, COHERENCE_LEVELS),
    ]


def block_frequencies(levels: Sequence[int], block_size=BLOCK_SIZE) -> list[CoherenceLevel]:
    """Trial counts per level for one block.

    Uses the published table when all five levels are active.  Any other
    subset gets equal shares, with the remainder handed out one trial at a
    time from the lowest level upwards (three levels -> 34/33/33).
    """
    levels = tuple(levels)
    if not levels:
        raise ConfigError("a phase needs at least one coherence level")
    unknown = set(levels) - set(COHERENCE_LEVELS)
    if unknown:
        raise ConfigError(f"unknown coherence levels {sorted(unknown)}")
    if set(levels) == set(COHERENCE_LEVELS) and block_size == BLOCK_SIZE:
        counts = [LEVEL_FREQUENCIES[c] for c in levels]
    else:
        base, extra = divmod(block_size, len(levels))
        counts = [base + (i < extra) for i in range(len(levels))]
    if sum(counts) != block_size:
        raise ConfigError(f"frequencies sum to {sum(counts)}, expected {block_size}")
    return [CoherenceLevel(c, n) for c, n in zip(levels, counts)]


def _block_coherences(freqs: list[CoherenceLevel], rng: np.random.Generator) -> np.ndarray:
    labels = np.repeat([f.label for f in freqs], [f.trials_per_100 for f in freqs])
    counts = [f.trials_per_100 for f in freqs]
    if all(n % 2 == 0 for n in counts):
        # shuffle within half-blocks so each 50 trials hold the same mix
        half = np.repeat([f.label for f in freqs], [n // 2 for n in counts])
        return np.concatenate([rng.permutation(half), rng.permutation(half)])
    return rng.permutation(labels)


def build_curriculum(phases: Sequence[Phase], rng: np.random.Generator,
                     control: bool = False) -> list[TrialSkeleton]:
    """Lay out all trials of a curriculum.

    Every trial draws a label and a random colour sign; in colour-predictive
    phases (and only when ``control`` is false) the colour sign is replaced
    by the label.  The number of random draws is therefore the same for
    control and experimental runs built from the same generator.
    """
    if not phases:
        raise ConfigError("curriculum is empty")
    out = []
    index = 0
    for phase in phases:
        if phase.block_count < 0:
            raise ConfigError("block_count must be >= 0")
        freqs = block_frequencies(phase.coherence_levels)
        predictive = phase.colour_predictive and not control
        for _ in range(phase.block_count):
            coh = _block_coherences(freqs, rng)
            ys = rng.choice(np.array([-1, 1]), size=BLOCK_SIZE)
            signs = rng.choice(np.array([-1, 1]), size=BLOCK_SIZE)
            for c, y, s in zip(coh, ys, signs):
                y = int(y)
                out.append(TrialSkeleton(index, phase.kind, int(c), y,
                                         y if predictive else int(s), predictive))
                index += 1
    return out


def skeleton_arrays(skeletons: Sequence[TrialSkeleton]) -> dict[str, np.ndarray]:
    """Column arrays for vectorised simulation."""
    return {
        "index": np.array([s.index for s in skeletons], dtype=int),
        "phase": np.array([s.phase.value for s in skeletons]),
        "coherence": np.array([s.coherence for s in skeletons], dtype=int),
        "y": np.array([s.y for s in skeletons], dtype=int),
        "colour_sign": np.array([s.colour_sign for s in skeletons], dtype=int),
        "colour_predictive": np.array([s.colour_predictive for s in skeletons], dtype=bool),
    }


def motion_mean(hyp, coherence):
    try:
        return hyp.motion_means[coherence]
    except KeyError:
        raise CalibrationMissingError(
            f"no fitted motion mean for coherence level {coherence}") from None


def sample_inputs(skeleton: TrialSkeleton, hyp, rng: np.random.Generator):
    """Draw ``(x_m, x_c)`` for one trial (motion noise first, then colour)."""
    mean_m = motion_mean(hyp, skeleton.coherence)
    z_m, z_c = rng.standard_normal(2)
    x_m = skeleton.y * mean_m + hyp.motion_sd * z_m
    x_c = skeleton.colour_sign * hyp.colour_mean + hyp.colour_sd * z_c
    return x_m, x_c


def inputs_from_normals(arrays, hyp, z_m, z_c, motion_means=None):
    """Vectorised :func:`sample_inputs` given pre-drawn standard normals.

    ``motion_means`` overrides ``hyp.motion_means``; it may be a mapping or
    an array ``(5,)`` or ``(n_agents, 5)`` ordered like ``COHERENCE_LEVELS``.
    """
    coherence = arrays["coherence"]
    if motion_means is None:
        motion_means = hyp.motion_means
    if isinstance(motion_means, dict):
        means = np.array([motion_mean(hyp.with_(motion_means=motion_means), int(c))
                          for c in COHERENCE_LEVELS])
    else:
        means = np.asarray(motion_means, dtype=float)
    idx = np.searchsorted(COHERENCE_LEVELS, coherence)
    if means.ndim == 2:
        mean_m = np.take_along_axis(means, np.atleast_2d(idx), axis=1)
    else:
        mean_m = means[idx]
    x_m = arrays["y"] * mean_m + hyp.motion_sd * z_m
    x_c = arrays["colour_sign"] * hyp.colour_mean + hyp.colour_sd * z_c
    return x_m, x_c


def write_skeleton_csv(path, skeletons: Sequence[TrialSkeleton]):
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(["index", "phase", "coherence", "y", "colour_sign"])
        for s in skeletons:
            writer.writerow([s.index, s.phase.value, s.coherence, s.y, s.colour_sign])
