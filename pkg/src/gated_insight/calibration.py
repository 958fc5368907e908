"""Fit motion input means so motion-phase accuracy matches a target profile.

The objective is the squared distance between target and simulated
accuracy per coherence level.  Simulated accuracy is the analytic decision
accuracy of the network state on each motion-phase trial, averaged over
trials and over a few replicate agents; using the closed form instead of
counting correct decisions keeps the objective smooth enough for a
derivative-free optimiser.
"""
from __future__ import annotations

import csv
from dataclasses import dataclass, field
from functools import lru_cache

import numpy as np
from scipy.optimize import minimize
from scipy.stats import norm

from .model import Hyperparameters, analytic_accuracy
from .simulate import simulate_shallow
from .task import COHERENCE_LEVELS, ConfigError, PhaseKind, default_curriculum

DEFAULT_TARGETS = {5: 0.60, 10: 0.63, 20: 0.85, 30: 0.88, 45: 0.91}


@dataclass(frozen=True)
class AccuracyTarget:
    accuracies: dict
    tolerance: float = 0.02

    def __post_init__(self):
        acc = {int(k): float(v) for k, v in self.accuracies.items()}
        if set(acc) != set(COHERENCE_LEVELS):
            raise ConfigError(f"targets needed for levels {COHERENCE_LEVELS}, got {sorted(acc)}")
        for level, value in acc.items():
            if not 0.5 <= value <= 1.0:
                raise ConfigError(f"target {value} for level {level} outside [0.5, 1]")
        ordered = [acc[c] for c in COHERENCE_LEVELS]
        if any(b < a for a, b in zip(ordered, ordered[1:])):
            raise ConfigError("targets must be non-decreasing in coherence")
        object.__setattr__(self, "accuracies", acc)

    def as_array(self):
        return np.array([self.accuracies[c] for c in COHERENCE_LEVELS])


@dataclass
class CalibrationResult:
    motion_means: dict
    achieved: dict
    iterations: int
    converged: bool
    objective: float
    initial_objective: float
    extra: dict = field(default_factory=dict)

    def max_deviation(self, target: AccuracyTarget):
        return max(abs(self.achieved[c] - target.accuracies[c]) for c in COHERENCE_LEVELS)


def default_targets() -> AccuracyTarget:
    # 20% and 30% are linear interpolations between the 10% and 45% anchors
    return AccuracyTarget(dict(DEFAULT_TARGETS))


def pre_colour_curriculum(phases=None):
    """The curriculum up to (excluding) the first colour-predictive phase."""
    phases = default_curriculum() if phases is None else list(phases)
    out = []
    for phase in phases:
        if phase.kind is PhaseKind.MOTION_AND_COLOUR:
            break
        out.append(phase)
    if not any(p.kind is PhaseKind.MOTION for p in out):
        raise ConfigError("curriculum has no MOTION phase before colour becomes predictive")
    return out


def motion_phase_accuracy(means, hyp: Hyperparameters, seed, replicates=5, phases=None):
    """Analytic motion-phase accuracy per coherence level for given means.

    ``means`` is ordered like ``COHERENCE_LEVELS``.  Colour is not
    predictive in the motion phase, so the colour term is averaged over
    both signs.
    """
    means = np.asarray(means, dtype=float)
    phases = pre_colour_curriculum(phases)
    traj = simulate_shallow(seed, replicates, hyp, phases=phases, motion_means=means)
    motion = traj.phase == PhaseKind.MOTION.value
    state = traj.params[:, :-1]
    mean_m = means[np.searchsorted(COHERENCE_LEVELS, traj.coherence)]
    acc = 0.5 * (
        analytic_accuracy(state, mean_m, hyp.motion_sd, hyp.colour_mean, hyp.colour_sd, hyp.sigma_eta)
        + analytic_accuracy(state, mean_m, hyp.motion_sd, -hyp.colour_mean, hyp.colour_sd, hyp.sigma_eta)
    )
    return np.array([acc[motion & (traj.coherence == c)].mean() for c in COHERENCE_LEVELS])


def initial_guess(targets: np.ndarray, hyp: Hyperparameters):
    # treats the learned motion gain as large relative to output noise
    return np.maximum(hyp.motion_sd * norm.ppf(np.clip(targets, 0.5, 0.999)), 0.0)


def calibrate(targets: AccuracyTarget, hyp: Hyperparameters, seed, replicates=5,
              max_evaluations=200, phases=None) -> CalibrationResult:
    """Fit one motion mean per coherence level with COBYLA (bounds M >= 0)."""
    goal = targets.as_array()
    if np.any(goal < 0.5):
        raise ConfigError("target accuracies must be >= 0.5")

    def objective(m):
        m = np.maximum(m, 0.0)
        return float(np.sum((motion_phase_accuracy(m, hyp, seed, replicates, phases) - goal) ** 2))

    x0 = initial_guess(goal, hyp)
    f0 = objective(x0)
    res = minimize(objective, x0, method="COBYLA",
                   bounds=[(0.0, None)] * len(COHERENCE_LEVELS),
                   options={"maxiter": max_evaluations, "rhobeg": 0.02, "tol": 1e-7})
    best = np.maximum(res.x, 0.0)
    f_best = objective(best)
    if f_best > f0:
        best, f_best = x0, f0
    achieved = motion_phase_accuracy(best, hyp, seed, replicates, phases)
    means = {c: float(v) for c, v in zip(COHERENCE_LEVELS, best)}
    result = CalibrationResult(
        motion_means=means,
        achieved={c: float(a) for c, a in zip(COHERENCE_LEVELS, achieved)},
        iterations=int(res.nfev),
        converged=False,
        objective=f_best,
        initial_objective=f0,
    )
    result.converged = result.max_deviation(targets) <= targets.tolerance
    return result


@lru_cache(maxsize=32)
def _cached(target_items, hyp_key, seed, replicates):
    hyp = Hyperparameters(**dict(hyp_key))
    return calibrate(AccuracyTarget(dict(target_items)), hyp, seed, replicates)


def cached_calibration(targets: AccuracyTarget, hyp: Hyperparameters, seed=0, replicates=5):
    """Memoised :func:`calibrate` for repeated cohort runs in one process."""
    key = (("alpha", hyp.alpha), ("lam", hyp.lam), ("sigma_eta", hyp.sigma_eta),
           ("sigma_xi", hyp.sigma_xi), ("noise_mask", hyp.noise_mask),
           ("regulariser", hyp.regulariser), ("colour_mean", hyp.colour_mean),
           ("colour_sd", hyp.colour_sd), ("motion_sd", hyp.motion_sd),
           ("l1_proximal", hyp.l1_proximal))
    return _cached(tuple(sorted(targets.accuracies.items())), key, seed, replicates)


def read_targets_csv(path) -> dict[int, AccuracyTarget]:
    """Per-agent targets: columns agent_id, c5, c10, c20, c30, c45."""
    out = {}
    with open(path, newline="", encoding="utf-8") as fh:
        reader = csv.DictReader(fh)
        needed = ["agent_id"] + [f"c{c}" for c in COHERENCE_LEVELS]
        missing = [c for c in needed if c not in (reader.fieldnames or [])]
        if missing:
            raise ConfigError(f"targets file lacks column(s) {missing}")
        for row in reader:
            out[int(row["agent_id"])] = AccuracyTarget(
                {c: float(row[f"c{c}"]) for c in COHERENCE_LEVELS})
    return out


def write_calibration_csv(path, results: dict[int, CalibrationResult]):
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(["agent_id"] + [f"M{c}" for c in COHERENCE_LEVELS]
                        + [f"acc{c}" for c in COHERENCE_LEVELS] + ["iterations", "converged"])
        for agent, res in sorted(results.items()):
            writer.writerow([agent] + [repr(res.motion_means[c]) for c in COHERENCE_LEVELS]
                            + [repr(res.achieved[c]) for c in COHERENCE_LEVELS]
                            + [res.iterations, int(res.converged)])
