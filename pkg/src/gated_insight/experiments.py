"""Cohort-level experiments: default cohort against its control, variant
comparison, noise and regularisation sweeps, and the weight transplant.

Every experimental cohort is classified against a control cohort trained
with the same seeds, skeleton sequences and hyperparameters, except that
colour never becomes predictive.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field, replace
from enum import Enum
from typing import Sequence

import numpy as np
from scipy import stats

from . import analysis
from .analysis import (FAMILIES, SIGMOID, InsightClassification, binned_cohort, classify_cohort,
                       corrected_steepness, fit_all, ks_uniform_delays, observed_steepness)
from .calibration import AccuracyTarget, cached_calibration, default_targets
from .model import PARAM_NAMES, Hyperparameters, Regulariser
from .simulate import Trajectory, simulate_deep, simulate_shallow
from .task import COHERENCE_LEVELS, PhaseKind, default_curriculum

# Output-noise SD used by the cohort experiments.  Post-switch accuracy is
# bounded by this noise; 0.5 keeps it near the reported levels while the
# motion-phase targets remain reachable.
DEFAULT_SIGMA_ETA = 0.5
DEEP_ALPHA = 0.1
DEEP_LAMBDA = 0.002
DEEP_SIGMA_XI = 0.01

NOISE_MASKS = {
    "all": PARAM_NAMES,
    "weights": ("w_m", "w_c"),
    "gates": ("g_m", "g_c"),
    "motion": ("w_m", "g_m"),
    "colour": ("w_c", "g_c"),
}


class Variant(str, Enum):
    SHALLOW_L1 = "SHALLOW_L1"
    SHALLOW_L2 = "SHALLOW_L2"
    SHALLOW_NONE = "SHALLOW_NONE"
    NO_GATE = "NO_GATE"
    DEEP_L1 = "DEEP_L1"

    @property
    def regulariser(self) -> Regulariser:
        return {
            Variant.SHALLOW_L1: Regulariser.L1,
            Variant.SHALLOW_L2: Regulariser.L2,
            Variant.SHALLOW_NONE: Regulariser.NONE,
            Variant.NO_GATE: Regulariser.NO_GATE,
            Variant.DEEP_L1: Regulariser.L1,
        }[self]

    @property
    def deep(self) -> bool:
        return self is Variant.DEEP_L1


def default_hyperparameters(variant=Variant.SHALLOW_L1) -> Hyperparameters:
    """Cohort defaults; motion means are filled in by calibration."""
    variant = Variant(variant)
    if variant.deep:
        return Hyperparameters(alpha=DEEP_ALPHA, lam=DEEP_LAMBDA, sigma_xi=DEEP_SIGMA_XI,
                               sigma_eta=0.0, regulariser=Regulariser.L1)
    return Hyperparameters(sigma_eta=DEFAULT_SIGMA_ETA, regulariser=variant.regulariser,
                           l1_proximal=True)


def calibration_hyperparameters() -> Hyperparameters:
    """Settings under which the shared motion means are calibrated."""
    return default_hyperparameters(Variant.SHALLOW_L1)


@dataclass(frozen=True)
class CohortSpec:
    n_agents: int = 99
    master_seed: int = 0
    hyperparameters: Hyperparameters | None = None
    phases: tuple = field(default_factory=lambda: tuple(default_curriculum()))
    control: bool = False
    variant: Variant = Variant.SHALLOW_L1
    n_sequences: int = 10
    targets: AccuracyTarget | None = None
    calibration_seed: int = 0
    # optional (n_agents, 5) per-agent motion means, ordered like COHERENCE_LEVELS
    agent_motion_means: tuple | None = None

    def __post_init__(self):
        object.__setattr__(self, "variant", Variant(self.variant))
        if self.agent_motion_means is not None:
            table = tuple(tuple(float(v) for v in row) for row in self.agent_motion_means)
            if len(table) != self.n_agents or any(len(row) != len(COHERENCE_LEVELS) for row in table):
                raise ValueError(f"agent_motion_means must be {self.n_agents} x {len(COHERENCE_LEVELS)}")
            object.__setattr__(self, "agent_motion_means", table)
        object.__setattr__(self, "phases", tuple(self.phases))
        if self.n_agents < 1:
            raise ValueError("n_agents must be >= 1")
        if self.n_sequences < 1:
            raise ValueError("n_sequences must be >= 1")

    def with_(self, **changes) -> "CohortSpec":
        return replace(self, **changes)

    def base_hyperparameters(self) -> Hyperparameters:
        return self.hyperparameters or default_hyperparameters(self.variant)

    def resolved_hyperparameters(self) -> Hyperparameters:
        """Hyperparameters with motion means, calibrating if none are given."""
        hyp = self.base_hyperparameters()
        if hyp.motion_means:
            return hyp
        if self.agent_motion_means is not None:
            column = np.mean(self.agent_motion_means, axis=0)
            return hyp.with_(motion_means=dict(zip(COHERENCE_LEVELS, column)))
        cal = cached_calibration(self.targets or default_targets(), calibration_hyperparameters(),
                                 self.calibration_seed)
        return hyp.with_(motion_means=cal.motion_means)


@dataclass(frozen=True)
class SweepSpec:
    axis: str                       # "sigma_xi" or "lam"
    values: tuple
    repetitions: int = 10
    mask: str = "all"
    base: CohortSpec = field(default_factory=CohortSpec)

    def __post_init__(self):
        values = tuple(float(v) for v in self.values)
        object.__setattr__(self, "values", values)
        if self.axis not in ("sigma_xi", "lam"):
            raise ValueError(f"unknown sweep axis {self.axis!r}")
        if not values or any(b <= a for a, b in zip(values, values[1:])):
            raise ValueError("sweep values must be non-empty and strictly increasing")
        if self.repetitions < 1:
            raise ValueError("repetitions must be >= 1")
        if self.mask not in NOISE_MASKS:
            raise ValueError(f"unknown noise mask {self.mask!r}; choose from {sorted(NOISE_MASKS)}")
        lo, hi = (0.0, 0.5) if self.axis == "sigma_xi" else (0.0, 0.3)
        if values[0] < lo or values[-1] > hi:
            raise ValueError(f"{self.axis} values must lie in [{lo}, {hi}]")

    def seeds(self):
        return [self.base.master_seed + r for r in range(self.repetitions)]


@dataclass
class CohortResult:
    spec: CohortSpec
    hyperparameters: Hyperparameters
    classifications: list
    series: list
    fits: list                      # per agent: family -> CurveFit
    control_steepness: np.ndarray
    onset_params: np.ndarray        # (A, 4) in PARAM_NAMES order at colour onset
    final_params: np.ndarray
    diverged: np.ndarray            # (A,) bool
    trajectory: Trajectory | None = None
    control: "CohortResult | None" = None

    @property
    def n_agents(self):
        return len(self.classifications)

    @property
    def n_diverged(self):
        return int(self.diverged.sum())

    @property
    def insight_mask(self) -> np.ndarray:
        return np.array([c.is_insight for c in self.classifications]) & ~self.diverged

    @property
    def insight_count(self) -> int:
        return int(self.insight_mask.sum())

    @property
    def insight_fraction(self) -> float:
        valid = int((~self.diverged).sum())
        return self.insight_count / valid if valid else float("nan")

    @property
    def delays(self) -> np.ndarray:
        return np.array([c.delay_bins for c, ok in zip(self.classifications, self.insight_mask) if ok],
                        dtype=float)

    @property
    def mean_delay_bins(self) -> float:
        d = self.delays
        return float(d.mean()) if d.size else float("nan")

    @property
    def delay_sd(self) -> float:
        d = self.delays
        return float(d.std(ddof=1)) if d.size > 1 else float("nan")

    @property
    def bic_table(self) -> np.ndarray:
        return np.array([[f[fam].bic for fam in FAMILIES] for f in self.fits])

    @property
    def corrected(self) -> np.ndarray:
        return np.array([c.corrected_steepness for c in self.classifications])

    @property
    def t_origin(self) -> int:
        return self.series[0].t_origin

    @property
    def window(self) -> int:
        """Number of bins from colour onset to the end of the series."""
        return len(self.series[0]) - self.t_origin


def simulate_cohort(spec: CohortSpec, hyp: Hyperparameters | None = None, interventions=None) -> Trajectory:
    hyp = spec.resolved_hyperparameters() if hyp is None else hyp
    means = None if spec.agent_motion_means is None else np.array(spec.agent_motion_means)
    if spec.variant.deep:
        if interventions:
            raise ValueError("interventions are only supported for shallow networks")
        return simulate_deep(spec.master_seed, spec.n_agents, hyp, phases=list(spec.phases),
                             control=spec.control, n_sequences=spec.n_sequences, motion_means=means)
    return simulate_shallow(spec.master_seed, spec.n_agents, hyp, phases=list(spec.phases),
                            control=spec.control, n_sequences=spec.n_sequences,
                            interventions=interventions, motion_means=means)


def fit_cohort(traj: Trajectory):
    """Binned series, all three fits and corrected steepness per agent."""
    series = binned_cohort(traj.correct, traj.coherence, traj.phase)
    fits = [fit_all(s) for s in series]
    raw = np.array([observed_steepness(f[SIGMOID], s) for f, s in zip(fits, series)])
    corrected = np.array([corrected_steepness(f[SIGMOID], s) for f, s in zip(fits, series)])
    return series, fits, raw, corrected


def _parameter_snapshots(traj: Trajectory):
    try:
        table = traj.parameter_table()
    except ValueError:
        final = traj.params[:, -1].copy()
        return np.full_like(final, np.nan), final
    return table[:, traj.onset_trial()].copy(), table[:, -1].copy()


def _result(spec, hyp, traj, fitted, classifications, control_steepness, keep, control=None):
    series, fits, _, _ = fitted
    onset, final = _parameter_snapshots(traj)
    return CohortResult(spec, hyp, classifications, series, fits, np.asarray(control_steepness),
                        onset, final, traj.diverged.copy(), traj if keep else None, control)


def run_cohort(spec: CohortSpec, classify=True, interventions=None, control: CohortResult | None = None,
               keep_trajectory=True) -> CohortResult:
    """Train, fit and classify a cohort.

    Unless ``control`` is given, the matched control cohort is trained with
    the same seeds and hyperparameters.  Diverged agents are never
    classified as insight and are excluded from group statistics.
    """
    hyp = spec.resolved_hyperparameters()
    traj = simulate_cohort(spec, hyp, interventions)
    fitted = fit_cohort(traj)
    series, fits, raw, corrected = fitted
    if not classify:
        empty = [InsightClassification(float(r), float(r - c), float(c), float("nan"), False, None, None)
                 for r, c in zip(raw, corrected)]
        return _result(spec, hyp, traj, fitted, empty, np.array([]), keep_trajectory)
    if control is None:
        control = run_cohort(spec.with_(control=True, hyperparameters=hyp), classify=False,
                             keep_trajectory=keep_trajectory)
    ctrl_values = control_threshold_values(control.corrected, control.diverged)
    switch_points = [f[SIGMOID].params["t_s"] for f in fits]
    classes = classify_cohort(np.where(traj.diverged, -np.inf, corrected), ctrl_values, raw=raw,
                              switch_points=switch_points, t_origin=series[0].t_origin)
    return _result(spec, hyp, traj, fitted, classes, ctrl_values, keep_trajectory, control)


def control_threshold_values(corrected, diverged) -> np.ndarray:
    """Control values defining the threshold; if every control agent
    diverged there is no threshold and nobody can exceed it."""
    values = np.asarray(corrected, dtype=float)[~np.asarray(diverged, dtype=bool)]
    return values if values.size else np.array([np.inf])


# ---------------------------------------------------------------------------
# group statistics

def delay_test(result: CohortResult):
    """KS test of insight delays against uniform over the post-onset bins.

    Delays outside ``[0, window]`` (switches fitted before colour onset)
    are left out and counted.
    """
    d = result.delays
    window = result.window
    inside = d[(d >= 0) & (d <= window)]
    out = {"n": int(inside.size), "excluded": int(d.size - inside.size), "window": window,
           "D": float("nan"), "p": float("nan")}
    if inside.size:
        out["D"], out["p"] = ks_uniform_delays(inside, window)
    return out


def model_comparison(result: CohortResult, insight_only=True):
    mask = result.insight_mask if insight_only else ~result.diverged
    table = result.bic_table[mask]
    if len(table) < 2:
        return None
    return analysis.group_model_comparison(table, FAMILIES)


def switch_aligned(result: CohortResult):
    return analysis.switch_align(result.series, result.classifications)


def silent_knowledge(result: CohortResult) -> dict:
    """Mean absolute colour weight and gate at colour onset by group."""
    ins = result.insight_mask
    no = ~ins & ~result.diverged
    w_c = np.abs(result.onset_params[:, 1])
    g_c = np.abs(result.onset_params[:, 3])

    def mean(x, m):
        return float(x[m].mean()) if m.any() else float("nan")

    return {
        "w_c_insight": mean(w_c, ins), "w_c_no_insight": mean(w_c, no),
        "g_c_insight": mean(g_c, ins), "g_c_no_insight": mean(g_c, no),
        "w_m_insight": mean(np.abs(result.onset_params[:, 0]), ins),
        "w_m_no_insight": mean(np.abs(result.onset_params[:, 0]), no),
    }


def colour_gate_drive(traj: Trajectory, alpha, agents=None) -> np.ndarray:
    """Per-trial data step on the colour gate, aligned with sign(w_c).

    Positive values push the gate open in the direction that makes colour
    support the decision; the sign alignment lets agents be averaged.
    """
    before = traj.params[:, :-1]
    agents = np.arange(traj.n_agents) if agents is None else np.asarray(agents)
    w_m, w_c, g_m, g_c = (before[agents, :, i] for i in range(4))
    x_m, x_c, eta, y = traj.x_m[agents], traj.x_c[agents], traj.eta[agents], traj.y[agents]
    residual = g_m * w_m * x_m + g_c * w_c * x_c + eta - y
    return -alpha * x_c * np.abs(w_c) * residual


def gradient_change_point(result: CohortResult, half_width=50, seed=0) -> dict:
    """Change point of the insight group's mean colour-gate drive around onset."""
    traj = result.trajectory
    if traj is None or traj.params is None or traj.params.shape[1] <= 1:
        raise ValueError("gradient analysis needs a recorded shallow trajectory")
    onset = traj.onset_trial()
    lo, hi = max(onset - half_width, 0), min(onset + half_width, traj.n_trials)
    out = {"onset": onset, "window_start": lo}
    for name, mask in (("insight", result.insight_mask), ("no_insight", ~result.insight_mask & ~result.diverged)):
        if mask.sum() == 0:
            out[name] = None
            continue
        drive = colour_gate_drive(traj, result.hyperparameters.alpha, np.flatnonzero(mask))
        trace = drive[:, lo:hi].mean(axis=0)
        cp = analysis.change_point(trace, seed=seed)
        out[name] = None if cp is None else lo + cp
    return out


def cumulative_noise(result: CohortResult) -> dict:
    """Summed output and gradient noise per group at onset and at the end."""
    traj = result.trajectory
    if traj is None or traj.noise is None:
        raise ValueError("cumulative noise needs a recorded shallow trajectory")
    onset = traj.onset_trial()
    ins, no = result.insight_mask, ~result.insight_mask & ~result.diverged
    out = {}
    for label, stop in (("start", onset), ("end", traj.n_trials)):
        eta = traj.eta[:, :stop].sum(axis=1)
        xi = traj.noise[:, :stop].sum(axis=1)
        row = {"eta": (float(eta[ins].mean()), float(eta[no].mean()))}
        for i, name in enumerate(PARAM_NAMES):
            row[f"xi_{name}"] = (float(xi[ins, i].mean()), float(xi[no, i].mean()))
        out[label] = row
    return out


def dip_statistic(values) -> float:
    """Hartigan's dip statistic of a sample (larger means less unimodal)."""
    import diptest

    return float(diptest.dipstat(np.asarray(values, dtype=float)))


# ---------------------------------------------------------------------------
# sweeps and interventions

@dataclass(frozen=True)
class SweepRow:
    axis: str
    value: float
    mask: str
    repetition: int
    master_seed: int
    n_agents: int
    n_insight: int
    insight_fraction: float
    mean_delay_bins: float
    n_diverged: int


def _sweep_point(spec: CohortSpec, axis, value, mask, repetition) -> SweepRow:
    hyp = spec.resolved_hyperparameters()
    changes = {axis: value}
    if axis == "sigma_xi":
        changes["noise_mask"] = frozenset(NOISE_MASKS[mask])
    point = spec.with_(hyperparameters=hyp.with_(**changes))
    res = run_cohort(point, keep_trajectory=False)
    return SweepRow(axis, float(value), mask, repetition, spec.master_seed, spec.n_agents,
                    res.insight_count, res.insight_fraction, res.mean_delay_bins, res.n_diverged)


def _sweep(sweep: SweepSpec, progress=None) -> list[SweepRow]:
    rows = []
    for value in sweep.values:
        for r, seed in enumerate(sweep.seeds()):
            rows.append(_sweep_point(sweep.base.with_(master_seed=seed), sweep.axis, value, sweep.mask, r))
            if progress:
                progress(rows[-1])
    return rows


def sweep_noise(sweep: SweepSpec, progress=None) -> list[SweepRow]:
    """Insight counts over gradient-noise SDs applied to ``sweep.mask``."""
    if sweep.axis != "sigma_xi":
        raise ValueError("sweep_noise needs axis 'sigma_xi'")
    return _sweep(sweep, progress)


def sweep_lambda(sweep: SweepSpec, progress=None) -> list[SweepRow]:
    """Insight counts and delays over regularisation strengths."""
    if sweep.axis != "lam":
        raise ValueError("sweep_lambda needs axis 'lam'")
    return _sweep(sweep, progress)


def summarise_sweep(rows: Sequence[SweepRow]) -> list[dict]:
    """Mean and SD of insight counts (and mean delay) per axis value."""
    out = []
    for value in sorted({r.value for r in rows}):
        pts = [r for r in rows if r.value == value]
        counts = np.array([r.n_insight for r in pts], dtype=float)
        delays = np.array([r.mean_delay_bins for r in pts], dtype=float)
        delays = delays[np.isfinite(delays)]
        out.append({
            "axis": pts[0].axis, "value": value, "mask": pts[0].mask, "repetitions": len(pts),
            "mean_insight": float(counts.mean()),
            "sd_insight": float(counts.std(ddof=1)) if len(pts) > 1 else 0.0,
            "mean_delay_bins": float(delays.mean()) if delays.size else float("nan"),
        })
    return out


def spearman(x, y) -> float:
    x, y = np.asarray(x, dtype=float), np.asarray(y, dtype=float)
    ok = np.isfinite(x) & np.isfinite(y)
    x, y = x[ok], y[ok]
    # undefined for fewer than two points or a constant input
    if x.size < 2 or np.ptp(x) == 0 or np.ptp(y) == 0:
        return float("nan")
    return float(stats.spearmanr(x, y).statistic)


def transplant_targets(reference: CohortResult) -> tuple[float, float]:
    """Mean |w_c| and |w_m| at colour onset among the reference insight agents."""
    ins = reference.insight_mask
    if not ins.any():
        raise ValueError("reference cohort has no insight agents")
    return (float(np.abs(reference.onset_params[ins, 1]).mean()),
            float(np.abs(reference.onset_params[ins, 0]).mean()))


def weight_transplant(spec: CohortSpec, w_c_target=None, w_m_target=None,
                      reference: CohortResult | None = None) -> CohortResult:
    """Retrain ``spec`` with weight magnitudes reset at colour onset.

    At the first colour-predictive trial every agent's |w_c| and |w_m| are
    set to the targets, keeping each weight's sign; gates are untouched.
    Targets are scalars or per-agent arrays.  Missing targets are measured
    from ``reference`` (run here if absent).
    The classification threshold comes from the untouched control cohort.
    """
    if spec.variant.deep:
        raise ValueError("weight transplant is defined for shallow networks")
    if w_c_target is None or w_m_target is None:
        reference = reference or run_cohort(spec)
        wc, wm = transplant_targets(reference)
        w_c_target = wc if w_c_target is None else w_c_target
        w_m_target = wm if w_m_target is None else w_m_target
    w_c_target, w_m_target = np.asarray(w_c_target, float), np.asarray(w_m_target, float)
    if np.any(w_c_target < 0) or np.any(w_m_target < 0):
        raise ValueError("transplant targets must be >= 0")
    control = reference.control if reference is not None and reference.control is not None else None
    onset = _onset_index(spec.phases)

    def transplant(p):
        p[:, 0] = np.where(p[:, 0] < 0, -1.0, 1.0) * w_m_target
        p[:, 1] = np.where(p[:, 1] < 0, -1.0, 1.0) * w_c_target
        return p

    return run_cohort(spec, interventions={onset: transplant}, control=control)


def _onset_index(phases) -> int:
    t = 0
    for phase in phases:
        if phase.kind is PhaseKind.MOTION_AND_COLOUR:
            return t
        t += 100 * phase.block_count
    raise ValueError("curriculum has no MOTION_AND_COLOUR phase")


def compare_variants(specs: Sequence[CohortSpec]) -> list[dict]:
    """Run each variant with matched seeds and summarise its classification."""
    if len(specs) < 2:
        raise ValueError("need at least two variants to compare")
    rows = []
    for spec in specs:
        res = run_cohort(spec, keep_trajectory=False)
        corrected = res.corrected[~res.diverged]
        rows.append({
            "variant": spec.variant.value,
            "n_agents": res.n_agents,
            "n_insight": res.insight_count,
            "insight_fraction": res.insight_fraction,
            "mean_delay_bins": res.mean_delay_bins,
            "delay_sd": res.delay_sd,
            "steepness_median": float(np.median(corrected)),
            "steepness_iqr": float(np.subtract(*np.percentile(corrected, [75, 25]))),
            "dip": dip_statistic(corrected),
            "result": res,
        })
    return rows


# ---------------------------------------------------------------------------
# plot-ready tables

def accuracy_curve_rows(result: CohortResult):
    """Long-format rows: group, bin, mean accuracy, SEM (lowest coherence)."""
    values = np.array([s.bin_values for s in result.series])
    groups = {"insight": result.insight_mask, "no_insight": ~result.insight_mask & ~result.diverged}
    rows = []
    for name, mask in groups.items():
        if not mask.any():
            continue
        v = values[mask]
        sem = v.std(axis=0, ddof=1) / math.sqrt(len(v)) if len(v) > 1 else np.zeros(v.shape[1])
        for b in range(v.shape[1]):
            rows.append({"group": name, "bin": b, "accuracy": float(v[:, b].mean()), "sem": float(sem[b])})
    aligned = switch_aligned(result)
    if not aligned.empty:
        for j, off in enumerate(aligned.offsets):
            col = aligned.matrix[:, j]
            col = col[np.isfinite(col)]
            if col.size:
                rows.append({"group": "insight_aligned", "bin": int(off), "accuracy": float(col.mean()),
                             "sem": float(col.std(ddof=1) / math.sqrt(col.size)) if col.size > 1 else 0.0})
    return rows


def parameter_trajectory_rows(result: CohortResult, every=10):
    """Long-format rows of mean absolute parameters per group over trials."""
    traj = result.trajectory
    if traj is None or traj.params is None or traj.params.shape[1] <= 1:
        return []
    groups = {"insight": result.insight_mask, "no_insight": ~result.insight_mask & ~result.diverged}
    rows = []
    for name, mask in groups.items():
        if not mask.any():
            continue
        mean_abs = np.abs(traj.params[mask]).mean(axis=0)
        for t in range(0, mean_abs.shape[0], every):
            row = {"group": name, "trial": t}
            row.update({p: float(mean_abs[t, i]) for i, p in enumerate(PARAM_NAMES)})
            rows.append(row)
    return rows
