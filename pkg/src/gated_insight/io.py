"""File formats: trial logs, classification tables, sweep tables, run
configs and the JSON summaries derived from them.

Numbers are written with 17 significant digits so every float survives a
round trip exactly; files are UTF-8 with LF line endings.  FORMATS.md
documents each schema.
"""
from __future__ import annotations

import configparser
import csv
import json
import math
import os
from dataclasses import asdict, dataclass, fields
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np

from .analysis import (FAMILIES, AccuracySeries, InsightClassification, group_model_comparison,
                       ks_uniform_delays, switch_align)
from .model import PARAM_NAMES
from .task import COHERENCE_LEVELS, ConfigError, Phase, PhaseKind, default_curriculum


class SchemaError(ValueError):
    pass


class EmptyLogError(ValueError):
    pass


def fmt(value) -> str:
    """17-significant-digit text for floats; plain text for everything else."""
    if value is None:
        return ""
    if isinstance(value, str):
        return value
    if isinstance(value, (bool, np.bool_)):
        return "1" if value else "0"
    if isinstance(value, (int, np.integer)):
        return str(int(value))
    value = float(value)
    if math.isnan(value):
        return "nan"
    return format(value, ".17g")


def _float(text):
    return float(text) if text != "" else float("nan")


def _open_write(path):
    return open(path, "w", newline="", encoding="utf-8")


def _reader(path, required, what):
    fh = open(path, newline="", encoding="utf-8")
    reader = csv.reader(fh)
    try:
        header = next(reader)
    except StopIteration:
        fh.close()
        raise EmptyLogError(f"{path}: empty {what}") from None
    missing = [c for c in required if c not in header]
    if missing:
        fh.close()
        raise SchemaError(f"{path}: {what} lacks column(s) {', '.join(missing)}")
    return fh, reader, {name: i for i, name in enumerate(header)}


# ---------------------------------------------------------------------------
# trial logs

TRIAL_COLUMNS = ("agent_id", "trial", "phase", "coherence", "y", "decision", "correct",
                 "w_m", "w_c", "g_m", "g_c", "d_w_m", "d_w_c", "d_g_m", "d_g_c")
OPTIONAL_TRIAL_COLUMNS = ("x_m", "x_c", "eta", "diverged")


@dataclass(frozen=True)
class TrialRecord:
    """One logged trial: parameters are those the network decided with,
    deltas are the update applied after the trial."""

    agent_id: int
    trial: int
    phase: str
    coherence: int
    y: int
    decision: int
    correct: bool
    w_m: float
    w_c: float
    g_m: float
    g_c: float
    d_w_m: float
    d_w_c: float
    d_g_m: float
    d_g_c: float
    x_m: float = float("nan")
    x_c: float = float("nan")
    eta: float = float("nan")
    diverged: bool = False


_INT_FIELDS = {"agent_id", "trial", "coherence", "y", "decision"}
_BOOL_FIELDS = {"correct", "diverged"}


def _parse_field(name, text):
    if name in _INT_FIELDS:
        return int(text)
    if name in _BOOL_FIELDS:
        return text not in ("0", "", "False", "false")
    if name == "phase":
        return text
    return _float(text)


def _trajectory_deltas(traj):
    return traj.delta if traj.delta is not None else np.diff(traj.parameter_table(), axis=1)


def logged_final_params(traj) -> np.ndarray:
    """Final parameters as a trial log reconstructs them (last row plus delta)."""
    return traj.parameter_table()[:, -2] + _trajectory_deltas(traj)[:, -1]


def trajectory_records(traj) -> Iterable[TrialRecord]:
    """Trial records of every agent in a trajectory, agent-major."""
    table = traj.parameter_table()
    deltas = _trajectory_deltas(traj)
    for a in range(traj.n_agents):
        diverged = bool(traj.diverged[a])
        for t in range(traj.n_trials):
            p, d = table[a, t], deltas[a, t]
            yield TrialRecord(int(traj.agent_ids[a]), t, str(traj.phase[a, t]), int(traj.coherence[a, t]),
                              int(traj.y[a, t]), int(traj.decision[a, t]), bool(traj.correct[a, t]),
                              *map(float, p), *map(float, d), float(traj.x_m[a, t]),
                              float(traj.x_c[a, t]), float(traj.eta[a, t]), diverged)


def write_trial_log(path, records: Iterable[TrialRecord]):
    columns = TRIAL_COLUMNS + OPTIONAL_TRIAL_COLUMNS
    n = 0
    with _open_write(path) as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(columns)
        for r in records:
            writer.writerow([fmt(getattr(r, c)) for c in columns])
            n += 1
    return n


def read_trial_log(path) -> list[TrialRecord]:
    fh, reader, index = _reader(path, TRIAL_COLUMNS, "trial log")
    present = [f.name for f in fields(TrialRecord) if f.name in index]
    with fh:
        records = [TrialRecord(**{name: _parse_field(name, row[index[name]]) for name in present})
                   for row in reader if row]
    if not records:
        raise EmptyLogError(f"{path}: trial log has a header but no trials")
    return records


@dataclass
class TrialArrays:
    """A trial log reshaped to ``(n_agents, n_trials)`` arrays."""

    agent_ids: np.ndarray
    phase: np.ndarray
    coherence: np.ndarray
    correct: np.ndarray
    params: np.ndarray          # (A, T, 4) parameters before each trial
    deltas: np.ndarray          # (A, T, 4) update applied after each trial
    diverged: np.ndarray

    @property
    def final_params(self) -> np.ndarray:
        """Parameters after the last trial, rebuilt as last row plus its delta."""
        return self.params[:, -1] + self.deltas[:, -1]

    def onset_trial(self) -> int:
        hits = np.flatnonzero(self.phase[0] == PhaseKind.MOTION_AND_COLOUR.value)
        if hits.size == 0:
            raise ValueError("trial log has no MOTION_AND_COLOUR trials")
        return int(hits[0])


def trial_arrays(records: Sequence[TrialRecord]) -> TrialArrays:
    by_agent = {}
    for r in records:
        by_agent.setdefault(r.agent_id, []).append(r)
    agents = sorted(by_agent)
    rows = [sorted(by_agent[a], key=lambda r: r.trial) for a in agents]
    if len({len(r) for r in rows}) != 1:
        raise SchemaError("agents in the trial log have different trial counts")
    return TrialArrays(
        agent_ids=np.array(agents),
        phase=np.array([[r.phase for r in row] for row in rows]),
        coherence=np.array([[r.coherence for r in row] for row in rows]),
        correct=np.array([[r.correct for r in row] for row in rows]),
        params=np.array([[[getattr(r, p) for p in PARAM_NAMES] for r in row] for row in rows]),
        deltas=np.array([[[getattr(r, f"d_{p}") for p in PARAM_NAMES] for r in row] for row in rows]),
        diverged=np.array([row[0].diverged for row in rows]),
    )


# ---------------------------------------------------------------------------
# classification tables

CLASSIFICATION_COLUMNS = (
    "agent_id", "bic_sigmoid", "bic_linear", "bic_step", "m", "t_s", "y_max", "y_min",
    "steepness", "corrected", "threshold", "is_insight", "switch_bin", "delay_bins",
    "t_origin", "window", "diverged",
    "onset_w_m", "onset_w_c", "onset_g_m", "onset_g_c",
    "final_w_m", "final_w_c", "final_g_m", "final_g_c",
)


@dataclass(frozen=True)
class ClassificationRow:
    agent_id: int
    bics: tuple                 # FAMILIES order
    sigmoid: tuple              # m, t_s, y_max, y_min
    classification: InsightClassification
    t_origin: int
    window: int
    diverged: bool
    onset: tuple
    final: tuple
    bins: tuple

    def series(self) -> AccuracySeries:
        return AccuracySeries(np.array(self.bins), 0, self.t_origin, self.sigmoid[3])


def classification_rows(agent_ids, classifications, fits, series, diverged, onset, final):
    from .analysis import SIGMOID

    rows = []
    for i, c in enumerate(classifications):
        sig = fits[i][SIGMOID].params
        rows.append(ClassificationRow(
            int(agent_ids[i]), tuple(float(fits[i][f].bic) for f in FAMILIES),
            (sig["m"], sig["t_s"], sig["y_max"], sig["y_min"]), c, series[i].t_origin,
            len(series[i]) - series[i].t_origin, bool(diverged[i]),
            tuple(float(v) for v in onset[i]), tuple(float(v) for v in final[i]),
            tuple(float(v) for v in series[i].bin_values)))
    return rows


def write_classification_csv(path, rows: Sequence[ClassificationRow]):
    n_bins = max((len(r.bins) for r in rows), default=0)
    header = list(CLASSIFICATION_COLUMNS) + [f"bin_{b}" for b in range(n_bins)]
    with _open_write(path) as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(header)
        for r in rows:
            c = r.classification
            values = [r.agent_id, *r.bics, *r.sigmoid, c.raw_steepness, c.corrected_steepness,
                      c.threshold, c.is_insight, c.switch_bin, c.delay_bins, r.t_origin, r.window,
                      r.diverged, *r.onset, *r.final, *r.bins]
            writer.writerow([fmt(v) for v in values])


def read_classification_csv(path) -> list[ClassificationRow]:
    fh, reader, index = _reader(path, CLASSIFICATION_COLUMNS, "classification table")
    bin_cols = sorted((int(k[4:]), i) for k, i in index.items() if k.startswith("bin_"))
    rows = []
    with fh:
        for raw in reader:
            if not raw:
                continue

            def get(name):
                return raw[index[name]]

            def opt_int(name):
                return int(get(name)) if get(name) != "" else None

            cls = InsightClassification(
                _float(get("steepness")), _float(get("steepness")) - _float(get("corrected")),
                _float(get("corrected")), _float(get("threshold")), get("is_insight") == "1",
                opt_int("switch_bin"), opt_int("delay_bins"))
            rows.append(ClassificationRow(
                int(get("agent_id")),
                tuple(_float(get(f"bic_{f.lower()}")) for f in FAMILIES),
                tuple(_float(get(k)) for k in ("m", "t_s", "y_max", "y_min")),
                cls, int(get("t_origin")), int(get("window")), get("diverged") == "1",
                tuple(_float(get(f"onset_{p}")) for p in PARAM_NAMES),
                tuple(_float(get(f"final_{p}")) for p in PARAM_NAMES),
                tuple(_float(raw[i]) for _, i in bin_cols)))
    if not rows:
        raise EmptyLogError(f"{path}: classification table has no agents")
    return rows


def _mean(x):
    x = np.asarray(x, dtype=float)
    return float(x.mean()) if x.size else None


def _clean(value):
    """JSON-safe copy: NaN and inf become null, numpy scalars become floats."""
    if isinstance(value, dict):
        return {str(k): _clean(v) for k, v in value.items()}
    if isinstance(value, (list, tuple, np.ndarray)):
        return [_clean(v) for v in value]
    if isinstance(value, (bool, np.bool_)):
        return bool(value)
    if isinstance(value, (int, np.integer)):
        return int(value)
    if isinstance(value, (float, np.floating)):
        return float(value) if math.isfinite(value) else None
    return value


def summarise_classification(rows: Sequence[ClassificationRow]) -> dict:
    """Group statistics computed only from a classification table."""
    valid = [r for r in rows if not r.diverged]
    insight = [r for r in valid if r.classification.is_insight]
    others = [r for r in valid if not r.classification.is_insight]
    delays = np.array([r.classification.delay_bins for r in insight], dtype=float)
    window = rows[0].window
    inside = delays[(delays >= 0) & (delays <= window)]
    ks = {"n": int(inside.size), "excluded": int(delays.size - inside.size), "window": window,
          "D": None, "p": None}
    if inside.size:
        ks["D"], ks["p"] = ks_uniform_delays(inside, window)
    comparison = None
    if len(insight) >= 2:
        mc = group_model_comparison(np.array([r.bics for r in insight]), FAMILIES)
        comparison = {"families": list(mc.families), "mean_bic": mc.mean_bic,
                      "expected_frequency": mc.expected_frequency, "exceedance": mc.exceedance,
                      "protected_exceedance": mc.protected_exceedance, "bor": mc.bor,
                      "degenerate": mc.degenerate}
    aligned = switch_align([r.series() for r in valid], [r.classification for r in valid])

    def onset(group, k):
        return _mean([abs(r.onset[k]) for r in group])

    return _clean({
        "n_agents": len(rows),
        "n_diverged": len(rows) - len(valid),
        "n_insight": len(insight),
        "insight_fraction": len(insight) / len(valid) if valid else None,
        "threshold": rows[0].classification.threshold,
        "mean_delay_bins": _mean(delays),
        "delay_sd": float(delays.std(ddof=1)) if delays.size > 1 else None,
        "ks_uniform": ks,
        "model_comparison": comparison,
        "switch_aligned": {"pre": aligned.pre_mean, "post": aligned.post_mean, "n": len(insight)},
        "onset_parameters": {
            f"{p}_{label}": onset(group, k)
            for k, p in enumerate(PARAM_NAMES) for label, group in (("insight", insight), ("no_insight", others))
        },
    })


def write_json(path, payload):
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        json.dump(_clean(payload), fh, indent=2, sort_keys=True, allow_nan=False)
        fh.write("\n")


# ---------------------------------------------------------------------------
# binned series (summary retention) and sweep tables

def write_series_csv(path, groups: dict):
    """``groups`` maps a cohort label to ``(agent_ids, series, final_params)``."""
    n_bins = max(len(s) for _, series, _ in groups.values() for s in series)
    header = ["cohort", "agent_id", "t_origin", "y_min"] + [f"final_{p}" for p in PARAM_NAMES] \
        + [f"bin_{b}" for b in range(n_bins)]
    with _open_write(path) as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(header)
        for label, (ids, series, final) in groups.items():
            for a, s, f in zip(ids, series, final):
                writer.writerow([label, fmt(a), fmt(s.t_origin), fmt(s.y_min), *map(fmt, f),
                                 *map(fmt, s.bin_values)])


SWEEP_COLUMNS = ("axis", "value", "mask", "repetition", "master_seed", "n_agents", "n_insight",
                 "insight_fraction", "mean_delay_bins", "n_diverged")


def write_sweep_csv(path, rows):
    with _open_write(path) as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(SWEEP_COLUMNS)
        for r in rows:
            d = asdict(r)
            writer.writerow([fmt(d[c]) if c not in ("axis", "mask") else d[c] for c in SWEEP_COLUMNS])


def read_sweep_csv(path):
    from .experiments import SweepRow

    fh, reader, index = _reader(path, SWEEP_COLUMNS, "sweep table")
    out = []
    with fh:
        for raw in reader:
            if not raw:
                continue
            g = {c: raw[index[c]] for c in SWEEP_COLUMNS}
            out.append(SweepRow(g["axis"], float(g["value"]), g["mask"], int(g["repetition"]),
                                int(g["master_seed"]), int(g["n_agents"]), int(g["n_insight"]),
                                _float(g["insight_fraction"]), _float(g["mean_delay_bins"]),
                                int(g["n_diverged"])))
    if not out:
        raise EmptyLogError(f"{path}: sweep table has no rows")
    return out


def summarise_sweep_rows(rows) -> dict:
    from .experiments import spearman, summarise_sweep

    points = summarise_sweep(rows)
    values = [p["value"] for p in points]
    out = {"axis": rows[0].axis, "mask": rows[0].mask, "points": points,
           "spearman_count": None, "spearman_delay": None}
    if len(points) > 2:
        out["spearman_count"] = spearman(values, [p["mean_insight"] for p in points])
        out["spearman_delay"] = spearman(values, [p["mean_delay_bins"] for p in points])
    return _clean(out)


def write_rows_csv(path, rows: Sequence[dict]):
    """Long-format table of homogeneous dicts (figure data)."""
    if not rows:
        header = []
    else:
        header = list(rows[0])
    with _open_write(path) as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(header)
        for row in rows:
            writer.writerow([v if isinstance(v, str) else fmt(v) for v in (row[k] for k in header)])


# ---------------------------------------------------------------------------
# calibration tables

def read_calibration_csv(path):
    """Motion means from a calibration table.

    Returns ``(shared, per_agent)``: a single mean mapping if the table has
    an ``all`` row, otherwise a dict agent_id -> mean mapping.
    """
    cols = ["agent_id"] + [f"M{c}" for c in COHERENCE_LEVELS]
    fh, reader, index = _reader(path, cols, "calibration table")
    shared, per_agent = None, {}
    with fh:
        for raw in reader:
            if not raw:
                continue
            means = {c: float(raw[index[f"M{c}"]]) for c in COHERENCE_LEVELS}
            key = raw[index["agent_id"]]
            if key == "all":
                shared = means
            else:
                per_agent[int(key)] = means
    if shared is None and not per_agent:
        raise EmptyLogError(f"{path}: calibration table has no rows")
    return shared, per_agent


# ---------------------------------------------------------------------------
# run configs

EXPERIMENTS = ("cohort", "calibrate", "analyze", "sweep-noise", "sweep-lambda", "transplant",
               "compare", "report")
RETENTION = ("full", "summary")
_HYP_FLOATS = ("alpha", "lam", "sigma_eta", "sigma_xi", "colour_mean", "colour_sd", "motion_sd")


def _parse_means(text):
    out = {}
    for item in filter(None, (s.strip() for s in text.split(","))):
        level, _, value = item.partition(":")
        out[int(level)] = float(value)
    if set(out) != set(COHERENCE_LEVELS):
        raise ConfigError(f"motion means needed for levels {COHERENCE_LEVELS}, got {sorted(out)}")
    return out


def _format_means(means):
    return ", ".join(f"{c}:{fmt(means[c])}" for c in COHERENCE_LEVELS)


def parse_phases(text) -> tuple:
    """``KIND:blocks[:c1/c2/...]`` items separated by commas."""
    phases = []
    for item in filter(None, (s.strip() for s in text.split(","))):
        parts = item.split(":")
        if len(parts) not in (2, 3):
            raise ConfigError(f"bad phase {item!r}; expected KIND:blocks[:levels]")
        try:
            kind = PhaseKind(parts[0].strip().upper())
            blocks = int(parts[1])
            levels = tuple(int(c) for c in parts[2].split("/")) if len(parts) == 3 else COHERENCE_LEVELS
            phases.append(Phase(kind, blocks, levels))
        except ValueError as exc:
            raise ConfigError(f"bad phase {item!r}: {exc}") from None
    if not phases:
        raise ConfigError("curriculum is empty")
    return tuple(phases)


def format_phases(phases) -> str:
    return ", ".join(f"{p.kind.value}:{p.block_count}:{'/'.join(map(str, p.coherence_levels))}"
                     for p in phases)


def _hyp_overrides(section) -> dict:
    out = {}
    for key, text in section.items():
        if key in _HYP_FLOATS:
            out[key] = float(text)
        elif key == "noise_mask":
            out[key] = frozenset(s.strip() for s in text.split(",") if s.strip())
        elif key == "l1_proximal":
            out[key] = section.getboolean(key)
        elif key == "motion_means":
            out[key] = _parse_means(text)
        else:
            raise ConfigError(f"unknown hyperparameter {key!r}")
    return out


@dataclass
class RunConfig:
    """Everything needed to re-run an experiment."""

    kind: str = "cohort"
    n_agents: int = 99
    master_seed: int = 0
    variant: str = "SHALLOW_L1"
    n_sequences: int = 10
    phases: tuple = tuple(default_curriculum())
    hyperparameters: dict = None          # overrides for shallow variants
    deep_hyperparameters: dict = None     # overrides for the hidden-layer variant
    calibration_seed: int = 0
    calibration_replicates: int = 5
    calibration_targets: dict = None      # level -> accuracy; default targets if None
    calibration_file: str = ""            # per-agent or shared motion means
    targets_file: str = ""                # per-agent accuracy targets for `calibrate`
    sweep_values: tuple = ()
    sweep_repetitions: int = 10
    sweep_mask: str = "all"
    variants: tuple = ("SHALLOW_L1", "SHALLOW_L2", "SHALLOW_NONE", "NO_GATE", "DEEP_L1")
    w_c_target: float | None = None
    w_m_target: float | None = None
    out: str = "out"
    retention: str = "full"
    figures: bool = False
    quiet: bool = False

    def __post_init__(self):
        self.hyperparameters = dict(self.hyperparameters or {})
        self.deep_hyperparameters = dict(self.deep_hyperparameters or {})
        if self.retention not in RETENTION:
            raise ConfigError(f"retention must be one of {RETENTION}")
        if self.n_agents < 1:
            raise ConfigError("agents must be >= 1")
        if not 0 <= self.master_seed < 2**64:
            raise ConfigError("seed must be an unsigned 64-bit integer")


def _section(cp, name):
    return cp[name] if cp.has_section(name) else {}


def load_config(path, kind=None) -> RunConfig:
    """Read an INI-style run config; unknown keys are errors."""
    cp = configparser.ConfigParser(interpolation=None)
    try:
        with open(path, encoding="utf-8") as fh:
            cp.read_file(fh)
    except (OSError, configparser.Error) as exc:
        raise ConfigError(f"cannot read config {path}: {exc}") from None
    known = {"run", "cohort", "hyperparameters", "deep", "curriculum", "calibration", "sweep",
             "compare", "transplant", "output"}
    unknown = set(cp.sections()) - known
    if unknown:
        raise ConfigError(f"unknown config section(s) {sorted(unknown)}")
    kw = {}
    allowed = {
        "run": {"kind"},
        "cohort": {"agents", "seed", "variant", "sequences"},
        "curriculum": {"phases"},
        "calibration": {"seed", "replicates", "targets", "file", "targets_file"},
        "sweep": {"values", "repetitions", "mask"},
        "compare": {"variants"},
        "transplant": {"w_c_target", "w_m_target"},
        "output": {"dir", "retention", "figures", "quiet"},
    }
    for name, keys in allowed.items():
        extra = set(_section(cp, name)) - keys
        if extra:
            raise ConfigError(f"unknown key(s) {sorted(extra)} in [{name}]")
    try:
        run, cohort, cal = _section(cp, "run"), _section(cp, "cohort"), _section(cp, "calibration")
        sweep, out = _section(cp, "sweep"), _section(cp, "output")
        if "kind" in run:
            kw["kind"] = run["kind"]
        if "agents" in cohort:
            kw["n_agents"] = int(cohort["agents"])
        if "seed" in cohort:
            kw["master_seed"] = int(cohort["seed"])
        if "variant" in cohort:
            kw["variant"] = cohort["variant"].strip().upper()
        if "sequences" in cohort:
            kw["n_sequences"] = int(cohort["sequences"])
        if "phases" in _section(cp, "curriculum"):
            kw["phases"] = parse_phases(cp["curriculum"]["phases"])
        if cp.has_section("hyperparameters"):
            kw["hyperparameters"] = _hyp_overrides(cp["hyperparameters"])
        if cp.has_section("deep"):
            kw["deep_hyperparameters"] = _hyp_overrides(cp["deep"])
        if "seed" in cal:
            kw["calibration_seed"] = int(cal["seed"])
        if "replicates" in cal:
            kw["calibration_replicates"] = int(cal["replicates"])
        if "targets" in cal:
            kw["calibration_targets"] = _parse_means(cal["targets"])
        if "file" in cal:
            kw["calibration_file"] = cal["file"]
        if "targets_file" in cal:
            kw["targets_file"] = cal["targets_file"]
        if "values" in sweep:
            kw["sweep_values"] = tuple(float(v) for v in sweep["values"].split(",") if v.strip())
        if "repetitions" in sweep:
            kw["sweep_repetitions"] = int(sweep["repetitions"])
        if "mask" in sweep:
            kw["sweep_mask"] = sweep["mask"].strip()
        if "variants" in _section(cp, "compare"):
            kw["variants"] = tuple(v.strip().upper() for v in cp["compare"]["variants"].split(",")
                                   if v.strip())
        for key in ("w_c_target", "w_m_target"):
            if key in _section(cp, "transplant"):
                kw[key] = float(cp["transplant"][key])
        if "dir" in out:
            kw["out"] = out["dir"]
        if "retention" in out:
            kw["retention"] = out["retention"].strip()
        if "figures" in out:
            kw["figures"] = out.getboolean("figures")
        if "quiet" in out:
            kw["quiet"] = out.getboolean("quiet")
    except ValueError as exc:
        raise ConfigError(f"{path}: {exc}") from None
    if kind is not None:
        kw["kind"] = kind
    return RunConfig(**kw)


def _hyp_lines(overrides):
    lines = []
    for key in sorted(overrides):
        value = overrides[key]
        if key == "noise_mask":
            text = ", ".join(p for p in PARAM_NAMES if p in value)
        elif key == "motion_means":
            text = _format_means(value)
        elif key == "l1_proximal":
            text = "true" if value else "false"
        else:
            text = fmt(value)
        lines.append(f"{key} = {text}")
    return lines


def dump_config(cfg: RunConfig) -> str:
    """Canonical INI text; ``load_config`` of it gives back ``cfg``."""
    lines = ["[run]", f"kind = {cfg.kind}", "",
             "[cohort]", f"agents = {cfg.n_agents}", f"seed = {cfg.master_seed}",
             f"variant = {cfg.variant}", f"sequences = {cfg.n_sequences}", "",
             "[curriculum]", f"phases = {format_phases(cfg.phases)}", ""]
    if cfg.hyperparameters:
        lines += ["[hyperparameters]", *_hyp_lines(cfg.hyperparameters), ""]
    if cfg.deep_hyperparameters:
        lines += ["[deep]", *_hyp_lines(cfg.deep_hyperparameters), ""]
    lines += ["[calibration]", f"seed = {cfg.calibration_seed}",
              f"replicates = {cfg.calibration_replicates}"]
    if cfg.calibration_targets:
        lines.append(f"targets = {_format_means(cfg.calibration_targets)}")
    if cfg.calibration_file:
        lines.append(f"file = {cfg.calibration_file}")
    if cfg.targets_file:
        lines.append(f"targets_file = {cfg.targets_file}")
    lines.append("")
    if cfg.sweep_values:
        lines += ["[sweep]", "values = " + ", ".join(fmt(v) for v in cfg.sweep_values),
                  f"repetitions = {cfg.sweep_repetitions}", f"mask = {cfg.sweep_mask}", ""]
    lines += ["[compare]", "variants = " + ", ".join(cfg.variants), ""]
    if cfg.w_c_target is not None or cfg.w_m_target is not None:
        lines.append("[transplant]")
        if cfg.w_c_target is not None:
            lines.append(f"w_c_target = {fmt(cfg.w_c_target)}")
        if cfg.w_m_target is not None:
            lines.append(f"w_m_target = {fmt(cfg.w_m_target)}")
        lines.append("")
    lines += ["[output]", f"dir = {cfg.out}", f"retention = {cfg.retention}",
              f"figures = {'true' if cfg.figures else 'false'}", f"quiet = {'true' if cfg.quiet else 'false'}", ""]
    return "\n".join(lines)


def write_config(path, cfg: RunConfig):
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write(dump_config(cfg))


class OutputLock:
    """Exclusive lock file guarding an output directory."""

    NAME = ".lock"

    def __init__(self, directory):
        self.path = Path(directory) / self.NAME

    def __enter__(self):
        self.path.parent.mkdir(parents=True, exist_ok=True)
        try:
            fd = os.open(self.path, os.O_CREAT | os.O_EXCL | os.O_WRONLY)
        except FileExistsError:
            raise ConfigError(f"output directory {self.path.parent} is in use "
                              f"(remove {self.path} if no run is active)") from None
        with os.fdopen(fd, "w") as fh:
            fh.write(f"{os.getpid()}\n")
        return self

    def __exit__(self, *exc):
        self.path.unlink(missing_ok=True)
        return False
