"""Command-line entry point.

Exit codes: 0 success, 1 configuration or usage error, 2 when more than
10% of the agents in some cohort diverged (outputs are still written).
"""
from __future__ import annotations

import argparse
import csv
import logging
import sys
from dataclasses import replace
from pathlib import Path

import numpy as np

from . import io
from .analysis import (SIGMOID, binned_cohort, classify_cohort, corrected_steepness, fit_all,
                       observed_steepness)
from .calibration import (AccuracyTarget, cached_calibration, calibrate, default_targets,
                          read_targets_csv, write_calibration_csv)
from .experiments import (CohortSpec, SweepSpec, Variant, accuracy_curve_rows, calibration_hyperparameters,
                          compare_variants, control_threshold_values, default_hyperparameters,
                          dip_statistic, parameter_trajectory_rows, run_cohort, sweep_lambda,
                          sweep_noise, transplant_targets, weight_transplant)
from .task import COHERENCE_LEVELS, ConfigError

log = logging.getLogger("gated_insight")

DIVERGENCE_TOLERANCE = 0.10
EXIT_OK, EXIT_CONFIG, EXIT_DIVERGED = 0, 1, 2


class UsageError(ConfigError):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise UsageError(f"{self.format_usage()}{self.prog}: error: {message}")


def _common(p):
    p.add_argument("--config", help="INI run configuration")
    p.add_argument("--seed", type=int, help="master seed (unsigned 64-bit)")
    p.add_argument("--out", help="output directory")
    p.add_argument("--agents", type=int, help="agents per cohort")
    p.add_argument("--quiet", action="store_true", help="only report warnings and errors")


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="gated-insight", description="Insight-like learning in gated networks.")
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    p = sub.add_parser("cohort", help="train and classify a cohort against its control")
    _common(p)
    p.add_argument("--variant", choices=[v.value for v in Variant])
    p.add_argument("--retention", choices=io.RETENTION)
    p.add_argument("--figures", action="store_true", help="also write plot-ready CSVs")

    p = sub.add_parser("calibrate", help="fit motion input means to accuracy targets")
    _common(p)
    p.add_argument("--targets", help="per-agent targets CSV (agent_id, c5, c10, c20, c30, c45)")

    p = sub.add_parser("analyze", help="classify agents from stored trial logs")
    _common(p)
    p.add_argument("--in", dest="inp", required=True, help="experimental trial log")
    p.add_argument("--control", help="control trial log (default: control_trials.csv beside --in)")

    for name, what in (("sweep-noise", "gradient-noise SD"), ("sweep-lambda", "regularisation strength")):
        p = sub.add_parser(name, help=f"insight counts over {what}")
        _common(p)
        p.add_argument("--values", help="comma-separated axis values")
        p.add_argument("--repetitions", type=int)
        if name == "sweep-noise":
            p.add_argument("--mask", help="parameters receiving noise: all, weights, gates, motion, colour")

    p = sub.add_parser("transplant", help="reset weight magnitudes at colour onset")
    _common(p)
    p.add_argument("--w-c-target", type=float)
    p.add_argument("--w-m-target", type=float)
    p.add_argument("--retention", choices=io.RETENTION)

    p = sub.add_parser("compare", help="compare regularisation variants on matched seeds")
    _common(p)
    p.add_argument("--variants", help="comma-separated variant names")

    p = sub.add_parser("report", help="regenerate summary.json from stored CSVs")
    p.add_argument("--in", dest="inp", required=True, help="output directory of a previous run")
    p.add_argument("--quiet", action="store_true")
    return parser


def _config_from_args(args) -> io.RunConfig:
    kind = args.command
    cfg = io.load_config(args.config, kind) if args.config else io.RunConfig(kind=kind)
    changes = {}
    if args.seed is not None:
        changes["master_seed"] = args.seed
    if args.out is not None:
        changes["out"] = args.out
    if args.agents is not None:
        changes["n_agents"] = args.agents
    if args.quiet:
        changes["quiet"] = True
    for attr, key in (("variant", "variant"), ("retention", "retention"), ("repetitions", "sweep_repetitions"),
                      ("mask", "sweep_mask"), ("w_c_target", "w_c_target"), ("w_m_target", "w_m_target"),
                      ("targets", "targets_file")):
        if getattr(args, attr, None) is not None:
            changes[key] = getattr(args, attr)
    if getattr(args, "figures", False):
        changes["figures"] = True
    if getattr(args, "values", None):
        changes["sweep_values"] = tuple(float(v) for v in args.values.split(",") if v.strip())
    if getattr(args, "variants", None):
        changes["variants"] = tuple(v.strip().upper() for v in args.variants.split(",") if v.strip())
    try:
        return replace(cfg, **changes)
    except ValueError as exc:
        raise ConfigError(str(exc)) from None


# ---------------------------------------------------------------------------
# config -> specs

def _targets(cfg) -> AccuracyTarget:
    return AccuracyTarget(cfg.calibration_targets) if cfg.calibration_targets else default_targets()


def resolve_motion_means(cfg: io.RunConfig):
    """Fill in motion means (shared or per agent) and return the new config
    together with the per-agent table, if any."""
    if "motion_means" in cfg.hyperparameters:
        return cfg, None
    if cfg.calibration_file:
        shared, per_agent = io.read_calibration_csv(cfg.calibration_file)
        if shared is not None:
            return replace(cfg, hyperparameters={**cfg.hyperparameters, "motion_means": shared}), None
        missing = [a for a in range(cfg.n_agents) if a not in per_agent]
        if missing:
            raise ConfigError(f"calibration file has no motion means for agent(s) {missing[:5]}")
        table = tuple(tuple(per_agent[a][c] for c in COHERENCE_LEVELS) for a in range(cfg.n_agents))
        return cfg, table
    log.info("calibrating motion means")
    shallow = {k: v for k, v in cfg.hyperparameters.items() if k != "motion_means"}
    hyp = calibration_hyperparameters().with_(**shallow)
    result = cached_calibration(_targets(cfg), hyp, cfg.calibration_seed, cfg.calibration_replicates)
    return replace(cfg, hyperparameters={**cfg.hyperparameters, "motion_means": result.motion_means}), None


def _hyperparameters(cfg, variant: Variant):
    base = default_hyperparameters(variant)
    shallow = dict(cfg.hyperparameters)
    if variant.deep:
        over = dict(cfg.deep_hyperparameters)
        over.setdefault("motion_means", shallow.get("motion_means", {}))
    else:
        over = shallow
    try:
        return base.with_(**over)
    except ValueError as exc:
        raise ConfigError(str(exc)) from None


def cohort_spec(cfg, variant=None, table=None) -> CohortSpec:
    try:
        variant = Variant(variant or cfg.variant)
    except ValueError:
        raise ConfigError(f"unknown variant {variant or cfg.variant!r}") from None
    try:
        return CohortSpec(n_agents=cfg.n_agents, master_seed=cfg.master_seed,
                          hyperparameters=_hyperparameters(cfg, variant), phases=cfg.phases,
                          variant=variant, n_sequences=cfg.n_sequences, targets=_targets(cfg),
                          calibration_seed=cfg.calibration_seed, agent_motion_means=table)
    except ValueError as exc:
        raise ConfigError(str(exc)) from None


# ---------------------------------------------------------------------------
# outputs

def result_rows(result):
    """Classification rows; with a trajectory, final parameters are rebuilt
    exactly as ``analyze`` rebuilds them from the trial log."""
    ids = np.arange(result.n_agents)
    final = result.final_params if result.trajectory is None else io.logged_final_params(result.trajectory)
    return io.classification_rows(ids, result.classifications, result.fits, result.series,
                                  result.diverged, result.onset_params, final)


def _write_logs(out: Path, cfg, cohorts: dict):
    """``cohorts`` maps a file stem to a CohortResult (with trajectory)."""
    if cfg.retention == "full":
        for stem, res in cohorts.items():
            io.write_trial_log(out / f"{stem}.csv", io.trajectory_records(res.trajectory))
        return
    groups = {}
    for stem, res in cohorts.items():
        groups[stem] = (np.arange(res.n_agents), res.series, res.final_params)
    io.write_series_csv(out / "series.csv", groups)


def _write_figures(out: Path, result, suffix=""):
    io.write_rows_csv(out / f"fig_accuracy{suffix}.csv", accuracy_curve_rows(result))
    io.write_rows_csv(out / f"fig_parameters{suffix}.csv", parameter_trajectory_rows(result))


def _read_config_snapshot(directory: Path) -> io.RunConfig:
    path = directory / "config.ini"
    if not path.exists():
        raise ConfigError(f"{directory} has no config.ini snapshot")
    return io.load_config(path)


def build_summary(directory) -> dict:
    """Summary of a run directory, computed only from its CSV files and
    config snapshot (``report`` and the original run share this code)."""
    directory = Path(directory)
    cfg = _read_config_snapshot(directory)
    out = {"kind": cfg.kind, "master_seed": cfg.master_seed}
    if cfg.kind in ("cohort", "analyze"):
        out["cohort"] = io.summarise_classification(io.read_classification_csv(directory / "classification.csv"))
    elif cfg.kind == "transplant":
        out["cohort"] = io.summarise_classification(io.read_classification_csv(directory / "classification.csv"))
        out["reference"] = io.summarise_classification(
            io.read_classification_csv(directory / "reference_classification.csv"))
        out["targets"] = {"w_c": cfg.w_c_target, "w_m": cfg.w_m_target}
    elif cfg.kind == "compare":
        variants = {}
        for name in cfg.variants:
            rows = io.read_classification_csv(directory / f"classification_{name}.csv")
            summary = io.summarise_classification(rows)
            corrected = [r.classification.corrected_steepness for r in rows if not r.diverged]
            summary["dip"] = dip_statistic(corrected)
            summary["steepness_median"] = float(np.median(corrected))
            variants[name] = summary
        out["variants"] = variants
    elif cfg.kind in ("sweep-noise", "sweep-lambda"):
        out["sweep"] = io.summarise_sweep_rows(io.read_sweep_csv(directory / "sweep.csv"))
    elif cfg.kind == "calibrate":
        with open(directory / "calibration.csv", newline="", encoding="utf-8") as fh:
            rows = list(csv.DictReader(fh))
        out["calibration"] = {
            "n": len(rows),
            "converged": sum(r["converged"] == "1" for r in rows),
            "motion_means": {r["agent_id"]: {c: float(r[f"M{c}"]) for c in COHERENCE_LEVELS} for r in rows},
            "achieved": {r["agent_id"]: {c: float(r[f"acc{c}"]) for c in COHERENCE_LEVELS} for r in rows},
        }
    else:
        raise ConfigError(f"cannot summarise a run of kind {cfg.kind!r}")
    return out


def _finish(out: Path, cfg):
    io.write_json(out / "summary.json", build_summary(out))
    log.info("wrote %s", out)


def _diverged_too_often(results) -> bool:
    return any(r.n_diverged > DIVERGENCE_TOLERANCE * r.n_agents for r in results)


# ---------------------------------------------------------------------------
# commands

def cmd_cohort(cfg, out: Path) -> int:
    cfg, table = resolve_motion_means(cfg)
    spec = cohort_spec(cfg, table=table)
    io.write_config(out / "config.ini", cfg)
    log.info("training %d agents (%s), seed %d", spec.n_agents, spec.variant.value, spec.master_seed)
    result = run_cohort(spec)
    io.write_classification_csv(out / "classification.csv", result_rows(result))
    _write_logs(out, cfg, {"trials": result, "control_trials": result.control})
    if cfg.figures:
        _write_figures(out, result)
    _finish(out, cfg)
    log.info("insight %d/%d", result.insight_count, result.n_agents)
    return EXIT_DIVERGED if _diverged_too_often([result, result.control]) else EXIT_OK


def cmd_transplant(cfg, out: Path) -> int:
    cfg, table = resolve_motion_means(cfg)
    spec = cohort_spec(cfg, table=table)
    if spec.variant.deep:
        raise ConfigError("transplant needs a shallow variant")
    reference = run_cohort(spec)
    if cfg.w_c_target is None or cfg.w_m_target is None:
        w_c, w_m = transplant_targets(reference)
        cfg = replace(cfg, w_c_target=w_c if cfg.w_c_target is None else cfg.w_c_target,
                      w_m_target=w_m if cfg.w_m_target is None else cfg.w_m_target)
    io.write_config(out / "config.ini", cfg)
    result = weight_transplant(spec, cfg.w_c_target, cfg.w_m_target, reference=reference)
    io.write_classification_csv(out / "classification.csv", result_rows(result))
    io.write_classification_csv(out / "reference_classification.csv", result_rows(reference))
    _write_logs(out, cfg, {"trials": result, "reference_trials": reference, "control_trials": reference.control})
    _finish(out, cfg)
    log.info("insight %d/%d after transplant, %d/%d before", result.insight_count, result.n_agents,
             reference.insight_count, reference.n_agents)
    return EXIT_DIVERGED if _diverged_too_often([result, reference, reference.control]) else EXIT_OK


def cmd_compare(cfg, out: Path) -> int:
    cfg, table = resolve_motion_means(cfg)
    specs = [cohort_spec(cfg, v, table) for v in cfg.variants]
    if len(specs) < 2:
        raise ConfigError("compare needs at least two variants")
    cfg = replace(cfg, retention="summary")
    io.write_config(out / "config.ini", cfg)
    rows = compare_variants(specs)
    results = []
    groups = {}
    for row in rows:
        res = row["result"]
        results += [res, res.control]
        io.write_classification_csv(out / f"classification_{row['variant']}.csv", result_rows(res))
        groups[row["variant"]] = (np.arange(res.n_agents), res.series, res.final_params)
        groups[f"control_{row['variant']}"] = (np.arange(res.n_agents), res.control.series,
                                               res.control.final_params)
    io.write_series_csv(out / "series.csv", groups)
    _finish(out, cfg)
    return EXIT_DIVERGED if _diverged_too_often(results) else EXIT_OK


def _cmd_sweep(cfg, out: Path, axis) -> int:
    cfg, table = resolve_motion_means(cfg)
    if not cfg.sweep_values:
        raise ConfigError("sweep needs values ([sweep] values or --values)")
    base = cohort_spec(cfg, table=table)
    try:
        sweep = SweepSpec(axis, cfg.sweep_values, cfg.sweep_repetitions,
                          cfg.sweep_mask if axis == "sigma_xi" else "all", base)
    except ValueError as exc:
        raise ConfigError(str(exc)) from None
    io.write_config(out / "config.ini", cfg)
    runner = sweep_noise if axis == "sigma_xi" else sweep_lambda
    rows = runner(sweep, progress=lambda r: log.info("%s=%g rep %d: %d insight", r.axis, r.value,
                                                     r.repetition, r.n_insight))
    io.write_sweep_csv(out / "sweep.csv", rows)
    _finish(out, cfg)
    bad = any(r.n_diverged > DIVERGENCE_TOLERANCE * r.n_agents for r in rows)
    return EXIT_DIVERGED if bad else EXIT_OK


def cmd_calibrate(cfg, out: Path) -> int:
    shallow = {k: v for k, v in cfg.hyperparameters.items() if k != "motion_means"}
    hyp = calibration_hyperparameters().with_(**shallow)
    if cfg.targets_file:
        targets = read_targets_csv(cfg.targets_file)
        cfg = replace(cfg, targets_file=str(Path(cfg.targets_file).resolve()))
        results = {}
        for agent, target in sorted(targets.items()):
            log.info("calibrating agent %d", agent)
            results[agent] = calibrate(target, hyp, cfg.calibration_seed, cfg.calibration_replicates,
                                       phases=cfg.phases)
    else:
        results = {"all": calibrate(_targets(cfg), hyp, cfg.calibration_seed, cfg.calibration_replicates,
                                    phases=cfg.phases)}
    io.write_config(out / "config.ini", cfg)
    write_calibration_csv(out / "calibration.csv", results)
    _finish(out, cfg)
    return EXIT_OK


def analyze_logs(experimental: io.TrialArrays, control: io.TrialArrays):
    """Classification rows for stored experimental and control trial logs."""
    def fitted(arr):
        series = binned_cohort(arr.correct, arr.coherence, arr.phase)
        fits = [fit_all(s) for s in series]
        raw = np.array([observed_steepness(f[SIGMOID], s) for f, s in zip(fits, series)])
        corrected = np.array([corrected_steepness(f[SIGMOID], s) for f, s in zip(fits, series)])
        return series, fits, raw, corrected

    series, fits, raw, corrected = fitted(experimental)
    _, _, _, ctrl = fitted(control)
    classes = classify_cohort(np.where(experimental.diverged, -np.inf, corrected),
                              control_threshold_values(ctrl, control.diverged),
                              raw=raw, switch_points=[f[SIGMOID].params["t_s"] for f in fits],
                              t_origin=series[0].t_origin)
    onset = experimental.params[:, experimental.onset_trial()]
    return io.classification_rows(experimental.agent_ids, classes, fits, series, experimental.diverged,
                                  onset, experimental.final_params)


def cmd_analyze(cfg, out: Path, inp, control) -> int:
    inp = Path(inp)
    control = Path(control) if control else inp.with_name("control_trials.csv")
    if not control.exists():
        raise ConfigError(f"control trial log {control} not found (pass --control)")
    exp_arr = io.trial_arrays(io.read_trial_log(inp))
    ctrl_arr = io.trial_arrays(io.read_trial_log(control))
    rows = analyze_logs(exp_arr, ctrl_arr)
    io.write_config(out / "config.ini", cfg)
    io.write_classification_csv(out / "classification.csv", rows)
    _finish(out, cfg)
    n_bad = int(exp_arr.diverged.sum())
    return EXIT_DIVERGED if n_bad > DIVERGENCE_TOLERANCE * len(exp_arr.agent_ids) else EXIT_OK


def cmd_report(directory) -> int:
    directory = Path(directory)
    with io.OutputLock(directory):
        io.write_json(directory / "summary.json", build_summary(directory))
    return EXIT_OK


def main(argv=None) -> int:
    argv = sys.argv[1:] if argv is None else list(argv)
    try:
        args = build_parser().parse_args(argv)
    except UsageError as exc:
        print(exc, file=sys.stderr)
        return EXIT_CONFIG
    logging.basicConfig(level=logging.WARNING if args.quiet else logging.INFO,
                        format="%(levelname)s %(message)s", stream=sys.stderr, force=True)
    try:
        if args.command == "report":
            return cmd_report(args.inp)
        cfg = _config_from_args(args)
        if cfg.quiet:
            logging.getLogger().setLevel(logging.WARNING)
        out = Path(cfg.out)
        with io.OutputLock(out):
            if args.command == "cohort":
                return cmd_cohort(cfg, out)
            if args.command == "transplant":
                return cmd_transplant(cfg, out)
            if args.command == "compare":
                return cmd_compare(cfg, out)
            if args.command == "sweep-noise":
                return _cmd_sweep(cfg, out, "sigma_xi")
            if args.command == "sweep-lambda":
                return _cmd_sweep(cfg, out, "lam")
            if args.command == "calibrate":
                return cmd_calibrate(cfg, out)
            return cmd_analyze(cfg, out, args.inp, args.control)
    except (ConfigError, io.SchemaError, io.EmptyLogError, FileNotFoundError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONFIG


if __name__ == "__main__":
    sys.exit(main())
