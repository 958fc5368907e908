import json
import math

import numpy as np
import pytest

from gated_insight import io
from gated_insight.experiments import CohortSpec, SweepRow
from gated_insight.simulate import simulate_shallow
from gated_insight.task import ConfigError, Phase, PhaseKind


@pytest.fixture(scope="module")
def one_agent_records():
    hyp = CohortSpec().resolved_hyperparameters()
    return list(io.trajectory_records(simulate_shallow(0, 1, hyp)))


def _equal(a, b):
    for x, y in zip(a.__dict__.values(), b.__dict__.values()):
        assert x == y or (isinstance(x, float) and math.isnan(x) and math.isnan(y))


def test_trial_log_round_trip(tmp_path, one_agent_records):
    path = tmp_path / "trials.csv"
    assert io.write_trial_log(path, one_agent_records) == 1300
    back = io.read_trial_log(path)
    assert len(back) == 1300
    assert back == one_agent_records


def test_trial_log_encoding(tmp_path, one_agent_records):
    path = tmp_path / "trials.csv"
    io.write_trial_log(path, one_agent_records[:3])
    raw = path.read_bytes()
    assert b"\r\n" not in raw
    header = raw.decode("utf-8").split("\n")[0].split(",")
    assert tuple(header[:15]) == io.TRIAL_COLUMNS


def test_missing_column_is_named(tmp_path, one_agent_records):
    path = tmp_path / "trials.csv"
    io.write_trial_log(path, one_agent_records[:5])
    lines = path.read_text().splitlines()
    drop = lines[0].split(",").index("g_c")
    path.write_text("\n".join(",".join(c for i, c in enumerate(l.split(",")) if i != drop) for l in lines))
    with pytest.raises(io.SchemaError, match="g_c"):
        io.read_trial_log(path)


def test_empty_file(tmp_path):
    path = tmp_path / "empty.csv"
    path.write_text("")
    with pytest.raises(io.EmptyLogError):
        io.read_trial_log(path)
    path.write_text(",".join(io.TRIAL_COLUMNS) + "\n")
    with pytest.raises(io.EmptyLogError):
        io.read_trial_log(path)


def test_optional_columns_may_be_absent(tmp_path, one_agent_records):
    path = tmp_path / "trials.csv"
    io.write_trial_log(path, one_agent_records[:4])
    lines = path.read_text().splitlines()
    path.write_text("\n".join(",".join(l.split(",")[:15]) for l in lines) + "\n")
    back = io.read_trial_log(path)
    assert math.isnan(back[0].x_m) and back[0].g_c == one_agent_records[0].g_c


@pytest.mark.parametrize("value", [0.1, 1 / 3, -2.5e-300, 1e300, 0.30000000000000004, 5e-324])
def test_seventeen_digits_round_trip(value):
    assert float(io.fmt(value)) == value


def test_fmt_types():
    assert (io.fmt(True), io.fmt(np.int64(3)), io.fmt(float("nan")), io.fmt(None), io.fmt("MOTION")) == \
        ("1", "3", "nan", "", "MOTION")


def test_trial_arrays(one_agent_records):
    arr = io.trial_arrays(one_agent_records)
    assert arr.params.shape == (1, 1300, 4)
    assert arr.onset_trial() == 800


def test_trial_arrays_reject_ragged(one_agent_records):
    other = [r.__class__(**{**r.__dict__, "agent_id": 1}) for r in one_agent_records[:10]]
    with pytest.raises(io.SchemaError):
        io.trial_arrays(one_agent_records + other)


def test_classification_round_trip(tmp_path, small_cohort):
    from gated_insight.cli import result_rows

    rows = result_rows(small_cohort)
    path = tmp_path / "classification.csv"
    io.write_classification_csv(path, rows)
    back = io.read_classification_csv(path)
    assert len(back) == 12
    for a, b in zip(rows, back):
        assert a.bics == b.bics and a.sigmoid == b.sigmoid and a.bins == b.bins
        assert a.classification.corrected_steepness == b.classification.corrected_steepness
        assert a.classification.is_insight == b.classification.is_insight
        assert a.classification.delay_bins == b.classification.delay_bins


def test_summary_matches_cohort(tmp_path, small_cohort):
    from gated_insight.cli import result_rows

    summary = io.summarise_classification(result_rows(small_cohort))
    assert summary["n_insight"] == small_cohort.insight_count
    assert summary["n_agents"] == 12
    if small_cohort.insight_count:
        assert summary["mean_delay_bins"] == pytest.approx(small_cohort.mean_delay_bins)
    path = tmp_path / "s.json"
    io.write_json(path, summary)
    assert json.loads(path.read_text())["n_agents"] == 12


def test_json_has_no_nan(tmp_path):
    path = tmp_path / "s.json"
    io.write_json(path, {"a": float("nan"), "b": np.float64(1.5), "c": [np.inf]})
    assert json.loads(path.read_text()) == {"a": None, "b": 1.5, "c": [None]}


def test_sweep_round_trip(tmp_path):
    rows = [SweepRow("lam", v, "all", r, r, 99, 40 - r, (40 - r) / 99, 2.5, 0)
            for v in (0.01, 0.03, 0.05) for r in range(2)]
    path = tmp_path / "sweep.csv"
    io.write_sweep_csv(path, rows)
    assert io.read_sweep_csv(path) == rows
    summary = io.summarise_sweep_rows(rows)
    assert len(summary["points"]) == 3


def test_calibration_table(tmp_path):
    path = tmp_path / "cal.csv"
    path.write_text("agent_id,M5,M10,M20,M30,M45\n0,0.1,0.2,0.3,0.4,0.5\n1,0.2,0.2,0.3,0.4,0.5\n")
    shared, per_agent = io.read_calibration_csv(path)
    assert shared is None and per_agent[1][5] == 0.2
    path.write_text("agent_id,M5,M10,M20,M30,M45\nall,0.1,0.2,0.3,0.4,0.5\n")
    shared, _ = io.read_calibration_csv(path)
    assert shared[45] == 0.5


class TestConfig:
    def test_round_trip(self, tmp_path):
        cfg = io.RunConfig(kind="sweep-noise", n_agents=7, master_seed=2**63 + 5,
                           hyperparameters={"lam": 0.05, "noise_mask": frozenset({"w_c", "g_c"}),
                                            "motion_means": {5: 0.1, 10: 0.2, 20: 0.3, 30: 0.4, 45: 1 / 3}},
                           sweep_values=(0.02, 0.1), sweep_mask="colour",
                           phases=(Phase(PhaseKind.MOTION, 2), Phase(PhaseKind.MOTION_AND_COLOUR, 3)),
                           w_c_target=1 / 7)
        path = tmp_path / "c.ini"
        io.write_config(path, cfg)
        assert io.load_config(path) == cfg
        assert io.dump_config(io.load_config(path)) == path.read_text()

    @pytest.mark.parametrize("text,match", [
        ("[bogus]\nx = 1\n", "bogus"),
        ("[cohort]\ncolour = 1\n", "colour"),
        ("[hyperparameters]\nbeta = 1\n", "beta"),
        ("[cohort]\nagents = many\n", "many"),
        ("[cohort]\nagents = 0\n", "agents"),
        ("[cohort]\nseed = -1\n", "seed"),
        ("[curriculum]\nphases = MOTION\n", "MOTION"),
        ("[output]\nretention = some\n", "retention"),
        ("not an ini file", "cannot read"),
    ])
    def test_malformed(self, tmp_path, text, match):
        path = tmp_path / "bad.cfg"
        path.write_text(text)
        with pytest.raises(ConfigError, match=match):
            io.load_config(path)

    def test_phase_text(self):
        phases = io.parse_phases("TRAINING:6:20/30/45, MOTION:2, MOTION_AND_COLOUR:5")
        assert [p.block_count for p in phases] == [6, 2, 5]
        assert io.parse_phases(io.format_phases(phases)) == phases

    def test_shipped_configs_load(self):
        from pathlib import Path

        root = Path(__file__).resolve().parents[1] / "configs"
        kinds = {p.name: io.load_config(p).kind for p in root.glob("*.cfg")}
        assert kinds["default.cfg"] == "cohort" and kinds["fig7.cfg"] == "sweep-lambda"


def test_output_lock(tmp_path):
    with io.OutputLock(tmp_path):
        with pytest.raises(ConfigError, match="in use"):
            with io.OutputLock(tmp_path):
                pass
    assert not (tmp_path / ".lock").exists()
