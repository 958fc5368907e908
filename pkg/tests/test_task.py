from collections import Counter

import numpy as np
import pytest

from gated_insight.model import Hyperparameters
from gated_insight.task import (BLOCK_SIZE, COHERENCE_LEVELS, CalibrationMissingError, ConfigError,
                                Phase, PhaseKind, TrialSkeleton, block_frequencies,
                                build_curriculum, default_curriculum, inputs_from_normals,
                                sample_inputs, skeleton_arrays, write_skeleton_csv)
from gated_insight.simulate import shared_skeletons

MEANS = {5: 0.05, 10: 0.07, 20: 0.25, 30: 0.27, 45: 0.3}


def test_default_curriculum_length():
    trials = build_curriculum(default_curriculum(), np.random.default_rng(0))
    assert len(trials) == 1300
    phases = Counter(t.phase for t in trials)
    assert phases == {PhaseKind.TRAINING: 600, PhaseKind.MOTION: 200, PhaseKind.MOTION_AND_COLOUR: 500}


def test_colour_first_predictive_at_800():
    trials = build_curriculum(default_curriculum(), np.random.default_rng(1))
    first = next(t.index for t in trials if t.colour_predictive)
    assert first == 800


def test_training_uses_three_highest_levels():
    trials = build_curriculum(default_curriculum(), np.random.default_rng(2))
    assert {t.coherence for t in trials if t.phase is PhaseKind.TRAINING} == {20, 30, 45}
    counts = Counter(t.coherence for t in trials[:100])
    assert sorted(counts.values()) == [33, 33, 34]


def test_motion_block_frequencies():
    trials = build_curriculum([Phase(PhaseKind.MOTION, 1)], np.random.default_rng(3))
    counts = Counter(t.coherence for t in trials)
    assert counts == {5: 30, 10: 10, 20: 20, 30: 20, 45: 20}


def test_half_blocks_hold_fifteen_lowest_trials():
    trials = build_curriculum([Phase(PhaseKind.MOTION, 3)], np.random.default_rng(4))
    coh = np.array([t.coherence for t in trials]).reshape(-1, 50)
    assert np.all((coh == 5).sum(axis=1) == 15)


def test_block_frequency_sums():
    for levels in ((5,), (5, 10), (20, 30, 45), COHERENCE_LEVELS):
        assert sum(f.trials_per_100 for f in block_frequencies(levels)) == BLOCK_SIZE


@pytest.mark.parametrize("levels", [(), (7,)])
def test_bad_levels(levels):
    with pytest.raises(ConfigError):
        block_frequencies(levels)


def test_empty_curriculum_rejected():
    with pytest.raises(ConfigError):
        build_curriculum([], np.random.default_rng(0))


def test_predictive_colour_matches_label():
    trials = build_curriculum(default_curriculum(), np.random.default_rng(5))
    assert all(t.colour_sign == t.y for t in trials if t.phase is PhaseKind.MOTION_AND_COLOUR)
    early = [t.colour_sign * t.y for t in trials if t.phase is not PhaseKind.MOTION_AND_COLOUR]
    assert abs(np.mean(early)) < 0.1


def test_control_decorrelates_colour():
    trials = build_curriculum([Phase(PhaseKind.MOTION_AND_COLOUR, 100)], np.random.default_rng(6),
                              control=True)
    signs = np.array([t.colour_sign for t in trials])
    ys = np.array([t.y for t in trials])
    assert len(trials) == 10_000
    assert abs(np.corrcoef(signs, ys)[0, 1]) < 0.05
    assert not any(t.colour_predictive for t in trials)


def test_control_and_experimental_share_labels_and_coherences():
    a = build_curriculum(default_curriculum(), np.random.default_rng(7))
    b = build_curriculum(default_curriculum(), np.random.default_rng(7), control=True)
    assert [t.y for t in a] == [t.y for t in b]
    assert [t.coherence for t in a] == [t.coherence for t in b]


def test_same_master_seed_same_skeletons():
    assert shared_skeletons(11) == shared_skeletons(11)
    assert shared_skeletons(11) != shared_skeletons(12)


def _skeleton(y=1, sign=1, predictive=True, coherence=20):
    return TrialSkeleton(0, PhaseKind.MOTION_AND_COLOUR, coherence, y, sign, predictive)


def test_degenerate_sampling():
    hyp = Hyperparameters(motion_sd=0.0, colour_sd=0.0, motion_means=MEANS)
    x_m, x_c = sample_inputs(_skeleton(y=-1, sign=-1), hyp, np.random.default_rng(0))
    assert x_m == -0.25 and x_c == -0.22
    x_m, x_c = sample_inputs(_skeleton(y=1, sign=1), hyp, np.random.default_rng(0))
    assert x_c == 0.22


def test_sample_mean_within_clt_bound():
    hyp = Hyperparameters(motion_means={**MEANS, 20: 0.1})
    rng = np.random.default_rng(8)
    for y in (1, -1):
        draws = [sample_inputs(_skeleton(y=y), hyp, rng)[0] for _ in range(10_000)]
        assert abs(np.mean(draws) - 0.1 * y) < 3 * 0.1 / 100


def test_missing_calibration():
    with pytest.raises(CalibrationMissingError):
        sample_inputs(_skeleton(coherence=5), Hyperparameters(motion_means={20: 0.1}),
                      np.random.default_rng(0))


def test_vectorised_inputs_match_scalar():
    hyp = Hyperparameters(motion_means=MEANS)
    trials = build_curriculum(default_curriculum(), np.random.default_rng(9))[:300]
    arrays = skeleton_arrays(trials)
    rng = np.random.default_rng(10)
    scalar = [sample_inputs(t, hyp, rng) for t in trials]
    z = np.random.default_rng(10).standard_normal((len(trials), 2))
    x_m, x_c = inputs_from_normals(arrays, hyp, z[:, 0], z[:, 1])
    np.testing.assert_array_equal(x_m, [s[0] for s in scalar])
    np.testing.assert_array_equal(x_c, [s[1] for s in scalar])


def test_skeleton_csv(tmp_path):
    trials = build_curriculum([Phase(PhaseKind.MOTION, 1)], np.random.default_rng(0))
    path = tmp_path / "skel.csv"
    write_skeleton_csv(path, trials)
    lines = path.read_text().splitlines()
    assert lines[0] == "index,phase,coherence,y,colour_sign"
    assert len(lines) == 101
