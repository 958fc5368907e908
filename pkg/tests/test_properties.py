"""Randomised invariants."""
import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from gated_insight import model
from gated_insight.analysis import classify, fits
from gated_insight.model import Hyperparameters, NetworkState, Regulariser
from gated_insight.task import Phase, PhaseKind, block_frequencies, build_curriculum

import oracles

# exactly zero or at least 1e-6 in size: products of three coordinates then
# stay in the normal float range, where a relative tolerance is meaningful
unit = st.floats(-3.0, 3.0).filter(lambda v: v == 0 or abs(v) >= 1e-6)
gate = st.tuples(st.sampled_from([-1.0, 1.0]), st.floats(1e-3, 3.0)).map(lambda p: p[0] * p[1])


@settings(max_examples=100, derandomize=True)
@given(reg=st.sampled_from(list(Regulariser)), w=st.tuples(unit, unit), g_any=st.tuples(unit, unit),
       g_l1=st.tuples(gate, gate), x=st.tuples(unit, unit), eta=st.floats(-0.5, 0.5),
       y=st.sampled_from([-1, 1]), alpha=st.floats(0.01, 1.0), lam=st.floats(0.0, 0.2))
def test_shallow_deltas_match_finite_differences(reg, w, g_any, g_l1, x, eta, y, alpha, lam):
    g = g_l1 if reg is Regulariser.L1 else g_any
    theta = (*w, *g)
    hand = model.deterministic_deltas(*theta, *x, eta, y, alpha, lam, reg)
    exact = oracles.shallow_deltas(theta, *x, eta, y, alpha, lam, reg)
    for name, a, b in zip(model.PARAM_NAMES, hand, exact):
        assert oracles.close(float(a), b), (name, float(a), float(b))
    # the oracle and the package agree on the loss itself
    hyp = Hyperparameters(alpha=alpha, lam=lam, regulariser=reg)
    ours = model.loss(NetworkState(*theta), *x, eta, y, hyp)
    ref = oracles.exact_shallow_loss(theta, *x, eta, y, lam, reg)
    assert ours == pytest.approx(float(ref), rel=1e-12, abs=1e-300)


# ---------------------------------------------------------------------------
# gradients, hidden-layer variant

@settings(max_examples=100, derandomize=True)
@given(seed=st.integers(0, 2**32 - 1))
def test_deep_gradients_match_finite_differences(seed):
    point = oracles.deep_point(seed, hidden=12)
    assert oracles.deep_mismatches(point) == []
    w1, gates, w2, x, target, lam = point
    ref = oracles.deep_loss(*map(oracles.to_mp, (w1, gates, w2)), [oracles.mp.mpf(float(v)) for v in x],
                            target, oracles.mp.mpf(lam))
    ours = model.deep_loss(model.DeepNetworkState(w1, gates, w2), x[0], x[1], 1 if target == 0 else -1, lam)
    assert ours == pytest.approx(float(ref), rel=1e-12)


def test_deep_gradients_at_full_width():
    point = oracles.deep_point(11, model.HIDDEN_UNITS)
    entries = [[(0, 0), (1, 7), (0, 40)], [(0, 3), (1, 29), (1, 47)], [(0, 1), (30, 0), (47, 1)]]
    assert oracles.deep_mismatches(point, entries) == []


# ---------------------------------------------------------------------------
# noise and penalties

@given(mask=st.sets(st.sampled_from(model.PARAM_NAMES)), seed=st.integers(0, 2**32 - 1),
       reg=st.sampled_from([Regulariser.L1, Regulariser.L2, Regulariser.NONE]))
def test_excluded_parameters_get_no_noise(mask, seed, reg):
    hyp = Hyperparameters(sigma_xi=0.3, noise_mask=mask, regulariser=reg)
    _, snap = model.sgd_step(NetworkState(0.5, -0.2, 0.9, 0.4), 0.3, -0.1, 1, hyp,
                             np.random.default_rng(seed))
    for name, xi in zip(model.PARAM_NAMES, snap.noise):
        if name in mask:
            assert xi != 0
        else:
            assert xi == 0


@given(seed=st.integers(0, 2**32 - 1), mask=st.sets(st.sampled_from(model.PARAM_NAMES)))
def test_deep_noise_respects_mask(seed, mask):
    state = model.DeepNetworkState.initial(np.random.default_rng(seed), hidden=6)
    quiet = Hyperparameters(sigma_xi=0.0, noise_mask=mask)
    noisy = Hyperparameters(sigma_xi=0.2, noise_mask=mask)
    a = model.deep_sgd_step(state, 0.2, 0.1, 1, quiet, np.random.default_rng(seed))
    b = model.deep_sgd_step(state, 0.2, 0.1, 1, noisy, np.random.default_rng(seed))
    weights, gates = model.deep_noise_flags(noisy)
    assert np.array_equal(a.w1, b.w1) != weights
    assert np.array_equal(a.w2, b.w2) != weights
    assert np.array_equal(a.gates, b.gates) != gates


@given(g=st.floats(-0.999, 0.999).filter(lambda v: v != 0), alpha=st.floats(0.01, 1.0),
       lam=st.floats(1e-4, 0.5))
def test_l1_penalty_step_exceeds_l2_inside_unit_interval(g, alpha, lam):
    # zero inputs isolate the penalty term
    l1 = model.deterministic_deltas(1.0, 1.0, g, g, 0.0, 0.0, 0.0, 1, alpha, lam, Regulariser.L1)
    l2 = model.deterministic_deltas(1.0, 1.0, g, g, 0.0, 0.0, 0.0, 1, alpha, lam, Regulariser.L2)
    assert abs(l1[2]) == pytest.approx(alpha * lam)
    assert abs(l2[2]) == pytest.approx(alpha * lam * abs(g))
    assert abs(l1[2]) > abs(l2[2]) and abs(l1[3]) > abs(l2[3])


@given(w_m=st.floats(0.05, 3), g_m=st.floats(0.05, 3), sign=st.sampled_from([-1.0, 1.0]),
       w_c=unit, g_c=unit, m1=st.floats(0, 2), m2=st.floats(0, 2), sigma_eta=st.floats(1e-3, 1))
def test_analytic_accuracy_increases_with_motion_mean(w_m, g_m, sign, w_c, g_c, m1, m2, sigma_eta):
    state = NetworkState(sign * w_m, w_c, sign * g_m, g_c)
    lo, hi = sorted((m1, m2))
    a_lo = model.analytic_accuracy(state, lo, 0.1, 0.22, 0.01, sigma_eta)
    a_hi = model.analytic_accuracy(state, hi, 0.1, 0.22, 0.01, sigma_eta)
    assert a_lo <= a_hi
    # strictly so wherever erf has not saturated at either end
    if hi - lo > 1e-3 and 1e-9 < a_lo and a_hi < 1 - 1e-9:
        assert a_lo < a_hi


# ---------------------------------------------------------------------------
# analysis

grid = st.integers(-400, 400).map(lambda v: v / 8)


@given(exp=st.lists(grid, min_size=1, max_size=30), ctl=st.lists(grid, min_size=1, max_size=30),
       transform=st.sampled_from([np.exp, lambda v: v**3, lambda v: 2.5 * v - 7, np.arctan,
                                  lambda v: np.sign(v) * np.log1p(np.abs(v))]))
def test_classification_is_rank_based(exp, ctl, transform):
    before = classify.classify_cohort(exp, ctl)
    after = classify.classify_cohort(transform(np.array(exp)), transform(np.array(ctl)))
    assert [c.is_insight for c in before] == [c.is_insight for c in after]


@given(sse=st.lists(st.floats(1e-6, 1e3), min_size=2, max_size=6), n=st.integers(8, 200),
       scale=st.floats(1e-3, 1e3), data=st.data())
def test_bic_ranking_survives_common_sse_scaling(sse, n, scale, data):
    ks = data.draw(st.lists(st.integers(1, 4), min_size=len(sse), max_size=len(sse)))
    before = np.array([fits.bic(n, k, s) for k, s in zip(ks, sse)])
    after = np.array([fits.bic(n, k, s * scale) for k, s in zip(ks, sse)])
    np.testing.assert_allclose(after - after[0], before - before[0], atol=1e-8)
    clear = np.abs(before[:, None] - before[None, :]) > 1e-6
    assert np.array_equal((before[:, None] < before[None, :])[clear], (after[:, None] < after[None, :])[clear])


@given(slope=st.floats(-0.1, 0.1), y0=st.floats(0, 1), n=st.integers(4, 30))
def test_linear_fit_recovers_slope(slope, y0, n):
    t = np.arange(n)
    fit = fits.fit_linear((slope * t + y0, 0.5))
    assert fit.params["m"] == pytest.approx(slope, abs=1e-12)
    assert fit.params["y_0"] == pytest.approx(y0, abs=1e-12)


@given(n=st.integers(4, 30), data=st.data(), low=st.floats(0, 0.9), jump=st.floats(0.01, 0.5),
       sign=st.sampled_from([-1, 1]))
def test_step_fit_recovers_switch(n, data, low, jump, sign):
    ts = data.draw(st.integers(1, n - 1))
    y = np.where(np.arange(n) < ts, low, low + sign * jump)
    fit = fits.fit_step((y, 0.5))
    assert fit.params["t_s"] == ts
    assert fit.params["s"] == pytest.approx(sign * jump, abs=1e-12)


# ---------------------------------------------------------------------------
# task

@given(seed=st.integers(0, 2**32 - 1),
       levels=st.sampled_from([(5, 10, 20, 30, 45), (20, 30, 45), (10, 45), (5,), (5, 10, 20)]),
       blocks=st.integers(1, 4))
def test_blocks_keep_their_coherence_counts(seed, levels, blocks):
    trials = build_curriculum([Phase(PhaseKind.MOTION, blocks, levels)], np.random.default_rng(seed))
    expected = {f.label: f.trials_per_100 for f in block_frequencies(levels)}
    for b in range(blocks):
        coh = [s.coherence for s in trials[100 * b: 100 * (b + 1)]]
        assert {c: coh.count(c) for c in set(coh)} == {k: v for k, v in expected.items() if v}


@given(seed=st.integers(0, 2**32 - 1))
def test_control_curriculum_shares_labels(seed):
    phases = [Phase(PhaseKind.MOTION, 1), Phase(PhaseKind.MOTION_AND_COLOUR, 1)]
    exp = build_curriculum(phases, np.random.default_rng(seed))
    ctl = build_curriculum(phases, np.random.default_rng(seed), control=True)
    assert [(s.coherence, s.y) for s in exp] == [(s.coherence, s.y) for s in ctl]
    assert all(s.colour_sign == s.y for s in exp[100:])
    assert not any(s.colour_predictive for s in ctl)
    assert math.isclose(np.mean([s.colour_sign == s.y for s in ctl[100:]]), 0.5, abs_tol=0.2)
