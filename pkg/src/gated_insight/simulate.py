"""Batched training of many agents through a curriculum.

Agents are stacked along a leading axis and trained in lock-step, but each
one draws its inputs and noise from a private generator seeded by
``(master_seed, agent_index)``.  Per trial the shallow model consumes seven
standard normals in the order used by :func:`task.sample_inputs` followed
by :func:`model.sgd_step` (motion input, colour input, eta, four gradient
noises), so a batched run reproduces the scalar path exactly.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, Mapping, Sequence

import numpy as np

from . import model
from .model import DIVERGENCE_LIMIT, Hyperparameters, Regulariser
from .task import (COHERENCE_LEVELS, Phase, build_curriculum, default_curriculum,
                   inputs_from_normals, skeleton_arrays)

DEFAULT_SEQUENCES = 10
_SEQUENCE_DOMAIN = 0
_AGENT_DOMAIN = 1


def _derive_seed(master_seed, domain, index) -> int:
    ss = np.random.SeedSequence(int(master_seed), spawn_key=(domain, int(index)))
    lo, hi = ss.generate_state(2, dtype=np.uint32)
    return int(lo) | (int(hi) << 32)


def agent_seed(master_seed, agent_index) -> int:
    """64-bit seed of one agent's private stream."""
    return _derive_seed(master_seed, _AGENT_DOMAIN, agent_index)


def sequence_seed(master_seed, sequence_index) -> int:
    return _derive_seed(master_seed, _SEQUENCE_DOMAIN, sequence_index)


def shared_skeletons(master_seed, phases=None, control=False, n_sequences=DEFAULT_SEQUENCES):
    """The ``n_sequences`` trial-skeleton sequences shared by a cohort."""
    phases = default_curriculum() if phases is None else phases
    return [build_curriculum(phases, np.random.default_rng(sequence_seed(master_seed, k)), control)
            for k in range(n_sequences)]


@dataclass
class Trajectory:
    """Everything logged while training a batch of agents.

    ``params[:, t]`` holds the parameters *before* trial ``t``;
    ``params[:, -1]`` is the final state.
    """

    agent_ids: np.ndarray
    seeds: np.ndarray
    coherence: np.ndarray        # (A, T)
    phase: np.ndarray            # (A, T) phase names
    y: np.ndarray                # (A, T)
    x_m: np.ndarray
    x_c: np.ndarray
    eta: np.ndarray
    decision: np.ndarray         # (A, T) +-1
    correct: np.ndarray          # (A, T) bool
    params: np.ndarray | None = None   # (A, T+1, 4)
    delta: np.ndarray | None = None    # (A, T, 4)
    noise: np.ndarray | None = None    # (A, T, 4)
    deterministic: np.ndarray | None = None  # (A, T, 4), delta - noise
    diverged_at: np.ndarray = field(default=None)  # (A,) trial index or -1
    extras: dict = field(default_factory=dict)

    @property
    def n_agents(self):
        return len(self.agent_ids)

    @property
    def n_trials(self):
        return self.y.shape[1]

    @property
    def diverged(self):
        return self.diverged_at >= 0

    def parameter_table(self) -> np.ndarray:
        """``(A, T+1, 4)`` parameters in ``PARAM_NAMES`` order before each trial.

        Hidden-layer networks report the mean absolute first-layer weight
        and gate of each input channel instead.
        """
        if self.params is not None and self.params.shape[1] == self.n_trials + 1:
            return self.params
        keys = ("motion_weight", "colour_weight", "motion_gate", "colour_gate")
        if all(k in self.extras for k in keys):
            return np.stack([self.extras[k] for k in keys], axis=2)
        raise ValueError("trajectory was run without parameter recording")

    def onset_trial(self) -> int:
        """First trial of the motion-and-colour phase."""
        hits = np.flatnonzero(self.phase[0] == "MOTION_AND_COLOUR")
        if hits.size == 0:
            raise ValueError("curriculum has no MOTION_AND_COLOUR phase")
        return int(hits[0])


Intervention = Callable[[np.ndarray], np.ndarray]


def run_shallow_batch(init, x_m, x_c, y, z_eta, z_xi, hyp: Hyperparameters,
                      interventions: Mapping[int, Intervention] | None = None,
                      record=True):
    """Train ``A`` shallow networks on pre-sampled inputs.

    ``init`` is ``(A, 4)``; inputs and noise are ``(A, T)`` (``z_xi`` is
    ``(A, T, 4)``).  ``interventions[t]`` may rewrite the parameter array
    right before trial ``t``.  Agents whose parameters leave the divergence
    box are frozen from that trial on and reported in ``diverged_at``.
    """
    interventions = interventions or {}
    n_agents, n_trials = y.shape
    p = np.array(init, dtype=float)
    mask = hyp.mask_vector()
    alpha, lam, reg = hyp.alpha, hyp.lam, hyp.regulariser
    prox = model.uses_proximal_l1(hyp)
    eta_all = hyp.sigma_eta * z_eta
    xi_all = hyp.sigma_xi * z_xi * mask
    decision = np.empty((n_agents, n_trials), dtype=np.int8)
    params = np.empty((n_agents, n_trials + 1, 4)) if record else None
    delta = np.empty((n_agents, n_trials, 4)) if record else None
    deterministic = np.empty((n_agents, n_trials, 4)) if record else None
    diverged_at = np.full(n_agents, -1)
    alive = np.ones(n_agents, dtype=bool)
    gated = reg is not Regulariser.NO_GATE
    for t in range(n_trials):
        if t in interventions:
            p = np.array(interventions[t](p.copy()), dtype=float)
        if record:
            params[:, t] = p
        w_m, w_c, g_m, g_c = p.T
        xm, xc, eta, yt = x_m[:, t], x_c[:, t], eta_all[:, t], y[:, t]
        if gated:
            act = g_m * w_m * xm + g_c * w_c * xc + eta
        else:
            act = w_m * xm + w_c * xc + eta
        decision[:, t] = np.where(act >= 0, 1, -1)
        d = np.stack(model.deterministic_deltas(w_m, w_c, g_m, g_c, xm, xc, eta, yt,
                                                alpha, lam, reg, prox), axis=1)
        new, d, step = model.apply_deltas(p, d, xi_all[:, t], alpha * lam, prox)
        if record:
            delta[:, t] = step
            deterministic[:, t] = d
        ok = np.all(np.abs(new) <= DIVERGENCE_LIMIT, axis=1)
        newly_bad = alive & ~ok
        if newly_bad.any():
            diverged_at[newly_bad] = t
            alive &= ok
        p = np.where(alive[:, None], new, p)
    if record:
        params[:, n_trials] = p
        noise = np.broadcast_to(xi_all, delta.shape).copy()
    else:
        params = p[:, None, :]
        noise = None
    return {"decision": decision, "params": params, "delta": delta, "noise": noise,
            "deterministic": deterministic, "eta": eta_all, "diverged_at": diverged_at}


def _as_mean_table(motion_means, n_agents):
    if isinstance(motion_means, Mapping):
        row = [motion_means[c] for c in COHERENCE_LEVELS]
        return np.tile(np.asarray(row, dtype=float), (n_agents, 1))
    table = np.asarray(motion_means, dtype=float)
    if table.ndim == 1:
        table = np.tile(table, (n_agents, 1))
    return table


def _cohort_arrays(master_seed, agent_ids, phases, control, n_sequences):
    skeletons = shared_skeletons(master_seed, phases, control, n_sequences)
    per_seq = [skeleton_arrays(s) for s in skeletons]
    picks = [per_seq[a % n_sequences] for a in agent_ids]
    return {key: np.stack([p[key] for p in picks]) for key in per_seq[0]}


def simulate_shallow(master_seed, n_agents, hyp: Hyperparameters, phases: Sequence[Phase] | None = None,
                     control=False, motion_means=None, n_sequences=DEFAULT_SEQUENCES,
                     interventions=None, agent_ids=None, record=True) -> Trajectory:
    """Train a cohort of shallow networks through the curriculum.

    ``agent_ids`` defaults to ``range(n_agents)``; passing a permutation or
    subset trains exactly the same agents in another order.
    """
    agent_ids = np.arange(n_agents) if agent_ids is None else np.asarray(agent_ids, dtype=int)
    arrays = _cohort_arrays(master_seed, agent_ids, phases, control, n_sequences)
    n_trials = arrays["y"].shape[1]
    seeds = np.array([agent_seed(master_seed, a) for a in agent_ids], dtype=np.uint64)
    normals = np.stack([np.random.default_rng(int(s)).standard_normal((n_trials, 7)) for s in seeds])
    means = _as_mean_table(hyp.motion_means if motion_means is None else motion_means, len(agent_ids))
    x_m, x_c = inputs_from_normals(arrays, hyp, normals[..., 0], normals[..., 1],
                                   motion_means=means)
    x_m = np.asarray(x_m)
    init = np.tile(model.NetworkState.initial(0, hyp.regulariser).as_array(), (len(agent_ids), 1))
    out = run_shallow_batch(init, x_m, x_c, arrays["y"], normals[..., 2], normals[..., 3:], hyp,
                            interventions=interventions, record=record)
    return Trajectory(
        agent_ids=agent_ids, seeds=seeds, coherence=arrays["coherence"], phase=arrays["phase"],
        y=arrays["y"], x_m=x_m, x_c=x_c, eta=out["eta"], decision=out["decision"],
        correct=out["decision"] == arrays["y"], params=out["params"], delta=out["delta"],
        noise=out["noise"], deterministic=out["deterministic"], diverged_at=out["diverged_at"],
    )


def simulate_deep(master_seed, n_agents, hyp: Hyperparameters, phases=None, control=False,
                  motion_means=None, n_sequences=DEFAULT_SEQUENCES, agent_ids=None,
                  hidden=model.HIDDEN_UNITS, chunk=100) -> Trajectory:
    """Train a cohort of hidden-layer networks.

    Each agent's generator first initialises its weights, then supplies per
    trial two input normals followed by ``6 * hidden`` gradient-noise
    normals (first-layer weights, gates, second-layer weights).
    """
    agent_ids = np.arange(n_agents) if agent_ids is None else np.asarray(agent_ids, dtype=int)
    arrays = _cohort_arrays(master_seed, agent_ids, phases, control, n_sequences)
    n_agents = len(agent_ids)
    n_trials = arrays["y"].shape[1]
    seeds = np.array([agent_seed(master_seed, a) for a in agent_ids], dtype=np.uint64)
    rngs = [np.random.default_rng(int(s)) for s in seeds]
    states = [model.DeepNetworkState.initial(r, hidden=hidden) for r in rngs]
    w1 = np.stack([s.w1 for s in states])
    gates = np.stack([s.gates for s in states])
    w2 = np.stack([s.w2 for s in states])
    means = _as_mean_table(hyp.motion_means if motion_means is None else motion_means, n_agents)
    noisy_w, noisy_g = model.deep_noise_flags(hyp)
    prox = model.uses_proximal_l1(hyp)
    per_trial = 2 + 6 * hidden
    x_m = np.empty((n_agents, n_trials))
    x_c = np.empty((n_agents, n_trials))
    decision = np.empty((n_agents, n_trials), dtype=np.int8)
    summary = {k: np.empty((n_agents, n_trials + 1))
               for k in ("motion_weight", "colour_weight", "motion_gate", "colour_gate")}

    def record(t):
        # mean absolute first-layer weight / gate per input channel
        for c, channel in enumerate(("motion", "colour")):
            summary[f"{channel}_weight"][:, t] = np.abs(w1[:, c]).mean(axis=1)
            summary[f"{channel}_gate"][:, t] = np.abs(gates[:, c]).mean(axis=1)

    diverged_at = np.full(n_agents, -1)
    alive = np.ones(n_agents, dtype=bool)
    for start in range(0, n_trials, chunk):
        stop = min(start + chunk, n_trials)
        z = np.stack([r.standard_normal((stop - start, per_trial)) for r in rngs])
        sub = {k: v[:, start:stop] for k, v in arrays.items()}
        xm, xc = inputs_from_normals(sub, hyp, z[..., 0], z[..., 1], motion_means=means)
        x_m[:, start:stop], x_c[:, start:stop] = xm, xc
        for j, t in enumerate(range(start, stop)):
            record(t)
            x = np.stack([xm[:, j], xc[:, j]], axis=1)
            pre = np.einsum("aih,ai->ah", gates * w1, x)
            logits = np.einsum("ahk,ah->ak", w2, np.maximum(pre, 0.0))
            decision[:, t] = np.where(logits[:, 0] >= logits[:, 1], 1, -1)
            target = np.where(sub["y"][:, j] == 1, 0, 1)
            g_w1, g_g, g_w2 = model.deep_gradients(w1, gates, w2, x, target, 0.0 if prox else hyp.lam)
            zz = z[:, j, 2:]
            xi_w1 = hyp.sigma_xi * noisy_w * zz[:, : 2 * hidden].reshape(n_agents, 2, hidden)
            xi_g = hyp.sigma_xi * noisy_g * zz[:, 2 * hidden: 4 * hidden].reshape(n_agents, 2, hidden)
            xi_w2 = hyp.sigma_xi * noisy_w * zz[:, 4 * hidden:].reshape(n_agents, hidden, 2)
            nw1 = w1 - hyp.alpha * g_w1 + xi_w1
            ng = gates - hyp.alpha * g_g + xi_g
            if prox:
                ng = model.soft_threshold(ng, hyp.alpha * hyp.lam)
            nw2 = w2 - hyp.alpha * g_w2 + xi_w2
            ok = ((np.abs(nw1) <= DIVERGENCE_LIMIT).all(axis=(1, 2))
                  & (np.abs(ng) <= DIVERGENCE_LIMIT).all(axis=(1, 2))
                  & (np.abs(nw2) <= DIVERGENCE_LIMIT).all(axis=(1, 2)))
            bad = alive & ~ok
            if bad.any():
                diverged_at[bad] = t
                alive &= ok
            keep = alive[:, None, None]
            w1 = np.where(keep, nw1, w1)
            gates = np.where(keep, ng, gates)
            w2 = np.where(keep, nw2, w2)
    record(n_trials)
    return Trajectory(
        agent_ids=agent_ids, seeds=seeds, coherence=arrays["coherence"], phase=arrays["phase"],
        y=arrays["y"], x_m=x_m, x_c=x_c, eta=np.zeros_like(x_m), decision=decision,
        correct=decision == arrays["y"], diverged_at=diverged_at,
        extras={**summary, "final": (w1, gates, w2)},
    )
