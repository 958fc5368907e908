"""Gated linear network, its losses and the noisy online SGD updates.

The shallow network has one weight and one multiplicative gate per input
channel (motion, colour).  Its output is::

    activation = g_m * w_m * x_m + g_c * w_c * x_c + eta

and the decision is the sign of the activation.  Gates are the only
regularised parameters.  The hidden-layer variant lives at the bottom of
this module.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field, replace
from enum import Enum
from typing import Mapping

import numpy as np
from scipy.special import erf

PARAM_NAMES = ("w_m", "w_c", "g_m", "g_c")
INITIAL_VALUE = 0.01
DIVERGENCE_LIMIT = 1e6
HIDDEN_UNITS = 48


class Regulariser(str, Enum):
    L1 = "L1"
    L2 = "L2"
    NONE = "NONE"
    NO_GATE = "NO_GATE"


class NonFiniteInputError(ValueError):
    """Raised when a numeric argument is NaN or infinite."""

    def __init__(self, name, value):
        super().__init__(f"non-finite value for {name!r}: {value!r}")
        self.field = name


class DivergenceError(RuntimeError):
    """Raised when a parameter leaves the [-1e6, 1e6] box."""

    def __init__(self, trial, name=None, value=None):
        where = f"trial {trial}" if trial is not None else "unknown trial"
        msg = f"parameter divergence at {where}"
        if name is not None:
            msg += f" ({name} = {value!r})"
        super().__init__(msg)
        self.trial = trial
        self.parameter = name


class DegenerateDistributionError(ValueError):
    """Raised when the decision variable has zero variance."""


def _check_finite(**values):
    for name, value in values.items():
        if not math.isfinite(value):
            raise NonFiniteInputError(name, value)


@dataclass(frozen=True)
class Hyperparameters:
    """Learning and input-distribution settings shared by a cohort.

    ``motion_means`` maps a coherence level (percent) to the mean shift of
    the motion input.  It is filled in by calibration and may be empty
    for code paths that never sample inputs.
    """

    alpha: float = 0.6
    lam: float = 0.07
    sigma_eta: float = 0.01
    sigma_xi: float = 0.05
    noise_mask: frozenset = frozenset(PARAM_NAMES)
    regulariser: Regulariser = Regulariser.L1
    colour_mean: float = 0.22
    colour_sd: float = 0.01
    motion_means: Mapping[int, float] = field(default_factory=dict)
    motion_sd: float = 0.1
    l1_proximal: bool = False

    def __post_init__(self):
        object.__setattr__(self, "regulariser", Regulariser(self.regulariser))
        object.__setattr__(self, "noise_mask", frozenset(self.noise_mask))
        object.__setattr__(
            self, "motion_means", {int(k): float(v) for k, v in self.motion_means.items()}
        )
        unknown = self.noise_mask - set(PARAM_NAMES)
        if unknown:
            raise ValueError(f"unknown parameters in noise_mask: {sorted(unknown)}")
        if not self.alpha > 0:
            raise ValueError("alpha must be > 0")
        for name in ("lam", "sigma_eta", "sigma_xi", "colour_sd", "motion_sd"):
            if not getattr(self, name) >= 0:
                raise ValueError(f"{name} must be >= 0")

    def with_(self, **changes) -> "Hyperparameters":
        return replace(self, **changes)

    def mask_vector(self) -> np.ndarray:
        """0/1 vector over ``PARAM_NAMES`` selecting parameters that get noise."""
        mask = np.array([name in self.noise_mask for name in PARAM_NAMES], dtype=float)
        if self.regulariser is Regulariser.NO_GATE:
            mask[2:] = 0.0
        return mask


@dataclass(frozen=True)
class NetworkState:
    w_m: float = INITIAL_VALUE
    w_c: float = INITIAL_VALUE
    g_m: float = INITIAL_VALUE
    g_c: float = INITIAL_VALUE
    rng_seed: int = 0

    @classmethod
    def initial(cls, rng_seed=0, regulariser=Regulariser.L1) -> "NetworkState":
        # the gate-free model is the gated one with gates frozen at 1
        if Regulariser(regulariser) is Regulariser.NO_GATE:
            return cls(INITIAL_VALUE, INITIAL_VALUE, 1.0, 1.0, rng_seed)
        return cls(rng_seed=rng_seed)

    @classmethod
    def from_array(cls, values, rng_seed=0) -> "NetworkState":
        w_m, w_c, g_m, g_c = (float(v) for v in values)
        return cls(w_m, w_c, g_m, g_c, rng_seed)

    def as_array(self) -> np.ndarray:
        return np.array([self.w_m, self.w_c, self.g_m, self.g_c])

    def check_finite(self):
        _check_finite(w_m=self.w_m, w_c=self.w_c, g_m=self.g_m, g_c=self.g_c)


@dataclass(frozen=True)
class GradientSnapshot:
    """Per-parameter deltas of one trial, ordered as ``PARAM_NAMES``."""

    deterministic: np.ndarray
    noise: np.ndarray
    delta: np.ndarray
    eta: float

    def __getattr__(self, name):
        # d_w_m, d_g_c, ... and xi_w_m, xi_g_c, ...
        for prefix, arr in (("d_", "delta"), ("xi_", "noise")):
            if name.startswith(prefix) and name[len(prefix):] in PARAM_NAMES:
                return float(object.__getattribute__(self, arr)[PARAM_NAMES.index(name[len(prefix):])])
        raise AttributeError(name)


def forward(state: NetworkState, x_m, x_c, eta):
    """Return ``(activation, decision)``; a zero activation decides +1."""
    state.check_finite()
    _check_finite(x_m=x_m, x_c=x_c, eta=eta)
    activation = state.g_m * state.w_m * x_m + state.g_c * state.w_c * x_c + eta
    return activation, (1 if activation >= 0 else -1)


def loss(state: NetworkState, x_m, x_c, eta, y, hyp: Hyperparameters) -> float:
    state.check_finite()
    _check_finite(x_m=x_m, x_c=x_c, eta=eta)
    if y not in (-1, 1):
        raise ValueError(f"y must be +1 or -1, got {y!r}")
    reg = hyp.regulariser
    if reg is Regulariser.NO_GATE:
        return 0.5 * (state.w_m * x_m + state.w_c * x_c + eta - y) ** 2
    fit = 0.5 * (state.g_m * state.w_m * x_m + state.g_c * state.w_c * x_c + eta - y) ** 2
    if reg is Regulariser.L1:
        return fit + hyp.lam * (abs(state.g_m) + abs(state.g_c))
    if reg is Regulariser.L2:
        # separable form: its gradient is exactly the -alpha*lam*g update
        return fit + 0.5 * hyp.lam * (state.g_m**2 + state.g_c**2)
    return fit


def deterministic_deltas(w_m, w_c, g_m, g_c, x_m, x_c, eta, y, alpha, lam, regulariser,
                         proximal=False):
    """Noise-free parameter deltas ``-alpha * dL/dtheta``.

    Works elementwise on scalars or equally shaped arrays, so the scalar
    and batched training paths share one arithmetic sequence.
    """
    if regulariser is Regulariser.NO_GATE:
        residual = w_m * x_m + w_c * x_c + eta - y
        zero = 0.0 * residual
        return -alpha * x_m * residual, -alpha * x_c * residual, zero, zero
    residual = x_m * g_m * w_m + x_c * g_c * w_c + eta - y
    d_w_m = -alpha * x_m * g_m * residual
    d_w_c = -alpha * x_c * g_c * residual
    d_g_m = -alpha * x_m * w_m * residual
    d_g_c = -alpha * x_c * w_c * residual
    # the proximal variant applies the penalty later, see apply_deltas
    if regulariser is Regulariser.L1 and not proximal:
        d_g_m = d_g_m - alpha * lam * np.sign(g_m)
        d_g_c = d_g_c - alpha * lam * np.sign(g_c)
    elif regulariser is Regulariser.L2:
        d_g_m = d_g_m - alpha * lam * g_m
        d_g_c = d_g_c - alpha * lam * g_c
    return d_w_m, d_w_c, d_g_m, d_g_c


def sgd_step(state: NetworkState, x_m, x_c, y, hyp: Hyperparameters, rng: np.random.Generator,
             trial=None):
    """One noisy online SGD update.

    Draws one output-noise sample ``eta`` and four gradient-noise samples
    (in ``PARAM_NAMES`` order, always drawn so that streams stay aligned
    across noise masks).  Returns ``(new_state, snapshot)``.
    """
    state.check_finite()
    _check_finite(x_m=x_m, x_c=x_c)
    eta = hyp.sigma_eta * rng.standard_normal()
    xi = hyp.sigma_xi * rng.standard_normal(4) * hyp.mask_vector()
    det = np.array(
        deterministic_deltas(state.w_m, state.w_c, state.g_m, state.g_c, x_m, x_c, eta, y,
                             hyp.alpha, hyp.lam, hyp.regulariser, uses_proximal_l1(hyp)),
        dtype=float,
    )
    new, det, delta = apply_deltas(state.as_array(), det, xi, hyp.alpha * hyp.lam, uses_proximal_l1(hyp))
    check_divergence(new, trial)
    snapshot = GradientSnapshot(deterministic=det, noise=xi, delta=delta, eta=float(eta))
    return NetworkState.from_array(new, state.rng_seed), snapshot


def uses_proximal_l1(hyp: Hyperparameters) -> bool:
    return hyp.l1_proximal and hyp.regulariser is Regulariser.L1


def apply_deltas(params, det, xi, penalty_step=0.0, proximal=False):
    """Add deterministic and noise deltas to ``(..., 4)`` parameter arrays.

    With ``proximal`` the gate penalty is applied as a soft threshold of
    size ``penalty_step`` after the data and noise step, so a gate that
    would be carried across zero stops at zero.  The deterministic part is
    then whatever the threshold left of the gate change besides the noise.
    Returns ``(new_params, det, delta)`` with ``delta = det + xi``.
    """
    new = params + (det + xi)
    if proximal:
        new[..., 2:] = soft_threshold(new[..., 2:], penalty_step)
        det = np.array(det, dtype=float, copy=True)
        det[..., 2:] = (new[..., 2:] - params[..., 2:]) - xi[..., 2:]
    return new, det, det + xi


def check_divergence(params, trial=None):
    params = np.asarray(params)
    bad = ~(np.abs(params) <= DIVERGENCE_LIMIT)
    if bad.any():
        idx = int(np.flatnonzero(bad.reshape(-1))[0])
        name = PARAM_NAMES[idx % 4] if params.shape[-1] == 4 else None
        raise DivergenceError(trial, name, float(params.reshape(-1)[idx]))


def analytic_accuracy(state, M_m, sigma_m, M_c, sigma_c, sigma_eta):
    """Probability of a correct decision under Gaussian inputs.

    ``state`` may be a :class:`NetworkState` or an array ``(..., 4)`` of
    parameters; the result broadcasts accordingly.
    """
    p = state.as_array() if isinstance(state, NetworkState) else np.asarray(state, dtype=float)
    w_m, w_c, g_m, g_c = p[..., 0], p[..., 1], p[..., 2], p[..., 3]
    mean = g_m * w_m * M_m + g_c * w_c * M_c
    sd = np.sqrt(2.0 * ((g_m * w_m * sigma_m) ** 2 + (g_c * w_c * sigma_c) ** 2 + sigma_eta**2))
    if np.any(sd == 0):
        raise DegenerateDistributionError(
            "decision variable has zero variance (no noise and all gated weights zero)")
    out = 0.5 * (1.0 + erf(mean / sd))
    return float(out) if np.ndim(out) == 0 else out


# ---------------------------------------------------------------------------
# hidden-layer variant
#
# Output classes are ordered (+1, -1) so that an all-zero network decides +1,
# matching the sign(0) convention of the shallow model.

@dataclass(frozen=True, eq=False)
class DeepNetworkState:
    w1: np.ndarray      # (2, 48), rows: motion, colour
    gates: np.ndarray   # (2, 48)
    w2: np.ndarray      # (48, 2)
    rng_seed: int = 0

    @classmethod
    def initial(cls, rng: np.random.Generator, rng_seed=0, hidden=HIDDEN_UNITS) -> "DeepNetworkState":
        w1 = rng.uniform(-0.1, 0.1, size=(2, hidden))
        w2 = rng.uniform(-0.1, 0.1, size=(hidden, 2))
        return cls(w1, np.full((2, hidden), INITIAL_VALUE), w2, rng_seed)

    def check_finite(self):
        for name in ("w1", "gates", "w2"):
            arr = getattr(self, name)
            if not np.all(np.isfinite(arr)):
                raise NonFiniteInputError(name, arr[~np.isfinite(arr)][0])


def _label_to_class(y):
    return 0 if y == 1 else 1


def deep_forward(state: DeepNetworkState, x_m, x_c):
    """Return ``(logits, decision)`` with ties resolved to the first class (+1)."""
    state.check_finite()
    _check_finite(x_m=x_m, x_c=x_c)
    x = np.array([x_m, x_c])
    hidden = np.maximum((state.gates * state.w1).T @ x, 0.0)
    logits = state.w2.T @ hidden
    decision = 1 if logits[0] >= logits[1] else -1
    return logits, decision


def deep_loss(state: DeepNetworkState, x_m, x_c, y, lam=0.0) -> float:
    logits, _ = deep_forward(state, x_m, x_c)
    target = _label_to_class(y)
    shifted = logits - logits.max()
    ce = -(shifted[target] - math.log(np.exp(shifted).sum()))
    return float(ce + lam * np.abs(state.gates).sum())


def deep_gradients(w1, gates, w2, x, target, lam):
    """Gradients of cross-entropy + lam*sum|gates|, batched over a leading agent axis.

    ``w1, gates``: (A, 2, H); ``w2``: (A, H, 2); ``x``: (A, 2); ``target``:
    (A,) class indices.  Returns ``(g_w1, g_gates, g_w2)``.
    """
    eff = gates * w1
    pre = np.einsum("aih,ai->ah", eff, x)
    hidden = np.maximum(pre, 0.0)
    logits = np.einsum("ahk,ah->ak", w2, hidden)
    logits = logits - logits.max(axis=1, keepdims=True)
    prob = np.exp(logits)
    prob /= prob.sum(axis=1, keepdims=True)
    err = prob
    err[np.arange(len(target)), target] -= 1.0
    g_w2 = hidden[:, :, None] * err[:, None, :]
    d_hidden = np.einsum("ahk,ak->ah", w2, err) * (pre > 0)
    outer = x[:, :, None] * d_hidden[:, None, :]
    g_w1 = outer * gates
    g_gates = outer * w1 + lam * np.sign(gates)
    return g_w1, g_gates, g_w2


def deep_noise_flags(hyp: Hyperparameters):
    """Map the shallow noise mask onto the (weights, gates) parameter classes."""
    return (bool(hyp.noise_mask & {"w_m", "w_c"}), bool(hyp.noise_mask & {"g_m", "g_c"}))


def deep_sgd_step(state: DeepNetworkState, x_m, x_c, y, hyp: Hyperparameters,
                  rng: np.random.Generator, trial=None) -> DeepNetworkState:
    """One online step; noise draws are ordered w1, gates, w2."""
    state.check_finite()
    _check_finite(x_m=x_m, x_c=x_c)
    g_w1, g_g, g_w2 = deep_gradients(state.w1[None], state.gates[None], state.w2[None],
                                     np.array([[x_m, x_c]]), np.array([_label_to_class(y)]),
                                     0.0 if uses_proximal_l1(hyp) else hyp.lam)
    noisy_w, noisy_g = deep_noise_flags(hyp)
    h = state.w1.shape[1]
    z = rng.standard_normal(6 * h)
    xi_w1 = hyp.sigma_xi * noisy_w * z[: 2 * h].reshape(2, h)
    xi_g = hyp.sigma_xi * noisy_g * z[2 * h: 4 * h].reshape(2, h)
    xi_w2 = hyp.sigma_xi * noisy_w * z[4 * h:].reshape(h, 2)
    w1 = state.w1 - hyp.alpha * g_w1[0] + xi_w1
    gates = state.gates - hyp.alpha * g_g[0] + xi_g
    if uses_proximal_l1(hyp):
        gates = soft_threshold(gates, hyp.alpha * hyp.lam)
    w2 = state.w2 - hyp.alpha * g_w2[0] + xi_w2
    for arr in (w1, gates, w2):
        if not np.all(np.abs(arr) <= DIVERGENCE_LIMIT):
            raise DivergenceError(trial)
    return DeepNetworkState(w1, gates, w2, state.rng_seed)


def soft_threshold(g, step):
    """Proximal operator of ``step * |g|``: shrink towards zero, never across it."""
    return np.sign(g) * np.maximum(np.abs(g) - step, 0.0)
