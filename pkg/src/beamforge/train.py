"""Supervised training of the apodization network against MV-family targets.

The loss couples a signed logarithmic image error with a unity-gain
constraint on the predicted weights:

    total = lambda * SMSLE(P_pred, P_target) + (1 - lambda) * mean |1.w - 1|^2

Both the forward model and all gradients are written out explicitly (no
autodiff) in double precision so that analytic gradients can be validated
against central finite differences. Optimization is Adam with per-frame
batches (every pixel of one image per step) and epoch-level reshuffling,
fully deterministic given the seed.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .neural import MLPParams, TwoStageParams, backward_trace, forward_trace, two_stage_trace
from .validation import ConfigurationError

LOG_FLOOR = 1e-8
_LN10 = math.log(10.0)


@dataclass(frozen=True)
class LossConfig:
    """Loss mixing weight, logarithmic floor, and per-frame normalization."""

    mix: float = 0.9  # weight on the SMSLE term; 1 - mix goes to unity gain
    log_floor: float = LOG_FLOOR
    normalize: bool = True

    def __post_init__(self):
        if not 0.0 <= self.mix <= 1.0:
            raise ConfigurationError("loss mix must be in [0, 1]")
        if self.log_floor <= 0.0:
            raise ConfigurationError("log floor must be > 0")


def smsle(predicted, target, log_floor=LOG_FLOOR):
    """Signed mean-squared-logarithmic error between two real images.

    The positive and negative parts are compared separately on a log10
    scale, each floored at ``log_floor``; the two mean-square terms carry
    weight 1/2 each. Inputs are compared as given — normalize beforehand
    (see :class:`LossConfig`).
    """
    predicted = np.asarray(predicted, dtype=np.float64)
    target = np.asarray(target, dtype=np.float64)
    if predicted.shape != target.shape:
        raise ConfigurationError("prediction and target dims differ")
    pos = (np.log10(np.maximum(predicted, log_floor))
           - np.log10(np.maximum(target, log_floor)))
    neg = (np.log10(np.maximum(-predicted, log_floor))
           - np.log10(np.maximum(-target, log_floor)))
    return 0.5 * np.mean(pos ** 2) + 0.5 * np.mean(neg ** 2)


def _smsle_gradient(predicted, target, log_floor):
    """d smsle / d predicted, elementwise (mean factors included)."""
    pos = (np.log10(np.maximum(predicted, log_floor))
           - np.log10(np.maximum(target, log_floor)))
    neg = (np.log10(np.maximum(-predicted, log_floor))
           - np.log10(np.maximum(-target, log_floor)))
    grad = np.zeros_like(predicted)
    above = predicted > log_floor
    below = predicted < -log_floor
    grad[above] = pos[above] / (predicted[above] * _LN10)
    grad[below] = neg[below] / (predicted[below] * _LN10)
    return grad / predicted.size


def unity_penalty(weights):
    """Squared deviation of the weight sum from unit gain, |1.w - 1|^2."""
    return float(np.abs(np.sum(weights) - 1.0) ** 2)


def total_loss(predicted, target, weights_per_pixel, cfg=None):
    """Mixed SMSLE + mean unity penalty (see module docstring)."""
    cfg = cfg or LossConfig()
    sums = np.sum(np.asarray(weights_per_pixel, dtype=np.float64), axis=-1)
    unity = np.mean((sums - 1.0) ** 2)
    return cfg.mix * smsle(predicted, target, cfg.log_floor) + (1.0 - cfg.mix) * unity


def _normalizer(target, cfg):
    if not cfg.normalize:
        return 1.0
    peak = float(np.max(np.abs(target))) if target.size else 0.0
    return peak if peak > 0.0 else 1.0


def parameter_arrays(params):
    """Flat list of parameter tensors, in a fixed serialization order."""
    if isinstance(params, TwoStageParams):
        return parameter_arrays(params.stage1) + parameter_arrays(params.stage2)
    return list(params.weights) + list(params.biases)


def _stage_gradients(grad_w, grad_b):
    return list(grad_w) + list(grad_b)


def frame_loss_and_gradients(params, inputs, target, cfg=None, training=False, rng=None):
    """Loss and exact parameter gradients for one frame batch.

    ``inputs`` is (n_pixels, N) for the single-stage network or
    (n_pixels, T, m) for the two-stage one; ``target`` is (n_pixels,).
    Returns (loss, gradients aligned with :func:`parameter_arrays`).
    """
    cfg = cfg or LossConfig()
    target = np.asarray(target, dtype=np.float64).reshape(-1)
    inputs = np.asarray(inputs, dtype=np.float64)
    n_pixels = target.size
    if inputs.shape[0] != n_pixels:
        raise ConfigurationError("batch input and target pixel counts differ")
    scale = _normalizer(target, cfg)

    if isinstance(params, TwoStageParams):
        return _two_stage_loss_grad(params, inputs, target, cfg, scale, training, rng)

    weights, layers = forward_trace(params, inputs, training, rng)
    predicted = np.einsum("pn,pn->p", weights, inputs)
    sums = weights.sum(axis=1)
    loss = (cfg.mix * smsle(predicted / scale, target / scale, cfg.log_floor)
            + (1.0 - cfg.mix) * np.mean((sums - 1.0) ** 2))
    _check_loss(loss, predicted)

    grad_p = cfg.mix * _smsle_gradient(predicted / scale, target / scale, cfg.log_floor) / scale
    grad_weights = (grad_p[:, None] * inputs
                    + (1.0 - cfg.mix) * (2.0 * (sums - 1.0) / n_pixels)[:, None])
    grad_w, grad_b, _ = backward_trace(params, layers, grad_weights)
    return float(loss), _stage_gradients(grad_w, grad_b)


def _two_stage_loss_grad(params, inputs, target, cfg, scale, training, rng):
    predicted, cache = two_stage_trace(params, inputs, training, rng)
    x, w1, s, v = cache["x"], cache["w1"], cache["s"], cache["v"]
    # effective per-pixel gain: sum_t v_t * (sum_i w1_ti); unity targets it
    row_sums = w1.sum(axis=-1)
    gain = np.einsum("pt,pt->p", v, row_sums)
    n_pixels = target.size
    loss = (cfg.mix * smsle(predicted / scale, target / scale, cfg.log_floor)
            + (1.0 - cfg.mix) * np.mean((gain - 1.0) ** 2))
    _check_loss(loss, predicted)

    grad_p = cfg.mix * _smsle_gradient(predicted / scale, target / scale, cfg.log_floor) / scale
    grad_gain = (1.0 - cfg.mix) * 2.0 * (gain - 1.0) / n_pixels

    grad_v = grad_p[:, None] * s + grad_gain[:, None] * row_sums
    g2_w, g2_b, grad_s_net = backward_trace(params.stage2, cache["layers2"], grad_v)
    grad_s = grad_p[:, None] * v + grad_s_net
    grad_w1 = grad_s[:, :, None] * x + (grad_gain[:, None] * v)[:, :, None]
    g1_w, g1_b, _ = backward_trace(params.stage1, cache["layers1"], grad_w1)
    return float(loss), _stage_gradients(g1_w, g1_b) + _stage_gradients(g2_w, g2_b)


def _check_loss(loss, predicted):
    if not np.isfinite(loss):
        bad = int(np.count_nonzero(~np.isfinite(predicted)))
        raise FloatingPointError(
            f"non-finite training loss ({loss}); {bad} non-finite pixel outputs")


backward = frame_loss_and_gradients  # canonical name: loss gradients for one batch


@dataclass
class AdamState:
    """Adam first/second moment accumulators for a flat parameter list."""

    learning_rate: float = 0.001
    beta1: float = 0.9
    beta2: float = 0.999
    epsilon: float = 1e-8
    step: int = 0
    first: list = field(default_factory=list)
    second: list = field(default_factory=list)

    @classmethod
    def for_parameters(cls, arrays, learning_rate=0.001):
        state = cls(learning_rate=learning_rate)
        state.first = [np.zeros_like(a) for a in arrays]
        state.second = [np.zeros_like(a) for a in arrays]
        return state

    def update(self, arrays, gradients):
        """Apply one Adam step in place."""
        self.step += 1
        correct1 = 1.0 - self.beta1 ** self.step
        correct2 = 1.0 - self.beta2 ** self.step
        for a, g, m, v in zip(arrays, gradients, self.first, self.second):
            m *= self.beta1
            m += (1.0 - self.beta1) * g
            v *= self.beta2
            v += (1.0 - self.beta2) * g * g
            a -= self.learning_rate * (m / correct1) / (np.sqrt(v / correct2) + self.epsilon)


@dataclass
class TrainingResult:
    params: object
    loss_history: list

    def history_csv(self):
        lines = ["epoch,loss"]
        lines += [f"{i},{value!r}" for i, value in enumerate(self.loss_history, start=1)]
        return "\n".join(lines) + "\n"


def train(dataset, params, epochs, seed, cfg=None, learning_rate=0.001):
    """Train a (copy of a) network on per-frame batches.

    ``dataset`` is a sequence of ``(inputs, target)`` frame batches as
    accepted by :func:`frame_loss_and_gradients`. Frame order reshuffles
    every epoch from the seed, which also drives the dropout masks. Returns a
    :class:`TrainingResult` with the trained parameters and the mean
    training loss per epoch.
    """
    if epochs < 0:
        raise ConfigurationError("epochs must be >= 0")
    if not dataset:
        raise ConfigurationError("dataset is empty")
    params = params.copy()
    cfg = cfg or LossConfig()
    rng = np.random.default_rng(seed)
    arrays = parameter_arrays(params)
    optimizer = AdamState.for_parameters(arrays, learning_rate)
    history = []
    for _ in range(epochs):
        order = rng.permutation(len(dataset))
        epoch_loss = 0.0
        for index in order:
            inputs, target = dataset[index]
            loss, gradients = frame_loss_and_gradients(
                params, inputs, target, cfg, training=True, rng=rng)
            optimizer.update(arrays, gradients)
            epoch_loss += loss
        history.append(epoch_loss / len(dataset))
    return TrainingResult(params, history)


def evaluate_smsle(params, dataset, cfg=None):
    """Mean held-out SMSLE over frame batches (inference mode, no dropout)."""
    cfg = cfg or LossConfig()
    values = []
    for inputs, target in dataset:
        target = np.asarray(target, dtype=np.float64).reshape(-1)
        scale = _normalizer(target, cfg)
        if isinstance(params, TwoStageParams):
            predicted, _ = two_stage_trace(params, inputs, training=False)
        else:
            weights, _ = forward_trace(params, inputs, training=False)
            predicted = np.einsum("pn,pn->p", weights, np.asarray(inputs, dtype=np.float64))
        values.append(smsle(predicted / scale, target / scale, cfg.log_floor))
    return float(np.mean(values))
