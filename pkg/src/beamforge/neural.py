"""Learned per-pixel apodization: a 4-layer MLP with antirectifier
activations, and a two-stage variant for subsampled synthetic-aperture data.

The single-stage network maps a focused channel vector y in R^N to weights
w in R^N; the pixel output is the dot product w . y. Layer output widths are
[N, N/4, N/4, N]; each of the first three layers is followed by an
antirectifier (which doubles the width) and, during training, dropout. The
final layer is linear so weights may take either sign.

Everything here is plain numpy in double precision, with explicit
forward/backward passes so gradients can be checked against finite
differences.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .beamform import ApodizationMap, BeamformedImage
from .validation import ConfigurationError, check_finite

NORM_EPSILON = 1e-9  # antirectifier L2-normalization floor
DEFAULT_DROPOUT = 0.2
NUM_LAYERS = 4


def layer_shapes(input_width):
    """(fan_in, fan_out) per layer; antirectifiers double the next fan_in.

    Inner layers are N // 4 wide, floored at 2: the antirectifier removes
    the mean, so a width-1 layer would emit exactly zero and disconnect the
    network. The floor only matters for N < 8.
    """
    n = int(input_width)
    if n < 2:
        raise ConfigurationError("network input width must be at least 2")
    inner = max(2, n // 4)
    return [(n, n), (2 * n, inner), (2 * inner, inner), (2 * inner, n)]


@dataclass(eq=False)
class MLPParams:
    """Weights and biases of the 4-layer apodization network.

    ``weights[i]`` has shape (fan_in, fan_out); ``biases[i]`` has shape
    (fan_out,). ``dropout`` applies after each antirectifier during
    training only.
    """

    weights: list
    biases: list
    dropout: float = DEFAULT_DROPOUT

    def __post_init__(self):
        self.weights = [np.asarray(w, dtype=np.float64) for w in self.weights]
        self.biases = [np.asarray(b, dtype=np.float64) for b in self.biases]
        if len(self.weights) != len(self.biases):
            raise ConfigurationError("weights and biases must pair up")
        expected = layer_shapes(self.input_width)
        if len(self.weights) != len(expected):
            raise ConfigurationError(f"expected {len(expected)} layers")
        for i, (w, b) in enumerate(zip(self.weights, self.biases)):
            if w.shape != expected[i] or b.shape != (expected[i][1],):
                raise ConfigurationError(
                    f"layer {i} shapes {w.shape}/{b.shape} do not follow the "
                    f"doubling rule {expected[i]}")
            check_finite(w, f"layer {i} weights")
            check_finite(b, f"layer {i} biases")
        if not 0.0 <= self.dropout < 1.0:
            raise ConfigurationError("dropout probability must be in [0, 1)")

    @property
    def input_width(self):
        return self.weights[0].shape[0]

    @property
    def num_parameters(self):
        return sum(w.size + b.size for w, b in zip(self.weights, self.biases))

    def copy(self):
        return MLPParams([w.copy() for w in self.weights],
                         [b.copy() for b in self.biases], self.dropout)

    @classmethod
    def init(cls, input_width, rng, dropout=DEFAULT_DROPOUT):
        """Uniform variance-preserving initialization in ±sqrt(6/(fan_in+fan_out))."""
        weights, biases = [], []
        for fan_in, fan_out in layer_shapes(input_width):
            bound = np.sqrt(6.0 / (fan_in + fan_out))
            weights.append(rng.uniform(-bound, bound, (fan_in, fan_out)))
            biases.append(np.zeros(fan_out))
        return cls(weights, biases, dropout)


@dataclass(eq=False)
class TwoStageParams:
    """Parameters of the subsampled synthetic-aperture network.

    Stage 1 is shared across transmits and beamforms each transmit's active
    receive channels; stage 2 consumes the vector of per-transmit outputs
    and predicts compounding weights across transmits.
    """

    stage1: MLPParams
    stage2: MLPParams

    @property
    def num_parameters(self):
        return self.stage1.num_parameters + self.stage2.num_parameters

    def copy(self):
        return TwoStageParams(self.stage1.copy(), self.stage2.copy())

    @classmethod
    def init(cls, active_per_transmit, num_transmits, rng, dropout=DEFAULT_DROPOUT):
        return cls(MLPParams.init(active_per_transmit, rng, dropout),
                   MLPParams.init(num_transmits, rng, dropout))


def antirectifier(x):
    """Mean-remove, L2-normalize, and split into positive/negative halves.

    x_hat = (x - mean(x)) / max(||x - mean(x)||_2, 1e-9) along the last
    axis; the output concatenates max(0, x_hat) and max(0, -x_hat), doubling
    the width. Non-constant inputs yield unit-norm outputs.
    """
    x = np.asarray(x, dtype=np.float64)
    centered = x - x.mean(axis=-1, keepdims=True)
    norm = np.linalg.norm(centered, axis=-1, keepdims=True)
    x_hat = centered / np.maximum(norm, NORM_EPSILON)
    return np.concatenate([np.maximum(x_hat, 0.0), np.maximum(-x_hat, 0.0)], axis=-1)


def _antirectifier_trace(x):
    centered = x - x.mean(axis=-1, keepdims=True)
    norm = np.linalg.norm(centered, axis=-1, keepdims=True)
    x_hat = centered / np.maximum(norm, NORM_EPSILON)
    out = np.concatenate([np.maximum(x_hat, 0.0), np.maximum(-x_hat, 0.0)], axis=-1)
    return out, (x_hat, norm)


def _antirectifier_backward(grad_out, cache):
    x_hat, norm = cache
    m = x_hat.shape[-1]
    grad_pos, grad_neg = grad_out[..., :m], grad_out[..., m:]
    grad_hat = grad_pos * (x_hat > 0.0) - grad_neg * (x_hat < 0.0)
    small = norm <= NORM_EPSILON
    # normalization backward: d(u/||u||) pulls out the radial component;
    # below the floor the scale is the constant 1/epsilon
    radial = np.sum(x_hat * grad_hat, axis=-1, keepdims=True)
    scale = np.where(small, NORM_EPSILON, norm)
    grad_centered = np.where(small, grad_hat, grad_hat - x_hat * radial) / scale
    return grad_centered - grad_centered.mean(axis=-1, keepdims=True)


def forward_trace(params, x, training=False, rng=None):
    """Forward pass retaining everything the backward pass needs.

    ``x`` may have any leading batch shape; the last axis must equal the
    network input width. Returns (weights, cache).
    """
    x = np.asarray(x, dtype=np.float64)
    if x.shape[-1] != params.input_width:
        raise ConfigurationError(
            f"input width {x.shape[-1]} does not match network width "
            f"{params.input_width}")
    if training and rng is None:
        raise ConfigurationError("training-mode forward needs an explicit rng")
    layers = []
    n_last = len(params.weights) - 1
    for i, (w, b) in enumerate(zip(params.weights, params.biases)):
        z = x @ w + b
        if i == n_last:
            layers.append({"x": x})
            x = z
            break
        act, anti_cache = _antirectifier_trace(z)
        mask = None
        if training and params.dropout > 0.0:
            mask = rng.random(act.shape) >= params.dropout
            act = act * mask / (1.0 - params.dropout)
        layers.append({"x": x, "anti": anti_cache, "mask": mask})
        x = act
    return x, layers


def forward(params, x, training=False, rng=None):
    """Predict apodization weights for focused vectors ``x`` (..., N)."""
    out, _ = forward_trace(params, x, training, rng)
    return out


def backward_trace(params, layers, grad_out):
    """Vector-Jacobian product through the network.

    ``grad_out`` is dLoss/dWeights with the same shape as the forward
    output. Returns (weight grads, bias grads, dLoss/dInput). Batch axes are
    summed into the parameter gradients.
    """
    grad_w = [None] * len(params.weights)
    grad_b = [None] * len(params.biases)
    grad = np.asarray(grad_out, dtype=np.float64)
    n_last = len(params.weights) - 1
    for i in range(n_last, -1, -1):
        cache = layers[i]
        if i != n_last:
            if cache["mask"] is not None:
                grad = grad * cache["mask"] / (1.0 - params.dropout)
            grad = _antirectifier_backward(grad, cache["anti"])
        x = cache["x"]
        flat_x = x.reshape(-1, x.shape[-1])
        flat_g = grad.reshape(-1, grad.shape[-1])
        grad_w[i] = flat_x.T @ flat_g
        grad_b[i] = flat_g.sum(axis=0)
        grad = grad @ params.weights[i].T
    return grad_w, grad_b, grad


def able_beamform(params, frame):
    """Apply the trained network per pixel: P = f(y) . y."""
    if frame.aperture_size != params.input_width:
        raise ConfigurationError(
            f"frame aperture {frame.aperture_size} does not match network "
            f"width {params.input_width}")
    w = forward(params, frame.data, training=False)
    image = np.einsum("...n,...n->...", w, frame.data)
    return (BeamformedImage(image, frame.grid, "able", frame.geometry_hash),
            ApodizationMap(w, "able"))


def compact_active_channels(frame):
    """Gather each transmit's active channels into a dense (..., T, m) block.

    Requires every transmit to keep the same number ``m`` of active
    channels (which subsampling masks guarantee for a fixed rate).
    """
    data, mask = frame.per_transmit()
    counts = mask.sum(axis=1)
    if counts.size == 0 or np.any(counts != counts[0]):
        raise ConfigurationError("transmits disagree in active channel count")
    m = int(counts[0])
    gathered = np.empty(data.shape[:-1] + (m,), dtype=np.float64)
    for t in range(mask.shape[0]):
        gathered[..., t, :] = data[..., t, mask[t]]
    return gathered


def two_stage_trace(params, x, training=False, rng=None):
    """Forward pass of the two-stage network over compacted inputs.

    ``x`` has shape (..., T, m). Stage 1 beamforms each transmit:
    s_t = f1(x_t) . x_t (parameters shared over t); stage 2 predicts
    compounding weights v = f2(s) and the output is P = v . s.
    Returns (P, cache).
    """
    x = np.asarray(x, dtype=np.float64)
    if x.shape[-1] != params.stage1.input_width:
        raise ConfigurationError("stage-1 width does not match active channel count")
    if x.shape[-2] != params.stage2.input_width:
        raise ConfigurationError("stage-2 width does not match transmit count")
    w1, layers1 = forward_trace(params.stage1, x, training, rng)
    s = np.einsum("...m,...m->...", w1, x)
    v, layers2 = forward_trace(params.stage2, s, training, rng)
    p = np.einsum("...t,...t->...", v, s)
    return p, {"x": x, "w1": w1, "layers1": layers1, "s": s, "v": v, "layers2": layers2}


def two_stage_beamform(params, frame):
    """Two-stage inference on a subsampled synthetic-aperture frame."""
    x = compact_active_channels(frame)
    p, _ = two_stage_trace(params, x, training=False)
    return BeamformedImage(p, frame.grid, "able_two_stage", frame.geometry_hash)


MODEL_FORMAT_VERSION = 1


def _pack_stage(tensors, prefix, params):
    for i, (w, b) in enumerate(zip(params.weights, params.biases)):
        tensors[f"{prefix}layer{i}.weight"] = w
        tensors[f"{prefix}layer{i}.bias"] = b
    tensors[f"{prefix}dropout"] = np.array([params.dropout])


def _unpack_stage(tensors, prefix):
    weights, biases = [], []
    for i in range(NUM_LAYERS):
        weights.append(tensors[f"{prefix}layer{i}.weight"])
        biases.append(tensors[f"{prefix}layer{i}.bias"])
    return MLPParams(weights, biases, float(tensors[f"{prefix}dropout"][0]))


def save_params(path, params):
    """Write network parameters plus a manifest to a tensor container."""
    from .io_cli.container import write_container

    kind = "two_stage" if isinstance(params, TwoStageParams) else "mlp"
    tensors = {
        "manifest.format_version": np.array([MODEL_FORMAT_VERSION], dtype=np.uint8),
        "manifest.kind": np.frombuffer(kind.encode(), dtype=np.uint8).copy(),
    }
    if kind == "two_stage":
        _pack_stage(tensors, "stage1.", params.stage1)
        _pack_stage(tensors, "stage2.", params.stage2)
    else:
        _pack_stage(tensors, "", params)
    write_container(path, tensors)


def load_params(path):
    """Read network parameters written by :func:`save_params`."""
    from .io_cli.container import read_container

    tensors = read_container(path)
    version = int(tensors["manifest.format_version"][0])
    if version != MODEL_FORMAT_VERSION:
        raise ConfigurationError(f"unsupported model format version {version}")
    kind = tensors["manifest.kind"].tobytes().decode()
    if kind == "two_stage":
        return TwoStageParams(_unpack_stage(tensors, "stage1."),
                              _unpack_stage(tensors, "stage2."))
    return _unpack_stage(tensors, "")
