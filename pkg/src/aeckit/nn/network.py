"""The echo/other MOS regression network.

Layer chain: 4 x [3x3 same-pad conv -> LeakyReLU -> 2x2 max pool (floor) ->
dropout] -> max over the frequency axis (time kept as a sequence) -> stacked
bidirectional GRU -> concatenated final forward/backward hidden states ->
dense -> dense -> dense(2) with a 1 + 4*sigmoid output head, so both scores
stay strictly inside (1, 5). With use_gru=False the sequence is instead
max-pooled over time and fed to the dense head directly.

Parameters live in a flat name->array dict; the canonical training dtype is
float32 (gradient checking clones everything to float64). All forward/backward
code is single-example; train_step loops over the batch accumulating gradients.
"""

from __future__ import annotations

from dataclasses import dataclass, asdict
from typing import Optional

import numpy as np

from ..dsp import StftConfig
from ..errors import InvalidConfigError, NonFiniteLossError, ShapeMismatchError
from ..types import FeatureBlock, MosPair
from . import ops
from .gru import bigru_stack_forward, bigru_stack_backward

FEATURE_MODES = {"stft257": 257, "mel160": 160}

# Minimum spatial extent so that four 2x2 floor-pools leave at least one cell.
MIN_FRAMES = 16
MIN_BINS = 16

# Sigmoid outputs are clamped into [_SIG_CLAMP, 1 - _SIG_CLAMP] before the
# 1 + 4*s mapping: in saturated float arithmetic a raw sigmoid reaches exactly
# 0.0 or 1.0, which would put the score on the closed boundary of [1, 5].
_SIG_CLAMP = 1e-6


@dataclass
class ModelConfig:
    in_channels: int = 3
    conv_channels: tuple = (32, 64, 64, 128)
    kernel_size: int = 3
    leaky_slope: float = 0.01
    dropout_conv: float = 0.4
    gru_layers: int = 2
    gru_hidden: int = 64
    gru_bidirectional: bool = True
    gru_dropout: float = 0.2
    dense_sizes: tuple = (64, 64)
    dropout_dense: float = 0.4
    out_dim: int = 2
    feature_mode: str = "stft257"
    use_scenario_marker: bool = True
    use_gru: bool = True
    # optional fixed affine on the input features ((x + shift) * scale),
    # equivalent to rescaling conv1; defaults leave features untouched.
    # Log-power features have a large negative mean, which conditions
    # training poorly unless compensated here or by a tiny learning rate.
    input_shift: float = 0.0
    input_scale: float = 1.0
    seed: int = 0

    def __post_init__(self):
        self.conv_channels = tuple(int(c) for c in self.conv_channels)
        self.dense_sizes = tuple(int(d) for d in self.dense_sizes)
        self.validate()

    def validate(self):
        if self.in_channels != 3:
            raise InvalidConfigError("in_channels must be 3 (near, far, enhanced)")
        if len(self.conv_channels) != 4:
            raise InvalidConfigError("conv_channels must list exactly 4 stages")
        if any(c < 1 for c in self.conv_channels):
            raise InvalidConfigError("conv channel counts must be positive")
        if self.kernel_size != 3:
            raise InvalidConfigError("only 3x3 kernels are supported")
        if self.out_dim != 2:
            raise InvalidConfigError("out_dim must be 2 (echo MOS, other MOS)")
        if self.feature_mode not in FEATURE_MODES:
            raise InvalidConfigError(f"unknown feature_mode {self.feature_mode!r}")
        if self.gru_layers < 1 or self.gru_hidden < 1:
            raise InvalidConfigError("gru_layers and gru_hidden must be >= 1")
        if not self.dense_sizes:
            raise InvalidConfigError("dense_sizes must not be empty")
        for name in ("dropout_conv", "gru_dropout", "dropout_dense"):
            p = getattr(self, name)
            if not 0.0 <= p < 1.0:
                raise InvalidConfigError(f"{name} must be in [0, 1)")

    @property
    def n_bins(self) -> int:
        return FEATURE_MODES[self.feature_mode]

    @property
    def head_input_dim(self) -> int:
        if self.use_gru:
            return (2 if self.gru_bidirectional else 1) * self.gru_hidden
        return self.conv_channels[-1]

    def to_dict(self) -> dict:
        d = asdict(self)
        d["conv_channels"] = list(self.conv_channels)
        d["dense_sizes"] = list(self.dense_sizes)
        return d

    @classmethod
    def from_dict(cls, d: dict) -> "ModelConfig":
        return cls(**d)


@dataclass
class AdamState:
    """First/second moment estimates plus the shared step count."""

    m: dict
    v: dict
    step: int = 0


@dataclass
class Checkpoint:
    config: ModelConfig
    stft_config: StftConfig
    params: dict
    adam: AdamState
    format_version: int = 1


def param_shapes(config: ModelConfig) -> dict:
    """Fixed, ordered name->shape map for every trainable array."""
    shapes = {}
    c_in = config.in_channels
    for i, c_out in enumerate(config.conv_channels, start=1):
        shapes[f"conv{i}.w"] = (c_out, c_in, 3, 3)
        shapes[f"conv{i}.b"] = (c_out,)
        c_in = c_out
    if config.use_gru:
        h = config.gru_hidden
        d = config.conv_channels[-1]
        dirs = ("fw", "bw") if config.gru_bidirectional else ("fw",)
        for j in range(config.gru_layers):
            for direction in dirs:
                shapes[f"gru.l{j}.{direction}.w_ih"] = (3 * h, d)
                shapes[f"gru.l{j}.{direction}.w_hh"] = (3 * h, h)
                shapes[f"gru.l{j}.{direction}.b_ih"] = (3 * h,)
                shapes[f"gru.l{j}.{direction}.b_hh"] = (3 * h,)
            d = len(dirs) * h
    d = config.head_input_dim
    for k, size in enumerate(config.dense_sizes, start=1):
        shapes[f"dense{k}.w"] = (size, d)
        shapes[f"dense{k}.b"] = (size,)
        d = size
    shapes["head.w"] = (config.out_dim, d)
    shapes["head.b"] = (config.out_dim,)
    return shapes


def init_model(config: ModelConfig, stft_config: Optional[StftConfig] = None,
               dtype=np.float32) -> Checkpoint:
    """Deterministic parameter init.

    Conv/dense weights are Glorot-uniform (b = sqrt(6 / (fan_in + fan_out)),
    with fan counted over the receptive field for convs); GRU weights are
    uniform(-1/sqrt(hidden), 1/sqrt(hidden)); all biases start at zero.
    """
    config.validate()
    if stft_config is None:
        stft_config = StftConfig()
    rng = np.random.default_rng(config.seed)
    dtype = np.dtype(dtype)
    params = {}
    for name, shape in param_shapes(config).items():
        if name.endswith(".b") or ".b_" in name:
            arr = np.zeros(shape, dtype=dtype)
        elif name.startswith("gru."):
            bound = 1.0 / np.sqrt(config.gru_hidden)
            arr = rng.uniform(-bound, bound, size=shape).astype(dtype)
        elif name.startswith("conv"):
            c_out, c_in = shape[0], shape[1]
            bound = np.sqrt(6.0 / (c_in * 9 + c_out * 9))
            arr = rng.uniform(-bound, bound, size=shape).astype(dtype)
        else:  # dense / head
            fan_out, fan_in = shape
            bound = np.sqrt(6.0 / (fan_in + fan_out))
            arr = rng.uniform(-bound, bound, size=shape).astype(dtype)
        params[name] = arr
    adam = AdamState(
        m={k: np.zeros_like(v) for k, v in params.items()},
        v={k: np.zeros_like(v) for k, v in params.items()},
    )
    return Checkpoint(config=config, stft_config=stft_config, params=params, adam=adam)


def _gru_layer_params(params: dict, config: ModelConfig) -> list:
    layers = []
    dirs = ("fw", "bw") if config.gru_bidirectional else ("fw",)
    for j in range(config.gru_layers):
        layer = {}
        for direction in dirs:
            for part in ("w_ih", "w_hh", "b_ih", "b_hh"):
                layer[f"{direction}.{part}"] = params[f"gru.l{j}.{direction}.{part}"]
        layers.append(layer)
    return layers


def _forward_raw(params: dict, config: ModelConfig, x: np.ndarray,
                 training: bool, rng) -> tuple:
    """Full forward pass on a (3, F, B) array; returns (raw (2,) scores, cache)."""
    if x.ndim != 3 or x.shape[0] != config.in_channels:
        raise ShapeMismatchError(f"expected (3, frames, bins) input, got {x.shape}")
    if x.shape[1] < MIN_FRAMES:
        raise ShapeMismatchError(f"need at least {MIN_FRAMES} frames, got {x.shape[1]}")
    if x.shape[2] < MIN_BINS:
        raise ShapeMismatchError(f"need at least {MIN_BINS} bins, got {x.shape[2]}")
    if training and rng is None:
        raise ValueError("training forward pass needs an rng for dropout")
    dtype = params["conv1.w"].dtype
    h = x.astype(dtype, copy=False)
    if config.input_shift != 0.0 or config.input_scale != 1.0:
        h = (h + dtype.type(config.input_shift)) * dtype.type(config.input_scale)

    cache = {"x_shape": x.shape, "conv": [], "dtype": dtype}
    for i in range(1, 5):
        w, b = params[f"conv{i}.w"], params[f"conv{i}.b"]
        pre, cols = ops.conv3x3_forward(h, w, b)
        act = ops.leaky_relu(pre, config.leaky_slope)
        pooled, pool_idx = ops.maxpool2x2_forward(act)
        mask = None
        if training and config.dropout_conv > 0:
            mask = ops.dropout_mask(pooled.shape, config.dropout_conv, rng, dtype)
            pooled = pooled * mask
        cache["conv"].append({
            "in_shape": h.shape, "cols": cols, "pre": pre,
            "act_shape": act.shape, "pool_idx": pool_idx, "mask": mask,
            "out": pooled,
        })
        h = pooled

    # collapse frequency, keep time: (C, T, F) -> (T, C)
    freq_max, freq_idx = ops.max_over_axis_forward(h, axis=2)
    seq = freq_max.T
    cache["freq_idx"] = freq_idx
    cache["conv_out_shape"] = h.shape
    cache["seq_shape"] = seq.shape

    if config.use_gru:
        layer_params = _gru_layer_params(params, config)
        feat, gru_caches = bigru_stack_forward(
            seq, layer_params, config.gru_bidirectional,
            config.gru_dropout, training, rng)
        cache["gru"] = gru_caches
    else:
        feat, time_idx = ops.max_over_axis_forward(seq, axis=0)
        cache["time_idx"] = time_idx

    cache["dense"] = []
    for k in range(1, len(config.dense_sizes) + 1):
        w, b = params[f"dense{k}.w"], params[f"dense{k}.b"]
        pre = ops.dense_forward(feat, w, b)
        act = ops.leaky_relu(pre, config.leaky_slope)
        mask = None
        if training and config.dropout_dense > 0:
            mask = ops.dropout_mask(act.shape, config.dropout_dense, rng, dtype)
            act = act * mask
        cache["dense"].append({"in": feat, "pre": pre, "mask": mask})
        feat = act

    logits = ops.dense_forward(feat, params["head.w"], params["head.b"])
    cache["head_in"] = feat
    sig = np.clip(ops.sigmoid(logits), _SIG_CLAMP, 1.0 - _SIG_CLAMP)
    y = 1.0 + 4.0 * sig
    cache["sig"] = sig
    cache["output"] = y
    return y, cache


def backward(ckpt: Checkpoint, cache: dict, d_y: np.ndarray) -> dict:
    """Gradients of a scalar loss w.r.t. every parameter, given dLoss/dOutput."""
    params, config = ckpt.params, ckpt.config
    dtype = cache["dtype"]
    grads = {}
    sig = cache["sig"]
    d_logits = (d_y * 4.0 * sig * (1.0 - sig)).astype(dtype)

    d_feat, dw, db = ops.dense_backward(d_logits, cache["head_in"], params["head.w"])
    grads["head.w"], grads["head.b"] = dw, db

    for k in range(len(config.dense_sizes), 0, -1):
        layer = cache["dense"][k - 1]
        if layer["mask"] is not None:
            d_feat = d_feat * layer["mask"]
        d_pre = d_feat * ops.leaky_relu_grad(layer["pre"], config.leaky_slope)
        d_feat, dw, db = ops.dense_backward(d_pre, layer["in"], params[f"dense{k}.w"])
        grads[f"dense{k}.w"], grads[f"dense{k}.b"] = dw, db

    if config.use_gru:
        layer_params = _gru_layer_params(params, config)
        d_seq, gru_grads = bigru_stack_backward(
            d_feat, cache["gru"], layer_params, config.gru_bidirectional)
        for j, layer in enumerate(gru_grads):
            for key, val in layer.items():
                grads[f"gru.l{j}.{key}"] = val
    else:
        d_seq = ops.max_over_axis_backward(d_feat, cache["time_idx"],
                                           cache["seq_shape"], axis=0)

    d_h = ops.max_over_axis_backward(d_seq.T, cache["freq_idx"],
                                     cache["conv_out_shape"], axis=2)

    for i in range(4, 0, -1):
        layer = cache["conv"][i - 1]
        if layer["mask"] is not None:
            d_h = d_h * layer["mask"]
        d_act = ops.maxpool2x2_backward(d_h, layer["pool_idx"], layer["act_shape"])
        d_pre = d_act * ops.leaky_relu_grad(layer["pre"], config.leaky_slope)
        d_h, dw, db = ops.conv3x3_backward(d_pre, params[f"conv{i}.w"],
                                           layer["cols"], layer["in_shape"])
        grads[f"conv{i}.w"], grads[f"conv{i}.b"] = dw, db
    return grads


def forward(ckpt: Checkpoint, features: FeatureBlock, training: bool = False,
            rng: Optional[np.random.Generator] = None) -> tuple:
    """Score one feature block; returns (MosPair, cache)."""
    y, cache = _forward_raw(ckpt.params, ckpt.config, features.data, training, rng)
    return MosPair(float(y[0]), float(y[1])), cache


def batch_loss_and_grads(ckpt: Checkpoint, batch: list, training: bool, rng) -> tuple:
    """MSE over the batch and both outputs, plus accumulated parameter gradients.

    loss = mean over 2*B terms of (pred - target)^2, so dLoss/dpred = err / B.
    """
    n = len(batch)
    grads = None
    loss_sum = 0.0
    for features, target in batch:
        data = features.data if isinstance(features, FeatureBlock) else np.asarray(features)
        y, cache = _forward_raw(ckpt.params, ckpt.config, data, training, rng)
        t = target.as_array() if isinstance(target, MosPair) else np.asarray(target, dtype=np.float64)
        err = y.astype(np.float64) - t
        loss_sum += float(err @ err)
        g = backward(ckpt, cache, err / n)
        if grads is None:
            grads = g
        else:
            for k in grads:
                grads[k] += g[k]
    loss = loss_sum / (2.0 * n)
    return loss, grads


def adam_update(ckpt: Checkpoint, grads: dict, lr: float,
                beta1: float = 0.9, beta2: float = 0.999, eps: float = 1e-8) -> None:
    """One bias-corrected Adam step, applied in place in fixed parameter order."""
    state = ckpt.adam
    state.step += 1
    t = state.step
    bc1 = 1.0 - beta1 ** t
    bc2 = 1.0 - beta2 ** t
    for name in ckpt.params:
        g = grads[name]
        m = state.m[name]
        v = state.v[name]
        m *= beta1
        m += (1.0 - beta1) * g
        v *= beta2
        v += (1.0 - beta2) * g * g
        ckpt.params[name] -= lr * (m / bc1) / (np.sqrt(v / bc2) + eps)


def train_step(ckpt: Checkpoint, batch: list, lr: float,
               rng: np.random.Generator) -> tuple:
    """One Adam step on a batch of (FeatureBlock, MosPair) pairs.

    Returns (checkpoint, pre-update loss). The checkpoint is updated in place;
    the caller owns it exclusively during training.
    """
    if not batch:
        raise ValueError("batch must be non-empty")
    loss, grads = batch_loss_and_grads(ckpt, batch, training=True, rng=rng)
    if not np.isfinite(loss):
        raise NonFiniteLossError(f"loss became {loss}")
    adam_update(ckpt, grads, lr)
    return ckpt, loss
