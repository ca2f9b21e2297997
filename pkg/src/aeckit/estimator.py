"""scikit-learn style wrappers around the feature pipeline and the regressor.

`SpectrogramFeaturizer` is a stateless transformer (scoring requests in,
feature blocks out); `EchoMosRegressor` owns the network, its Adam training
loop and checkpointing, exposing the usual fit/predict/get_params surface so
the model composes with sklearn tooling (clone, pipelines, searches). X is a
sequence of ScoringRequest or FeatureBlock objects rather than a rectangular
matrix: clips have variable length by design.
"""

from __future__ import annotations

import numpy as np
from sklearn.base import BaseEstimator, RegressorMixin, TransformerMixin
from sklearn.exceptions import NotFittedError

from .dsp import StftConfig
from .features import ScoringRequest, assemble_features, micro_augment
from .nn.network import (
    Checkpoint,
    ModelConfig,
    forward,
    init_model,
    train_step,
)
from .types import FeatureBlock, MosPair


def check_requests(X) -> list:
    X = list(X)
    for i, item in enumerate(X):
        if not isinstance(item, ScoringRequest):
            raise TypeError(f"X[{i}] is {type(item).__name__}, expected ScoringRequest")
    return X


def check_feature_blocks(X) -> list:
    X = list(X)
    out = []
    for i, item in enumerate(X):
        if isinstance(item, FeatureBlock):
            out.append(item)
        else:
            arr = np.asarray(item)
            if arr.ndim != 3 or arr.shape[0] != 3:
                raise ValueError(f"X[{i}] has shape {arr.shape}, expected (3, frames, bins)")
            out.append(FeatureBlock(arr))
    return out


def check_mos_targets(y, n: int) -> np.ndarray:
    if y is None:
        raise ValueError("y is required")
    rows = [t.as_array() if isinstance(t, MosPair) else np.asarray(t, dtype=np.float64)
            for t in y]
    arr = np.vstack(rows) if rows else np.empty((0, 2))
    if arr.shape != (n, 2):
        raise ValueError(f"y has shape {arr.shape}, expected ({n}, 2)")
    if not np.all(np.isfinite(arr)) or arr.min() < 1.0 or arr.max() > 5.0:
        raise ValueError("targets must be finite MOS values in [1, 5]")
    return arr


class SpectrogramFeaturizer(TransformerMixin, BaseEstimator):
    """Turn scoring requests into stacked log-power spectrogram blocks."""

    def __init__(self, feature_mode="stft257", dft_size=512, hop=256,
                 stft_epsilon=1e-12, use_scenario_marker=True):
        self.feature_mode = feature_mode
        self.dft_size = dft_size
        self.hop = hop
        self.stft_epsilon = stft_epsilon
        self.use_scenario_marker = use_scenario_marker

    def _stft_config(self) -> StftConfig:
        return StftConfig(dft_size=self.dft_size, hop=self.hop, epsilon=self.stft_epsilon)

    def fit(self, X, y=None):
        self._stft_config()  # validate parameters
        return self

    def transform(self, X) -> list:
        cfg = self._stft_config()
        out = []
        for req in check_requests(X):
            if not self.use_scenario_marker:
                req = req.without_scenario()
            out.append(assemble_features(req, cfg, self.feature_mode))
        return out


class EchoMosRegressor(RegressorMixin, BaseEstimator):
    """CNN + bidirectional GRU regressor for (echo MOS, other MOS) pairs."""

    def __init__(self, conv_channels=(32, 64, 64, 128), gru_layers=2, gru_hidden=64,
                 gru_bidirectional=True, dense_sizes=(64, 64), leaky_slope=0.01,
                 dropout_conv=0.4, gru_dropout=0.2, dropout_dense=0.4,
                 feature_mode="stft257", use_scenario_marker=True, use_gru=True,
                 input_shift=0.0, input_scale=1.0,
                 epochs=10, lr=1e-3, lr_schedule="constant", label_clamp=0.0,
                 batch_size=10, augment=False,
                 stft_dft_size=512, stft_hop=256, stft_epsilon=1e-12,
                 seed=0, verbose=False):
        self.conv_channels = conv_channels
        self.gru_layers = gru_layers
        self.gru_hidden = gru_hidden
        self.gru_bidirectional = gru_bidirectional
        self.dense_sizes = dense_sizes
        self.leaky_slope = leaky_slope
        self.dropout_conv = dropout_conv
        self.gru_dropout = gru_dropout
        self.dropout_dense = dropout_dense
        self.feature_mode = feature_mode
        self.use_scenario_marker = use_scenario_marker
        self.use_gru = use_gru
        self.input_shift = input_shift
        self.input_scale = input_scale
        self.epochs = epochs
        self.lr = lr
        self.lr_schedule = lr_schedule
        self.label_clamp = label_clamp
        self.batch_size = batch_size
        self.augment = augment
        self.stft_dft_size = stft_dft_size
        self.stft_hop = stft_hop
        self.stft_epsilon = stft_epsilon
        self.seed = seed
        self.verbose = verbose

    # -- config plumbing --

    def _model_config(self) -> ModelConfig:
        return ModelConfig(
            conv_channels=tuple(self.conv_channels), gru_layers=self.gru_layers,
            gru_hidden=self.gru_hidden, gru_bidirectional=self.gru_bidirectional,
            dense_sizes=tuple(self.dense_sizes), leaky_slope=self.leaky_slope,
            dropout_conv=self.dropout_conv, gru_dropout=self.gru_dropout,
            dropout_dense=self.dropout_dense, feature_mode=self.feature_mode,
            use_scenario_marker=self.use_scenario_marker, use_gru=self.use_gru,
            input_shift=self.input_shift, input_scale=self.input_scale,
            seed=self.seed)

    def _stft_config(self) -> StftConfig:
        return StftConfig(dft_size=self.stft_dft_size, hop=self.stft_hop,
                          epsilon=self.stft_epsilon)

    @property
    def checkpoint_(self) -> Checkpoint:
        if not hasattr(self, "_checkpoint"):
            raise NotFittedError("this EchoMosRegressor is not fitted yet")
        return self._checkpoint

    @classmethod
    def from_checkpoint(cls, ckpt: Checkpoint) -> "EchoMosRegressor":
        cfg = ckpt.config
        est = cls(conv_channels=cfg.conv_channels, gru_layers=cfg.gru_layers,
                  gru_hidden=cfg.gru_hidden, gru_bidirectional=cfg.gru_bidirectional,
                  dense_sizes=cfg.dense_sizes, leaky_slope=cfg.leaky_slope,
                  dropout_conv=cfg.dropout_conv, gru_dropout=cfg.gru_dropout,
                  dropout_dense=cfg.dropout_dense, feature_mode=cfg.feature_mode,
                  use_scenario_marker=cfg.use_scenario_marker, use_gru=cfg.use_gru,
                  input_shift=cfg.input_shift, input_scale=cfg.input_scale,
                  stft_dft_size=ckpt.stft_config.dft_size,
                  stft_hop=ckpt.stft_config.hop,
                  stft_epsilon=ckpt.stft_config.epsilon, seed=cfg.seed)
        est._checkpoint = ckpt
        return est

    # -- featurization --

    def _featurize(self, request: ScoringRequest, rng=None) -> FeatureBlock:
        if not self.use_scenario_marker:
            request = request.without_scenario()
        if rng is not None and self.augment:
            clips = [request.near_mic, request.far_end, request.enhanced]
            pick = int(rng.integers(3))
            clips[pick] = micro_augment(clips[pick], rng)
            request = ScoringRequest(clips[0], clips[1], clips[2], request.scenario)
        return assemble_features(request, self._stft_config(), self.feature_mode)

    def _features_for(self, X, rng=None) -> list:
        if X and isinstance(X[0], ScoringRequest):
            return [self._featurize(req, rng) for req in check_requests(X)]
        return check_feature_blocks(X)

    # -- sklearn surface --

    def _step_lr(self, step: int, total_steps: int) -> float:
        """Per-step learning rate.

        "constant" uses self.lr everywhere. "cosine" ramps up linearly over
        the first 5% of steps, then decays along a cosine to 10% of the peak;
        the warmup avoids early saturation of the bounded output head and the
        decay settles the fit within a fixed epoch budget.
        """
        if self.lr_schedule == "constant":
            return self.lr
        if self.lr_schedule != "cosine":
            raise ValueError(f"unknown lr_schedule {self.lr_schedule!r}")
        warmup = max(1, int(0.05 * total_steps))
        if step < warmup:
            return self.lr * (step + 1) / warmup
        progress = (step - warmup) / max(1, total_steps - warmup)
        return self.lr * (0.1 + 0.9 * 0.5 * (1.0 + np.cos(np.pi * progress)))

    def fit(self, X, y) -> "EchoMosRegressor":
        X = list(X)
        if not X:
            raise ValueError("X must contain at least one example")
        targets = check_mos_targets(y, len(X))
        if self.label_clamp > 0.0:
            # keep targets strictly inside the sigmoid head's reachable range;
            # labels pinned at exactly 5.0 otherwise push head logits to
            # infinity and stall training by saturating the output gradient
            targets = np.clip(targets, 1.0 + self.label_clamp, 5.0 - self.label_clamp)
        seeds = np.random.SeedSequence(self.seed).spawn(3)
        init_cfg = self._model_config()
        ckpt = init_model(init_cfg, self._stft_config())
        shuffle_rng = np.random.default_rng(seeds[0])
        layer_rng = np.random.default_rng(seeds[1])
        augment_rng = np.random.default_rng(seeds[2])

        requests = X and isinstance(X[0], ScoringRequest)
        static_features = None if (requests and self.augment) else self._features_for(X)

        batches_per_epoch = -(-len(X) // self.batch_size)
        total_steps = self.epochs * batches_per_epoch
        step = 0
        self.history_ = []
        for epoch in range(self.epochs):
            features = static_features
            if features is None:
                features = self._features_for(X, rng=augment_rng)
            order = shuffle_rng.permutation(len(X))
            losses = []
            for start in range(0, len(order), self.batch_size):
                idx = order[start:start + self.batch_size]
                batch = [(features[i], targets[i]) for i in idx]
                ckpt, loss = train_step(ckpt, batch, self._step_lr(step, total_steps),
                                        layer_rng)
                step += 1
                losses.append(loss)
            epoch_loss = float(np.mean(losses))
            self.history_.append(epoch_loss)
            if self.verbose:
                print(f"epoch {epoch + 1}/{self.epochs} loss={epoch_loss:.6f}")
        self._checkpoint = ckpt
        self.n_iter_ = self.epochs
        return self

    def predict(self, X) -> np.ndarray:
        ckpt = self.checkpoint_
        features = self._features_for(X)
        out = np.empty((len(features), 2), dtype=np.float64)
        for i, block in enumerate(features):
            pair, _ = forward(ckpt, block, training=False)
            out[i, 0] = pair.echo_mos
            out[i, 1] = pair.other_mos
        return out

    def predict_pairs(self, X) -> list:
        return [MosPair(e, o) for e, o in self.predict(X)]
