"""Finite-difference verification of the analytic backward pass."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from ..types import FeatureBlock
from .network import ModelConfig, batch_loss_and_grads, init_model


def tiny_config(use_gru: bool = True, dropout: float = 0.0, seed: int = 0) -> ModelConfig:
    """Small configuration used for gradient checks and probe training."""
    return ModelConfig(
        conv_channels=(2, 2, 2, 4),
        gru_layers=2,
        gru_hidden=3,
        dense_sizes=(8, 8),
        dropout_conv=dropout,
        gru_dropout=dropout,
        dropout_dense=dropout,
        use_gru=use_gru,
        seed=seed,
    )


@dataclass
class GradCheckReport:
    max_rel_error: float
    tolerance: float
    n_sampled: int
    n_refined: int
    worst_param: str
    worst_index: int
    analytic: float
    numeric: float

    @property
    def passed(self) -> bool:
        return self.max_rel_error < self.tolerance


def _probe_batch(config: ModelConfig, probe_shape: tuple, rng: np.random.Generator,
                 batch_size: int = 2) -> list:
    batch = []
    for _ in range(batch_size):
        x = rng.normal(-10.0, 5.0, size=probe_shape)
        target = rng.uniform(1.5, 4.5, size=2)
        batch.append((FeatureBlock(x), target))
    return batch


def gradient_check(config: ModelConfig, probe_shape: tuple = (3, 48, 17),
                   tolerance: float = 1e-4, n_samples: int = 200,
                   h: float = 1e-4, seed: int = 0) -> GradCheckReport:
    """Compare analytic gradients to central finite differences in float64.

    At least `n_samples` randomly chosen parameter coordinates are perturbed
    by +/-h. Dropout is off (forward passes run in inference mode), so the
    loss is a deterministic function of the parameters. Relative error uses a
    small-magnitude floor: |a - n| / max(|a|, |n|, 1e-4).

    Max pooling makes the loss piecewise smooth: when a +/-h interval
    straddles an argmax tie, the difference quotient picks up a kink term
    that has nothing to do with gradient correctness. Coordinates failing at
    the base step are therefore re-measured at h/16 and h/256; a genuinely
    wrong analytic gradient still fails, since the refined quotient converges
    to the true derivative.
    """
    rng = np.random.default_rng(seed)
    ckpt = init_model(config, dtype=np.float64)
    batch = _probe_batch(config, probe_shape, rng)

    _, grads = batch_loss_and_grads(ckpt, batch, training=False, rng=None)

    names = sorted(ckpt.params)
    sizes = np.array([ckpt.params[n].size for n in names])
    total = int(sizes.sum())
    n_take = min(n_samples, total)
    chosen = rng.choice(total, size=n_take, replace=False)
    offsets = np.cumsum(sizes) - sizes

    def central_diff(param, idx, step) -> float:
        orig = param.flat[idx]
        param.flat[idx] = orig + step
        loss_plus, _ = batch_loss_and_grads(ckpt, batch, training=False, rng=None)
        param.flat[idx] = orig - step
        loss_minus, _ = batch_loss_and_grads(ckpt, batch, training=False, rng=None)
        param.flat[idx] = orig
        return (loss_plus - loss_minus) / (2.0 * step)

    def rel_error(analytic, numeric) -> float:
        return abs(analytic - numeric) / max(abs(analytic), abs(numeric), 1e-4)

    worst = (0.0, "", 0, 0.0, 0.0)
    n_refined = 0
    for flat in sorted(int(c) for c in chosen):
        which = int(np.searchsorted(offsets, flat, side="right") - 1)
        name = names[which]
        idx = flat - int(offsets[which])
        analytic = float(grads[name].flat[idx])
        numeric = central_diff(ckpt.params[name], idx, h)
        rel = rel_error(analytic, numeric)
        if rel > tolerance:
            n_refined += 1
            for divisor in (16.0, 256.0):
                numeric = central_diff(ckpt.params[name], idx, h / divisor)
                rel = rel_error(analytic, numeric)
                if rel <= tolerance:
                    break
        if rel > worst[0]:
            worst = (rel, name, idx, analytic, numeric)
    return GradCheckReport(
        max_rel_error=worst[0],
        tolerance=tolerance,
        n_sampled=n_take,
        n_refined=n_refined,
        worst_param=worst[1],
        worst_index=worst[2],
        analytic=worst[3],
        numeric=worst[4],
    )
