"""From signal triples to network input, plus label rules and the scoring entry point.

A scoring request carries the near-end microphone, far-end and enhanced
signals. When a scenario is supplied, each time-domain signal is prefixed with
a 512-sample constant activity marker (1.0 if that signal is active in the
scenario, else 0.0; the enhanced signal counts as always active) before the
spectrograms are computed. The marker length equals one DFT window so it
occupies a whole number of leading frames and leaves the rest of the feature
matrix untouched.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Optional

import numpy as np

from .audio import PIPELINE_RATE, AudioClip, scale_db, trim_leading_ms
from .dsp import StftConfig, log_power_spectrogram, mel_log_power_spectrogram
from .errors import (
    EmptyClipError,
    MissingRatingError,
    RatingOutOfRangeError,
    SampleRateMismatchError,
)
from .types import FeatureBlock, MosPair, Scenario

MARKER_SAMPLES = 512
AUGMENT_GAIN_DB = 0.5
AUGMENT_TRIM_MS = 10.0


@dataclass(frozen=True)
class ScoringRequest:
    """(near mic, far end, enhanced) triple; clips are tail-padded to equal length."""

    near_mic: AudioClip
    far_end: AudioClip
    enhanced: AudioClip
    scenario: Optional[Scenario] = None

    def __post_init__(self):
        clips = {"near_mic": self.near_mic, "far_end": self.far_end, "enhanced": self.enhanced}
        for name, clip in clips.items():
            if len(clip) == 0:
                raise EmptyClipError(f"{name} clip is empty")
            if clip.sample_rate != PIPELINE_RATE:
                raise SampleRateMismatchError(
                    f"{name} is {clip.sample_rate} Hz; the pipeline requires {PIPELINE_RATE} Hz")
        target = max(len(c) for c in clips.values())
        for name, clip in clips.items():
            if len(clip) < target:
                padded = np.pad(clip.samples, (0, target - len(clip)))
                object.__setattr__(self, name, AudioClip(padded, PIPELINE_RATE))

    def without_scenario(self) -> "ScoringRequest":
        if self.scenario is None:
            return self
        return ScoringRequest(self.near_mic, self.far_end, self.enhanced, None)


def _marker_active(name: str, scenario: Scenario) -> bool:
    if name == "near":
        return scenario.near_active
    if name == "far":
        return scenario.far_active
    return True  # enhanced


def _prefix_marker(clip: AudioClip, active: bool) -> AudioClip:
    block = np.full(MARKER_SAMPLES, 1.0 if active else 0.0)
    return AudioClip(np.concatenate([block, clip.samples]), clip.sample_rate)


def assemble_features(req: ScoringRequest, cfg: StftConfig = StftConfig(),
                      feature_mode: str = "stft257") -> FeatureBlock:
    """Stack the three log-power spectrograms in (near, far, enhanced) order."""
    signals = [("near", req.near_mic), ("far", req.far_end), ("enhanced", req.enhanced)]
    if req.scenario is not None:
        signals = [(name, _prefix_marker(clip, _marker_active(name, req.scenario)))
                   for name, clip in signals]
    channels = []
    for _, clip in signals:
        if feature_mode == "mel160":
            spec = mel_log_power_spectrogram(clip, cfg, n_mels=160)
        elif feature_mode == "stft257":
            spec = log_power_spectrogram(clip, cfg)
        else:
            raise ValueError(f"unknown feature_mode {feature_mode!r}")
        channels.append(spec.values)
    return FeatureBlock(np.stack(channels))


def micro_augment(clip: AudioClip, rng: np.random.Generator) -> AudioClip:
    """One uniformly chosen imperceptible perturbation.

    Either nothing, dropping the first 10 ms, or a +/-0.5 dB gain change.
    """
    choice = int(rng.integers(4))
    if choice == 0:
        return clip
    if choice == 1:
        return trim_leading_ms(clip, AUGMENT_TRIM_MS)
    if choice == 2:
        return scale_db(clip, AUGMENT_GAIN_DB)
    return scale_db(clip, -AUGMENT_GAIN_DB)


def derive_training_label(scenario: Scenario, rated_echo: Optional[float] = None,
                          rated_other: Optional[float] = None) -> MosPair:
    """Fill in the axis a scenario pins at 5 and pass the rated axis through.

    Near-end single talk has no echo to rate, so its echo label is 5; far-end
    single talk has no near speech to degrade, so its other label is 5;
    double talk requires both ratings.
    """
    def _check(name, value):
        if value is None:
            raise MissingRatingError(f"{scenario.value} requires {name}")
        if not 1.0 <= value <= 5.0:
            raise RatingOutOfRangeError(f"{name}={value} outside [1, 5]")
        return float(value)

    if scenario is Scenario.NEAR_END_SINGLE_TALK:
        return MosPair(5.0, _check("rated_other", rated_other))
    if scenario is Scenario.FAR_END_SINGLE_TALK:
        return MosPair(_check("rated_echo", rated_echo), 5.0)
    return MosPair(_check("rated_echo", rated_echo), _check("rated_other", rated_other))


def score(ckpt, req: ScoringRequest) -> MosPair:
    """Score a request with a loaded checkpoint (inference mode, deterministic).

    If the checkpoint was trained without scenario markers the request's
    scenario is ignored, since the model never saw marker frames.
    """
    from .nn.network import forward

    if not ckpt.config.use_scenario_marker:
        req = req.without_scenario()
    features = assemble_features(req, ckpt.stft_config, ckpt.config.feature_mode)
    pair, _ = forward(ckpt, features, training=False)
    return pair
