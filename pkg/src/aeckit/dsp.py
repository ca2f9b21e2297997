"""Spectral primitives: log-power STFT, Mel variant, and the classical ERLE metric.

Framing contract: frames = 1 + floor(max(0, N - dft_size) / hop); a clip shorter
than one window yields a single zero-padded frame. No centering or reflect
padding. The analysis window is a periodic Hann window (the usual choice for
50%-overlap analysis). Log values use the natural log with an epsilon power
floor so silence maps to ln(epsilon) instead of -inf.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .audio import AudioClip
from .errors import EmptyClipError, LengthMismatchError, SilentReferenceError

ERLE_POWER_FLOOR = 1e-12


@dataclass(frozen=True)
class StftConfig:
    dft_size: int = 512
    hop: int = 256
    window: str = "hann"
    epsilon: float = 1e-12

    def __post_init__(self):
        if self.dft_size < 2 or self.dft_size & (self.dft_size - 1):
            raise ValueError("dft_size must be a power of two")
        if not 0 < self.hop <= self.dft_size:
            raise ValueError("hop must satisfy 0 < hop <= dft_size")
        if self.window != "hann":
            raise ValueError(f"unsupported window {self.window!r}")
        if self.epsilon <= 0:
            raise ValueError("epsilon must be positive")

    @property
    def n_bins(self) -> int:
        return self.dft_size // 2 + 1


@dataclass(frozen=True)
class Spectrogram:
    """frames x bins matrix of log-power values (natural log)."""

    values: np.ndarray

    def __post_init__(self):
        values = np.asarray(self.values, dtype=np.float64)
        if values.ndim != 2:
            raise ValueError("spectrogram values must be 2-D (frames x bins)")
        object.__setattr__(self, "values", values)

    @property
    def n_frames(self) -> int:
        return self.values.shape[0]

    @property
    def n_bins(self) -> int:
        return self.values.shape[1]


def hann_window(n: int) -> np.ndarray:
    """Periodic Hann window of length n."""
    return 0.5 - 0.5 * np.cos(2.0 * np.pi * np.arange(n) / n)


def frame_count(n_samples: int, cfg: StftConfig) -> int:
    return 1 + max(0, n_samples - cfg.dft_size) // cfg.hop


def _power_frames(clip: AudioClip, cfg: StftConfig) -> np.ndarray:
    """Linear power spectrum per frame, shape (frames, dft_size/2 + 1)."""
    if len(clip) == 0:
        raise EmptyClipError("cannot compute a spectrogram of an empty clip")
    x = clip.samples
    if x.size < cfg.dft_size:
        x = np.pad(x, (0, cfg.dft_size - x.size))
    n_frames = frame_count(len(clip), cfg)
    frames = np.lib.stride_tricks.sliding_window_view(x, cfg.dft_size)[:: cfg.hop][:n_frames]
    windowed = frames * hann_window(cfg.dft_size)
    spectrum = np.fft.rfft(windowed, axis=1)
    return spectrum.real**2 + spectrum.imag**2


def log_power_spectrogram(clip: AudioClip, cfg: StftConfig = StftConfig()) -> Spectrogram:
    """Log-power STFT: value[t][k] = ln(|X_t[k]|^2 + epsilon)."""
    return Spectrogram(np.log(_power_frames(clip, cfg) + cfg.epsilon))


def mel_frequency(hz):
    """HTK Mel scale: 2595 * log10(1 + f / 700)."""
    return 2595.0 * np.log10(1.0 + np.asarray(hz, dtype=np.float64) / 700.0)


def _triangle_means(left: float, center: float, right: float,
                    lo: np.ndarray, hi: np.ndarray) -> np.ndarray:
    """Mean of a unit triangle (corners left/center/right) over each [lo, hi] interval."""
    lo = np.asarray(lo, dtype=np.float64)
    hi = np.asarray(hi, dtype=np.float64)
    # rising segment [left, center]
    a = np.clip(lo, left, center)
    b = np.clip(hi, left, center)
    rise = ((b - left) ** 2 - (a - left) ** 2) / (2.0 * (center - left)) if center > left else 0.0
    # falling segment [center, right]
    a = np.clip(lo, center, right)
    b = np.clip(hi, center, right)
    fall = ((right - a) ** 2 - (right - b) ** 2) / (2.0 * (right - center)) if right > center else 0.0
    return (rise + fall) / (hi - lo)


def mel_filterbank(n_mels: int, n_bins: int, sample_rate: int = 16000,
                   f_min: float = 0.0, f_max: float | None = None) -> np.ndarray:
    """Triangular Mel filterbank, shape (n_mels, n_bins), unit peak per filter.

    Corners are equally spaced on the HTK Mel scale. Each filter is the
    triangle's mean response over every FFT bin's frequency interval rather
    than a point sample at the bin center: with many filters on few bins
    (e.g. 160 filters over 257 bins) point sampling leaves empty filters,
    whereas the interval mean keeps every row strictly positive.
    """
    if n_mels < 1:
        raise ValueError("n_mels must be >= 1")
    if n_mels > n_bins:
        raise ValueError("n_mels must not exceed the number of FFT bins")
    if f_max is None:
        f_max = sample_rate / 2.0
    mel_pts = np.linspace(float(mel_frequency(f_min)), float(mel_frequency(f_max)), n_mels + 2)
    hz_pts = 700.0 * (10.0 ** (mel_pts / 2595.0) - 1.0)
    bin_width = (sample_rate / 2.0) / (n_bins - 1)
    centers = np.arange(n_bins) * bin_width
    lo = centers - bin_width / 2.0
    hi = centers + bin_width / 2.0
    weights = np.empty((n_mels, n_bins))
    for m in range(n_mels):
        weights[m] = _triangle_means(hz_pts[m], hz_pts[m + 1], hz_pts[m + 2], lo, hi)
    weights /= weights.max(axis=1, keepdims=True)
    return weights


def mel_log_power_spectrogram(clip: AudioClip, cfg: StftConfig = StftConfig(),
                              n_mels: int = 160) -> Spectrogram:
    """Mel-warped log-power spectrogram: the filterbank is applied to linear power."""
    power = _power_frames(clip, cfg)
    fb = mel_filterbank(n_mels, power.shape[1], f_max=8000.0)
    return Spectrogram(np.log(power @ fb.T + cfg.epsilon))


def erle_db(mic: AudioClip, residual: AudioClip) -> float:
    """Echo return loss enhancement in dB.

    `mic` is the microphone pickup of the far-end signal (echo, no
    suppression); `residual` is what remains after cancellation. Returns
    10*log10(mean(mic^2) / mean(residual^2)) with the denominator floored at
    1e-12 so a perfectly silent residual yields a large finite value.
    """
    if len(mic) == 0 or len(residual) == 0:
        raise EmptyClipError("ERLE inputs must be non-empty")
    if len(mic) != len(residual):
        raise LengthMismatchError(f"mic has {len(mic)} samples, residual {len(residual)}")
    p_mic = float(np.mean(mic.samples**2))
    p_res = float(np.mean(residual.samples**2))
    if p_mic < ERLE_POWER_FLOOR:
        raise SilentReferenceError("microphone signal is silent; ERLE undefined")
    return 10.0 * np.log10(p_mic / max(p_res, ERLE_POWER_FLOOR))
