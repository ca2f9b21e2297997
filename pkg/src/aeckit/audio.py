"""Mono 16 kHz audio carrier and minimal RIFF/WAVE I/O.

Reads PCM16 and IEEE float32 WAV files (multichannel is averaged down to
mono), writes PCM16 mono with saturating clipping. No resampling: clips at
other rates are rejected at the pipeline boundary instead.
"""

from __future__ import annotations

import struct
from dataclasses import dataclass

import numpy as np

from .errors import (
    CorruptHeaderError,
    EmptyClipError,
    TrimExceedsLengthError,
    UnsupportedFormatError,
)

PIPELINE_RATE = 16000

_PCM_SCALE = 32768.0


@dataclass(frozen=True)
class AudioClip:
    """Immutable mono signal with amplitudes nominally in [-1, 1].

    Values may exceed [-1, 1] in memory (e.g. after a gain change);
    saturation is applied only when writing PCM16.
    """

    samples: np.ndarray
    sample_rate: int

    def __post_init__(self):
        samples = np.array(self.samples, dtype=np.float64, copy=True).reshape(-1)
        if samples.size and not np.all(np.isfinite(samples)):
            raise ValueError("clip samples must be finite")
        if int(self.sample_rate) <= 0:
            raise ValueError("sample_rate must be a positive integer")
        samples.setflags(write=False)
        object.__setattr__(self, "samples", samples)
        object.__setattr__(self, "sample_rate", int(self.sample_rate))

    def __len__(self) -> int:
        return self.samples.size

    @property
    def duration_s(self) -> float:
        return self.samples.size / self.sample_rate


def read_wav_bytes(data: bytes) -> AudioClip:
    """Parse a WAV file already loaded into memory."""
    if len(data) < 12 or data[:4] != b"RIFF" or data[8:12] != b"WAVE":
        raise CorruptHeaderError("not a RIFF/WAVE file")
    fmt = None
    payload = None
    pos = 12
    while pos + 8 <= len(data):
        chunk_id = data[pos:pos + 4]
        size = struct.unpack_from("<I", data, pos + 4)[0]
        body = data[pos + 8:pos + 8 + size]
        if chunk_id == b"fmt ":
            fmt = body
        elif chunk_id == b"data":
            if len(body) < size:
                raise CorruptHeaderError("data chunk truncated")
            payload = body
        pos += 8 + size + (size & 1)
    if fmt is None or payload is None:
        raise CorruptHeaderError("missing fmt or data chunk")
    if len(fmt) < 16:
        raise CorruptHeaderError("fmt chunk too short")
    tag, n_channels, rate, _byte_rate, _block, bits = struct.unpack_from("<HHIIHH", fmt, 0)
    if n_channels < 1 or rate <= 0:
        raise CorruptHeaderError("invalid channel count or sample rate")
    if tag == 1 and bits == 16:
        raw = np.frombuffer(payload, dtype="<i2")
        width = 2
    elif tag == 3 and bits == 32:
        raw = np.frombuffer(payload, dtype="<f4")
        width = 4
    else:
        raise UnsupportedFormatError(
            f"unsupported codec: format tag {tag}, {bits}-bit (need PCM16 or float32)"
        )
    n_frames = len(payload) // (width * n_channels)
    raw = raw[: n_frames * n_channels].reshape(n_frames, n_channels)
    samples = raw.astype(np.float64).mean(axis=1)
    if tag == 1:
        samples /= _PCM_SCALE
    else:
        if not np.all(np.isfinite(samples)):
            raise CorruptHeaderError("non-finite float samples")
        samples = np.clip(samples, -1.0, 1.0)
    return AudioClip(samples, rate)


def read_wav(path) -> AudioClip:
    """Read a WAV file from disk; multichannel input is averaged to mono."""
    with open(path, "rb") as fh:
        data = fh.read()
    return read_wav_bytes(data)


def wav_bytes(clip: AudioClip) -> bytes:
    """Serialize a clip as PCM16 mono WAV bytes, saturating out-of-range samples."""
    if len(clip) == 0:
        raise EmptyClipError("cannot write an empty clip")
    q = np.clip(np.round(clip.samples * _PCM_SCALE), -32768, 32767).astype("<i2")
    payload = q.tobytes()
    header = struct.pack(
        "<4sI4s4sIHHIIHH4sI",
        b"RIFF",
        36 + len(payload),
        b"WAVE",
        b"fmt ",
        16,
        1,                       # PCM
        1,                       # mono
        clip.sample_rate,
        clip.sample_rate * 2,
        2,
        16,
        b"data",
        len(payload),
    )
    return header + payload


def write_wav(clip: AudioClip, path) -> None:
    """Write a clip to disk as PCM16 mono."""
    data = wav_bytes(clip)
    with open(path, "wb") as fh:
        fh.write(data)


def scale_db(clip: AudioClip, delta_db: float) -> AudioClip:
    """Apply a gain of `delta_db` decibels. No clipping (that happens at write time)."""
    if not np.isfinite(delta_db):
        raise ValueError("delta_db must be finite")
    return AudioClip(clip.samples * 10.0 ** (delta_db / 20.0), clip.sample_rate)


def trim_leading_ms(clip: AudioClip, ms: float) -> AudioClip:
    """Drop round(ms * rate / 1000) samples from the start of the clip."""
    if ms < 0:
        raise ValueError("ms must be >= 0")
    n = int(round(ms * clip.sample_rate / 1000.0))
    if n >= len(clip):
        raise TrimExceedsLengthError(f"trimming {n} samples from a {len(clip)}-sample clip")
    return AudioClip(clip.samples[n:], clip.sample_rate)
