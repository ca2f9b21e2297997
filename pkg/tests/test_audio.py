import struct

import numpy as np
import pytest

from aeckit.audio import (
    AudioClip,
    read_wav,
    read_wav_bytes,
    scale_db,
    trim_leading_ms,
    wav_bytes,
    write_wav,
)
from aeckit.errors import (
    CorruptHeaderError,
    EmptyClipError,
    TrimExceedsLengthError,
    UnsupportedFormatError,
)


def make_clip(samples, rate=16000):
    return AudioClip(np.asarray(samples, dtype=np.float64), rate)


class TestReadWav:
    def test_silence_file(self, tmp_path):
        path = tmp_path / "silence.wav"
        write_wav(make_clip(np.zeros(16000)), path)
        clip = read_wav(path)
        assert len(clip) == 16000
        assert clip.sample_rate == 16000
        assert np.all(clip.samples == 0.0)

    def test_pcm16_min_maps_to_minus_one(self, tmp_path):
        payload = struct.pack("<h", -32768)
        data = _pcm16_wav(payload, channels=1)
        clip = read_wav_bytes(data)
        assert clip.samples[0] == -1.0

    def test_stereo_averaged(self):
        frame = struct.pack("<hh", 16384, -16384)  # 0.5, -0.5
        clip = read_wav_bytes(_pcm16_wav(frame, channels=2))
        assert clip.samples[0] == 0.0

    def test_float32_payload(self):
        payload = struct.pack("<4f", 0.25, -0.25, 0.5, -1.0)
        clip = read_wav_bytes(_float32_wav(payload))
        assert np.allclose(clip.samples, [0.25, -0.25, 0.5, -1.0])

    def test_missing_file(self, tmp_path):
        with pytest.raises(FileNotFoundError):
            read_wav(tmp_path / "nope.wav")

    def test_not_riff(self):
        with pytest.raises(CorruptHeaderError):
            read_wav_bytes(b"OGGS" + b"\x00" * 40)

    def test_unsupported_codec(self):
        data = _pcm16_wav(b"\x00\x00", channels=1)
        # flip the format tag to 2 (ADPCM)
        data = data[:20] + struct.pack("<H", 2) + data[22:]
        with pytest.raises(UnsupportedFormatError):
            read_wav_bytes(data)

    def test_skips_extra_chunks(self):
        body = _pcm16_wav(struct.pack("<h", 8192), channels=1)
        # splice a LIST chunk between fmt and data
        fmt_end = 12 + 8 + 16
        extra = b"LIST" + struct.pack("<I", 4) + b"INFO"
        data = body[:fmt_end] + extra + body[fmt_end:]
        data = data[:4] + struct.pack("<I", len(data) - 8) + data[8:]
        clip = read_wav_bytes(data)
        assert clip.samples[0] == pytest.approx(0.25)


class TestWriteWav:
    def test_round_trip_quantization_bound(self, tmp_path):
        path = tmp_path / "x.wav"
        write_wav(make_clip(np.full(160, 0.25)), path)
        clip = read_wav(path)
        assert np.max(np.abs(clip.samples - 0.25)) <= 1.0 / 32768

    def test_saturates_above_full_scale(self):
        data = wav_bytes(make_clip([1.5]))
        value = struct.unpack("<h", data[-2:])[0]
        assert value == 32767

    def test_empty_clip_rejected(self, tmp_path):
        with pytest.raises(EmptyClipError):
            write_wav(AudioClip(np.empty(0), 16000), tmp_path / "e.wav")

    def test_random_round_trip_property(self, tmp_path):
        rng = np.random.default_rng(7)
        for trial in range(20):
            samples = rng.uniform(-1.0, 1.0, size=rng.integers(1, 4000))
            path = tmp_path / f"rt{trial}.wav"
            write_wav(make_clip(samples), path)
            back = read_wav(path)
            assert len(back) == len(samples)
            assert np.max(np.abs(back.samples - samples)) <= 1.0 / 32768


class TestScaleDb:
    def test_zero_is_identity(self):
        clip = make_clip([0.1, -0.2, 0.3])
        out = scale_db(clip, 0.0)
        assert np.array_equal(out.samples, clip.samples)

    def test_half_db_gain_factor(self):
        out = scale_db(make_clip([1.0]), 0.5)
        assert out.samples[0] == pytest.approx(1.0592537251772889, abs=1e-12)

    def test_minus_twenty_db(self):
        out = scale_db(make_clip(np.ones(10)), -20.0)
        assert np.allclose(out.samples, 0.1)

    def test_round_trip_inverse(self):
        rng = np.random.default_rng(3)
        clip = make_clip(rng.uniform(-1, 1, 500))
        for db in (0.5, 3.0, 17.2, -9.4):
            back = scale_db(scale_db(clip, db), -db)
            assert np.allclose(back.samples, clip.samples, rtol=1e-9)

    def test_no_clipping_in_memory(self):
        out = scale_db(make_clip([0.9]), 6.0)
        assert out.samples[0] > 1.0


class TestTrim:
    def test_ten_ms_at_16k(self):
        clip = make_clip(np.arange(16000) / 16000.0)
        out = trim_leading_ms(clip, 10)
        assert len(out) == 16000 - 160
        assert out.samples[0] == clip.samples[160]

    def test_zero_is_identity(self):
        clip = make_clip([0.1, 0.2])
        assert np.array_equal(trim_leading_ms(clip, 0).samples, clip.samples)

    def test_trim_longer_than_clip(self):
        with pytest.raises(TrimExceedsLengthError):
            trim_leading_ms(make_clip(np.zeros(100)), 10)


def _pcm16_wav(payload: bytes, channels: int, rate: int = 16000) -> bytes:
    header = struct.pack(
        "<4sI4s4sIHHIIHH4sI", b"RIFF", 36 + len(payload), b"WAVE", b"fmt ", 16,
        1, channels, rate, rate * 2 * channels, 2 * channels, 16, b"data", len(payload))
    return header + payload


def _float32_wav(payload: bytes, rate: int = 16000) -> bytes:
    header = struct.pack(
        "<4sI4s4sIHHIIHH4sI", b"RIFF", 36 + len(payload), b"WAVE", b"fmt ", 16,
        3, 1, rate, rate * 4, 4, 32, b"data", len(payload))
    return header + payload
