import json

import numpy as np
import pytest

from aeckit.audio import AudioClip
from aeckit.errors import LengthMismatchError
from aeckit.synthdata import (
    DEFAULT_MIX,
    NOMINAL_SPEECH_POWER,
    ScenarioSpec,
    SyntheticAec,
    _apply_with_residual,
    _simulate,
    _spectral_dropout,
    apply_synthetic_aec,
    build_dataset,
    gen_speech_like,
    graded_roster,
    largest_remainder_counts,
    load_manifest,
    oracle_mos,
    simulate_scenario,
)
from aeckit.types import MosPair, Scenario

RATE = 16000


def spec_for(scenario, seed=0, noise=None, gain=-6.0, delay=50.0, thr=1.0):
    return ScenarioSpec(scenario=scenario, duration_s=3.0, echo_delay_ms=delay,
                        echo_gain_db=gain, echo_nonlinearity=thr,
                        noise_floor_db=noise, seed=seed)


class TestGenSpeechLike:
    def test_deterministic(self):
        a = gen_speech_like(3.0, 42)
        b = gen_speech_like(3.0, 42)
        assert np.array_equal(a.samples, b.samples)

    def test_sample_count(self):
        assert len(gen_speech_like(3.0, 1)) == 48000

    def test_peak_normalized(self):
        clip = gen_speech_like(4.0, 7)
        assert np.max(np.abs(clip.samples)) == pytest.approx(0.5)

    def test_silence_gaps_present(self):
        clip = gen_speech_like(10.0, 3)
        windows = clip.samples[: len(clip) // 320 * 320].reshape(-1, 320)
        rms = np.sqrt((windows**2).mean(axis=1))
        assert np.mean(rms < 0.01) >= 0.2

    def test_duration_bounds(self):
        with pytest.raises(ValueError):
            gen_speech_like(0.5, 0)


class TestSimulateScenario:
    def test_near_single_talk_far_silent(self):
        near, far, mic = simulate_scenario(spec_for(Scenario.NEAR_END_SINGLE_TALK))
        assert np.all(far.samples == 0.0)
        assert np.array_equal(mic.samples, near.samples)  # no echo, no noise

    def test_far_single_talk_is_scaled_delayed_echo(self):
        spec = spec_for(Scenario.FAR_END_SINGLE_TALK, gain=-6.0)
        near, far, mic = simulate_scenario(spec)
        assert np.all(near.samples == 0.0)
        delay = int(round(spec.echo_delay_ms * 16))
        expected = np.zeros_like(far.samples)
        expected[delay:] = far.samples[:-delay] * 10 ** (-6.0 / 20.0)
        assert np.allclose(mic.samples, expected)
        assert np.max(np.abs(mic.samples)) == pytest.approx(
            0.5 * 10 ** (-6.0 / 20.0), rel=1e-12)

    def test_cross_correlation_peaks_at_delay(self):
        spec = spec_for(Scenario.FAR_END_SINGLE_TALK, seed=5, delay=123.0)
        _, far, mic = simulate_scenario(spec)
        corr = np.correlate(mic.samples, far.samples, mode="full")
        lag = int(np.argmax(corr)) - (len(far) - 1)
        assert lag == int(round(123.0 * 16))

    def test_double_talk_has_both(self):
        near, far, mic = simulate_scenario(spec_for(Scenario.DOUBLE_TALK, seed=2))
        assert np.any(near.samples != 0) and np.any(far.samples != 0)

    def test_noise_floor_level(self):
        spec = spec_for(Scenario.NEAR_END_SINGLE_TALK, seed=3, noise=-40.0)
        near, _, mic = simulate_scenario(spec)
        noise = mic.samples - near.samples
        rms = float(np.sqrt(np.mean(noise**2)))
        assert rms == pytest.approx(10 ** (-40.0 / 20.0), rel=0.05)

    def test_nonlinearity_clips_echo(self):
        spec = spec_for(Scenario.FAR_END_SINGLE_TALK, gain=-3.0, thr=0.2)
        _, _, mic = simulate_scenario(spec)
        assert np.max(np.abs(mic.samples)) <= 0.2 + 1e-12


class TestApplySyntheticAec:
    def setup_method(self):
        self.sim = _simulate(spec_for(Scenario.DOUBLE_TALK, seed=9, noise=-50.0))

    def test_identity_aec_is_exact(self):
        aec = SyntheticAec("id0", 0.0, 0.0)
        out = apply_synthetic_aec(self.sim.mic, self.sim.far_end, aec, self.sim.echo)
        assert np.array_equal(out.samples, self.sim.mic.samples)

    def test_suppression_scales_residual_power(self):
        aec = SyntheticAec("id1", 60.0, 0.0)
        rng = np.random.default_rng(0)
        enhanced, residual = _apply_with_residual(self.sim.mic, aec, self.sim.echo, rng)
        p_echo = np.mean(self.sim.echo.samples**2)
        p_res = np.mean(residual.samples**2)
        assert p_res / p_echo == pytest.approx(10 ** (-60.0 / 10.0), rel=1e-9)
        # enhanced is near + noise + attenuated echo
        recon = self.sim.mic.samples - self.sim.echo.samples + residual.samples
        assert np.allclose(enhanced.samples, recon)

    def test_dropout_fraction_binomial(self):
        x = gen_speech_like(3.0, 11).samples
        _, dropped, total = _spectral_dropout(x, 0.5, np.random.default_rng(1))
        assert abs(dropped / total - 0.5) < 4 * np.sqrt(0.25 / total)

    def test_dropout_removes_energy(self):
        aec = SyntheticAec("id2", 0.0, 0.5)
        rng = np.random.default_rng(2)
        enhanced, _ = _apply_with_residual(self.sim.mic, aec, self.sim.echo, rng)
        near_part = self.sim.mic.samples - self.sim.echo.samples
        damaged = enhanced.samples - self.sim.echo.samples
        assert np.mean(damaged**2) < 0.8 * np.mean(near_part**2)

    def test_length_mismatch(self):
        short = AudioClip(np.zeros(100), RATE)
        with pytest.raises(LengthMismatchError):
            apply_synthetic_aec(self.sim.mic, short, SyntheticAec("x", 0, 0), self.sim.echo)


class TestOracleMos:
    def clip(self, samples):
        return AudioClip(samples, RATE)

    def test_perfect_double_talk(self):
        near = gen_speech_like(3.0, 1)
        zero = self.clip(np.zeros(len(near)))
        pair = oracle_mos(near, zero, near, Scenario.DOUBLE_TALK)
        assert pair == MosPair(5.0, 5.0)

    def test_midpoint_of_echo_ramp(self):
        # construct a perceived level of exactly -22.5: power ratio 10^-4.5
        n = 48000
        p_near = 0.01
        ratio = 10.0 ** -4.5
        p_res = ratio * p_near / (1.0 - ratio)
        near = self.clip(np.full(n, np.sqrt(p_near)))
        residual = self.clip(np.full(n, np.sqrt(p_res)))
        enhanced = self.clip(near.samples + residual.samples)
        pair = oracle_mos(near, residual, enhanced, Scenario.DOUBLE_TALK)
        assert pair.echo_mos == pytest.approx(3.0, abs=1e-5)

    def test_near_single_talk_pins_echo_at_five(self):
        rng = np.random.default_rng(3)
        near = self.clip(rng.uniform(-0.4, 0.4, 48000))
        residual = self.clip(rng.uniform(-0.4, 0.4, 48000))  # even loud "echo"
        pair = oracle_mos(near, residual, near, Scenario.NEAR_END_SINGLE_TALK)
        assert pair.echo_mos == 5.0

    def test_far_single_talk_pins_other_at_five(self):
        zeros = self.clip(np.zeros(48000))
        residual = self.clip(np.full(48000, 0.1))
        pair = oracle_mos(zeros, residual, residual, Scenario.FAR_END_SINGLE_TALK)
        assert pair.other_mos == 5.0
        assert pair.echo_mos < 5.0

    def test_echo_mos_monotone_in_residual_energy(self):
        near = gen_speech_like(3.0, 5)
        base = gen_speech_like(3.0, 6).samples
        last = None
        for scale in (1e-6, 1e-4, 1e-3, 1e-2, 1e-1, 1.0):
            residual = self.clip(base * scale)
            enhanced = self.clip(near.samples + residual.samples)
            pair = oracle_mos(near, residual, enhanced, Scenario.DOUBLE_TALK)
            if last is not None:
                assert pair.echo_mos <= last + 1e-12
            last = pair.echo_mos

    def test_other_mos_monotone_in_distortion(self):
        sim = _simulate(spec_for(Scenario.DOUBLE_TALK, seed=21, noise=-60.0))
        last = None
        for frac in (0.0, 0.1, 0.25, 0.5, 0.75):
            aec = SyntheticAec("sweep", 30.0, frac)
            enhanced, residual = _apply_with_residual(
                sim.mic, aec, sim.echo, np.random.default_rng(77))
            pair = oracle_mos(sim.near_speech, residual, enhanced, Scenario.DOUBLE_TALK)
            if last is not None:
                assert pair.other_mos <= last + 1e-9
            last = pair.other_mos

    def test_ordering_fidelity_over_fst_clips(self):
        # mean echo MOS must strictly increase with suppression, fixed distortion
        suppressions = [0.0, 15.0, 30.0, 45.0, 60.0]
        means = []
        for supp in suppressions:
            aec = SyntheticAec("sweep", supp, 0.0)
            scores = []
            for seed in range(100):
                sim = _simulate(spec_for(Scenario.FAR_END_SINGLE_TALK, seed=seed,
                                         noise=-60.0, gain=-3.0 - (seed % 20)))
                _, residual = _apply_with_residual(sim.mic, aec, sim.echo, None)
                pair = oracle_mos(sim.near_speech, residual,
                                  AudioClip(sim.mic.samples - sim.echo.samples
                                            + residual.samples, RATE),
                                  Scenario.FAR_END_SINGLE_TALK)
                scores.append(pair.echo_mos)
            means.append(float(np.mean(scores)))
        assert all(b > a for a, b in zip(means, means[1:])), means

    def test_length_mismatch(self):
        with pytest.raises(LengthMismatchError):
            oracle_mos(self.clip(np.zeros(10)), self.clip(np.zeros(20)),
                       self.clip(np.zeros(10)), Scenario.DOUBLE_TALK)


class TestLargestRemainder:
    def test_default_mix_100(self):
        # independent check: quotas 45.6 / 26.7 / 27.7 -> floors 45/26/27,
        # two leftover slots go to the two largest remainders (fst, dt)
        assert largest_remainder_counts(100, DEFAULT_MIX) == [45, 27, 28]

    def test_sums_match_for_many_n(self):
        for n in (1, 7, 24, 100, 333, 600):
            counts = largest_remainder_counts(n, DEFAULT_MIX)
            assert sum(counts) == n

    def test_matches_brute_oracle(self):
        rng = np.random.default_rng(8)
        for _ in range(50):
            raw = rng.uniform(0.1, 1.0, 3)
            mix = tuple(raw / raw.sum())
            n = int(rng.integers(1, 500))
            quotas = [n * m for m in mix]
            floors = [int(np.floor(q)) for q in quotas]
            rems = [q - f for q, f in zip(quotas, floors)]
            want = floors[:]
            for i in sorted(range(3), key=lambda i: (-rems[i], i))[: n - sum(floors)]:
                want[i] += 1
            assert largest_remainder_counts(n, mix) == want


class TestBuildDataset:
    def test_manifest_and_files(self, tmp_path):
        manifest = build_dataset(10, out_dir=tmp_path, seed=1, duration_range=(3.0, 3.2))
        assert len(manifest.entries) == 10
        for entry in manifest.entries:
            for rel in (entry.near, entry.far, entry.enhanced):
                assert (tmp_path / rel).exists()
            assert 1.0 <= entry.echo_mos <= 5.0
            assert 1.0 <= entry.other_mos <= 5.0

    def test_counts_follow_mix(self, tmp_path):
        manifest = build_dataset(24, out_dir=tmp_path, seed=2, duration_range=(3.0, 3.1))
        counts = manifest.counts_by_scenario()
        assert [counts["nst"], counts["fst"], counts["dt"]] == \
            largest_remainder_counts(24, DEFAULT_MIX)

    def test_round_robin_roster(self, tmp_path):
        roster = graded_roster(5)
        manifest = build_dataset(10, aec_roster=roster, out_dir=tmp_path, seed=3,
                                 duration_range=(3.0, 3.1))
        usage = {}
        for entry in manifest.entries:
            usage[entry.aec_id] = usage.get(entry.aec_id, 0) + 1
        assert usage == {aec.id: 2 for aec in roster}

    def test_deterministic_manifest_bytes(self, tmp_path):
        a = build_dataset(8, out_dir=tmp_path / "a", seed=7, duration_range=(3.0, 3.1))
        b = build_dataset(8, out_dir=tmp_path / "b", seed=7, duration_range=(3.0, 3.1))
        bytes_a = (tmp_path / "a" / "manifest.json").read_bytes()
        bytes_b = (tmp_path / "b" / "manifest.json").read_bytes()
        assert bytes_a == bytes_b
        for ea, eb in zip(a.entries, b.entries):
            wav_a = (tmp_path / "a" / ea.enhanced).read_bytes()
            wav_b = (tmp_path / "b" / eb.enhanced).read_bytes()
            assert wav_a == wav_b

    def test_parallel_generation_is_deterministic(self, tmp_path, monkeypatch):
        build_dataset(6, out_dir=tmp_path / "seq", seed=11, duration_range=(3.0, 3.1))
        monkeypatch.setenv("AECKIT_THREADS", "3")
        build_dataset(6, out_dir=tmp_path / "par", seed=11, duration_range=(3.0, 3.1))
        assert (tmp_path / "seq/manifest.json").read_bytes() == \
            (tmp_path / "par/manifest.json").read_bytes()
        assert (tmp_path / "seq/clip_00003_enhanced.wav").read_bytes() == \
            (tmp_path / "par/clip_00003_enhanced.wav").read_bytes()

    def test_manifest_round_trip(self, tmp_path):
        manifest = build_dataset(6, out_dir=tmp_path, seed=4, duration_range=(3.0, 3.1))
        loaded = load_manifest(tmp_path / "manifest.json")
        assert loaded.mix == manifest.mix
        assert loaded.entries == manifest.entries
        doc = json.loads((tmp_path / "manifest.json").read_text())
        assert set(doc) == {"version", "mix", "entries"}
        assert set(doc["entries"][0]) == {"near", "far", "enhanced", "scenario",
                                          "echo_mos", "other_mos", "aec_id", "seed"}

    def test_entries_satisfy_request_invariants(self, tmp_path):
        from aeckit.audio import read_wav
        from aeckit.features import ScoringRequest

        manifest = build_dataset(5, out_dir=tmp_path, seed=5, duration_range=(3.0, 3.1))
        for entry in manifest.entries:
            req = ScoringRequest(read_wav(manifest.resolve(entry.near)),
                                 read_wav(manifest.resolve(entry.far)),
                                 read_wav(manifest.resolve(entry.enhanced)),
                                 entry.scenario)
            assert len(req.near_mic) == len(req.enhanced)
