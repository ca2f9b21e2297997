import numpy as np
import pytest

from aeckit.audio import AudioClip
from aeckit.dsp import StftConfig, frame_count
from aeckit.errors import (
    EmptyClipError,
    MissingRatingError,
    RatingOutOfRangeError,
    SampleRateMismatchError,
)
from aeckit.features import (
    MARKER_SAMPLES,
    ScoringRequest,
    assemble_features,
    derive_training_label,
    micro_augment,
)
from aeckit.types import Scenario

RATE = 16000


def noise_clip(n, seed=0, scale=0.3):
    rng = np.random.default_rng(seed)
    return AudioClip(rng.uniform(-scale, scale, n), RATE)


def triple(n=RATE, scenario=None, seed=0):
    return ScoringRequest(noise_clip(n, seed), noise_clip(n, seed + 1),
                          noise_clip(n, seed + 2), scenario)


class TestScoringRequest:
    def test_rejects_wrong_rate(self):
        bad = AudioClip(np.zeros(100), 8000)
        with pytest.raises(SampleRateMismatchError):
            ScoringRequest(bad, noise_clip(100), noise_clip(100))

    def test_rejects_empty(self):
        with pytest.raises(EmptyClipError):
            ScoringRequest(AudioClip(np.empty(0), RATE), noise_clip(10), noise_clip(10))

    def test_tail_padding_to_longest(self):
        req = ScoringRequest(noise_clip(1000), noise_clip(800), noise_clip(600))
        assert len(req.near_mic) == len(req.far_end) == len(req.enhanced) == 1000
        assert np.all(req.enhanced.samples[600:] == 0.0)


class TestAssembleFeatures:
    def test_no_marker_path(self):
        block = assemble_features(triple())
        assert block.data.shape == (3, frame_count(RATE, StftConfig()), 257)

    def test_double_talk_marker_adds_two_frames(self):
        plain = assemble_features(triple())
        marked = assemble_features(triple(scenario=Scenario.DOUBLE_TALK))
        expected = frame_count(RATE + MARKER_SAMPLES, StftConfig())
        assert marked.n_frames == expected == plain.n_frames + 2

    def test_marker_locality(self):
        plain = assemble_features(triple())
        marked = assemble_features(triple(scenario=Scenario.DOUBLE_TALK))
        shift = MARKER_SAMPLES // StftConfig().hop
        boundary = -(-MARKER_SAMPLES // StftConfig().hop) + 1  # ceil + 1
        for t in range(boundary, marked.n_frames):
            assert np.array_equal(marked.data[:, t, :], plain.data[:, t - shift, :])

    def test_nst_vs_fst_differ_only_in_marker_frames(self):
        nst = assemble_features(triple(scenario=Scenario.NEAR_END_SINGLE_TALK))
        fst = assemble_features(triple(scenario=Scenario.FAR_END_SINGLE_TALK))
        # enhanced channel is active in both scenarios: identical everywhere
        assert np.array_equal(nst.data[2], fst.data[2])
        boundary = 3
        assert not np.array_equal(nst.data[0, :boundary], fst.data[0, :boundary])
        assert not np.array_equal(nst.data[1, :boundary], fst.data[1, :boundary])
        assert np.array_equal(nst.data[0, boundary:], fst.data[0, boundary:])
        assert np.array_equal(nst.data[1, boundary:], fst.data[1, boundary:])

    def test_mel_mode_bins(self):
        block = assemble_features(triple(), feature_mode="mel160")
        assert block.n_bins == 160


class TestMicroAugment:
    def pick(self, target_choice):
        # find a seed whose first draw lands on the wanted branch
        for seed in range(200):
            if int(np.random.default_rng(seed).integers(4)) == target_choice:
                return np.random.default_rng(seed)
        raise AssertionError("no seed found")

    def test_identity_branch(self):
        clip = noise_clip(2000)
        out = micro_augment(clip, self.pick(0))
        assert np.array_equal(out.samples, clip.samples)

    def test_trim_branch(self):
        clip = noise_clip(2000)
        out = micro_augment(clip, self.pick(1))
        assert len(out) == 2000 - 160

    def test_gain_up_branch(self):
        clip = noise_clip(2000)
        out = micro_augment(clip, self.pick(2))
        assert np.allclose(out.samples, clip.samples * 10 ** 0.025)

    def test_gain_down_branch(self):
        clip = noise_clip(2000)
        out = micro_augment(clip, self.pick(3))
        assert np.allclose(out.samples, clip.samples * 10 ** -0.025)

    def test_deterministic_for_seed(self):
        clip = noise_clip(3000)
        a = micro_augment(clip, np.random.default_rng(17))
        b = micro_augment(clip, np.random.default_rng(17))
        assert np.array_equal(a.samples, b.samples)

    def test_energy_bound_property(self):
        clip = noise_clip(5000, seed=9)
        e_in = float(np.sum(clip.samples**2))
        head = float(np.sum(clip.samples[:160] ** 2))
        bound = (10**0.05 - 1.0) * e_in + head + 1e-12
        for seed in range(30):
            out = micro_augment(clip, np.random.default_rng(seed))
            e_out = float(np.sum(out.samples**2))
            assert abs(e_out - e_in) <= bound


class TestScore:
    def make_ckpt(self, use_marker=True):
        from aeckit.nn import init_model, tiny_config

        config = tiny_config(seed=2)
        config.use_scenario_marker = use_marker
        return init_model(config)

    def test_deterministic(self):
        from aeckit.features import score

        ckpt = self.make_ckpt()
        req = triple(scenario=Scenario.DOUBLE_TALK)
        assert score(ckpt, req) == score(ckpt, req)

    def test_marker_optional(self):
        from aeckit.features import score

        ckpt = self.make_ckpt()
        with_marker = score(ckpt, triple(scenario=Scenario.DOUBLE_TALK))
        without = score(ckpt, triple())
        for pair in (with_marker, without):
            assert 1.0 < pair.echo_mos < 5.0

    def test_markerless_checkpoint_ignores_scenario(self):
        from aeckit.features import score

        ckpt = self.make_ckpt(use_marker=False)
        a = score(ckpt, triple(scenario=Scenario.DOUBLE_TALK))
        b = score(ckpt, triple())
        assert a == b

    def test_short_enhanced_clip_padded_not_rejected(self):
        from aeckit.features import score

        ckpt = self.make_ckpt()
        req = ScoringRequest(noise_clip(RATE), noise_clip(RATE, 1),
                             noise_clip(RATE // 2, 2), Scenario.DOUBLE_TALK)
        pair = score(ckpt, req)
        assert 1.0 < pair.other_mos < 5.0


class TestDeriveTrainingLabel:
    def test_near_single_talk_pins_echo(self):
        pair = derive_training_label(Scenario.NEAR_END_SINGLE_TALK, rated_other=3.2)
        assert (pair.echo_mos, pair.other_mos) == (5.0, 3.2)

    def test_far_single_talk_pins_other(self):
        pair = derive_training_label(Scenario.FAR_END_SINGLE_TALK, rated_echo=2.0)
        assert (pair.echo_mos, pair.other_mos) == (2.0, 5.0)

    def test_double_talk_passthrough(self):
        pair = derive_training_label(Scenario.DOUBLE_TALK, 4.1, 3.3)
        assert (pair.echo_mos, pair.other_mos) == (4.1, 3.3)

    def test_missing_rating(self):
        with pytest.raises(MissingRatingError):
            derive_training_label(Scenario.DOUBLE_TALK, rated_echo=3.0)

    def test_out_of_range(self):
        with pytest.raises(RatingOutOfRangeError):
            derive_training_label(Scenario.FAR_END_SINGLE_TALK, rated_echo=5.5)

    def test_totality_property(self):
        rng = np.random.default_rng(21)
        for _ in range(200):
            echo = float(rng.uniform(1, 5))
            other = float(rng.uniform(1, 5))
            for scenario in Scenario:
                pair = derive_training_label(scenario, echo, other)
                assert 1.0 <= pair.echo_mos <= 5.0
                assert 1.0 <= pair.other_mos <= 5.0
