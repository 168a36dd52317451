import numpy as np
import pytest

from emorec.audio_io import AudioClip
from emorec.errors import ParameterError
from emorec.preprocess import (
    PreprocessConfig,
    block_1s,
    filter_short,
    preprocess_clip,
    reduce_noise,
    trim_silence,
)

from conftest import make_tone


def noisy_tone(snr_db=5.0, seconds=1.5, rate=16000, lead=0.3, seed=0):
    """Sine with white noise everywhere and noise-only flanks.

    The flanks let the quantile noise-floor estimate see pure noise frames.
    Returns (clip, voiced slice).
    """
    rng = np.random.default_rng(seed)
    n_lead = int(lead * rate)
    n_voiced = int(seconds * rate)
    total = n_voiced + 2 * n_lead
    t = np.arange(n_voiced) / rate
    signal = np.zeros(total)
    signal[n_lead : n_lead + n_voiced] = 0.5 * np.sin(2 * np.pi * 440 * t)
    p_sig = np.mean(signal[n_lead : n_lead + n_voiced] ** 2)
    p_noise = p_sig / 10 ** (snr_db / 10)
    noise = rng.standard_normal(total) * np.sqrt(p_noise)
    samples = signal + noise
    samples /= max(1.0, np.max(np.abs(samples)))
    return AudioClip(samples, rate), slice(n_lead, n_lead + n_voiced)


class TestConfig:
    def test_defaults(self):
        cfg = PreprocessConfig()
        assert cfg.target_rate == 16000
        assert cfg.noise_quantile == pytest.approx(0.10)
        assert cfg.oversubtraction == pytest.approx(1.5)
        assert cfg.silence_threshold_db == pytest.approx(-40.0)

    @pytest.mark.parametrize(
        "kwargs",
        [
            {"noise_quantile": 0.0},
            {"noise_quantile": 1.0},
            {"oversubtraction": 0.5},
            {"spectral_floor": -0.1},
            {"spectral_floor": 1.0},
            {"target_rate": 0},
            {"silence_frame_ms": 0.0},
            {"min_duration_s": -1.0},
        ],
    )
    def test_rejects_bad_values(self, kwargs):
        with pytest.raises(ParameterError):
            PreprocessConfig(**kwargs)


class TestReduceNoise:
    def test_improves_snr_on_noisy_sine(self):
        clip, voiced = noisy_tone(snr_db=5.0)
        out = reduce_noise(clip)
        assert len(out) == len(clip)
        t = np.arange(len(clip)) / clip.sample_rate

        def residual_power(samples):
            seg = samples[voiced]
            # project out the sine component, measure what's left
            ref_s = np.sin(2 * np.pi * 440 * t[voiced])
            ref_c = np.cos(2 * np.pi * 440 * t[voiced])
            seg = seg - (seg @ ref_s) / (ref_s @ ref_s) * ref_s
            seg = seg - (seg @ ref_c) / (ref_c @ ref_c) * ref_c
            return np.mean(seg**2)

        assert residual_power(out.samples) < 0.5 * residual_power(clip.samples)

    def test_short_input_unchanged(self):
        clip = make_tone(440, seconds=0.05)  # under one analysis window
        out = reduce_noise(clip)
        assert np.array_equal(out.samples, clip.samples)

    def test_clean_tone_with_quiet_flanks_preserved(self):
        # the quantile floor must come from the silent frames, leaving the
        # tone intact; a tone with no quiet frames anywhere would instead be
        # treated as the noise floor itself
        rate = 16000
        voiced = make_tone(440, 1.5, amp=0.5).samples
        pad = np.zeros(int(0.4 * rate))
        clip = AudioClip(np.concatenate([pad, voiced, pad]), rate)
        out = reduce_noise(clip)
        core = slice(len(pad) + 2048, len(pad) + len(voiced) - 2048)
        num = np.sum((out.samples[core] - clip.samples[core]) ** 2)
        den = np.sum(clip.samples[core] ** 2)
        assert num / den < 0.05

    def test_deterministic(self):
        clip, _ = noisy_tone(seed=4)
        a = reduce_noise(clip)
        b = reduce_noise(clip)
        assert np.array_equal(a.samples, b.samples)


class TestTrimSilence:
    def test_removes_silent_edges(self):
        rate = 16000
        voiced = make_tone(440, 0.5, amp=0.5).samples
        samples = np.concatenate([np.zeros(rate // 2), voiced, np.zeros(rate // 4)])
        out = trim_silence(AudioClip(samples, rate))
        # 20 ms frame granularity
        assert abs(len(out) - len(voiced)) <= 2 * int(0.02 * rate)
        assert np.max(np.abs(out.samples)) == pytest.approx(0.5, rel=1e-3)

    def test_removes_interior_silence(self):
        rate = 16000
        voiced = make_tone(440, 0.4, amp=0.5).samples
        samples = np.concatenate([voiced, np.zeros(rate), voiced])
        out = trim_silence(AudioClip(samples, rate))
        assert len(out) < 2 * len(voiced) + rate // 2

    def test_all_silent_becomes_empty(self):
        out = trim_silence(AudioClip(np.zeros(16000), 16000))
        assert len(out) == 0

    def test_loud_everywhere_untouched(self):
        clip = make_tone(440, 0.3, amp=0.8)
        out = trim_silence(clip)
        assert np.array_equal(out.samples, clip.samples)

    def test_quiet_passage_below_threshold_dropped(self):
        rate = 16000
        loud = make_tone(440, 0.3, amp=0.9).samples
        # -46 dB relative to the 0.9 peak: below the -40 dB gate
        quiet = make_tone(440, 0.3, amp=0.9 * 10 ** (-46 / 20)).samples
        out = trim_silence(AudioClip(np.concatenate([loud, quiet]), rate))
        assert len(out) <= len(loud) + int(0.02 * rate)


class TestBlocking:
    def test_block_count_and_length(self):
        clip = make_tone(440, 3.5)
        blocks = block_1s(clip, overlap_ms=0.0)
        assert len(blocks) == 3
        assert all(len(b) == 16000 for b in blocks)

    def test_overlap_stride(self):
        clip = make_tone(440, 3.0)
        blocks = block_1s(clip, overlap_ms=500.0)
        # stride 0.5 s: starts at 0, 0.5, ..., 2.0 -> 5 blocks
        assert len(blocks) == 5

    def test_blocks_are_peak_normalized(self):
        rng = np.random.default_rng(2)
        clip = AudioClip(0.3 * rng.standard_normal(2 * 16000), 16000)
        for block in block_1s(clip):
            assert np.max(np.abs(block.samples)) == pytest.approx(1.0)

    def test_partial_tail_dropped(self):
        clip = make_tone(440, 1.9)
        assert len(block_1s(clip, overlap_ms=0.0)) == 1

    def test_too_short_raises(self):
        with pytest.raises(ParameterError):
            block_1s(make_tone(440, 0.5))

    def test_bad_overlap(self):
        clip = make_tone(440, 2.0)
        for overlap in (-1.0, 1000.0, 1500.0):
            with pytest.raises(ParameterError):
                block_1s(clip, overlap_ms=overlap)


def test_filter_short_keeps_only_long_clips():
    pairs = [
        ("a", make_tone(440, 1.2)),
        ("b", make_tone(440, 0.8)),
        ("c", make_tone(440, 1.0)),
    ]
    kept = filter_short(pairs)
    assert [uid for uid, _ in kept] == ["a", "c"]


def test_preprocess_clip_pipeline_resamples_and_trims():
    rate = 22050
    voiced = make_tone(500, 1.5, rate=rate, amp=0.6).samples
    samples = np.concatenate([np.zeros(rate // 2), voiced, np.zeros(rate // 2)])
    out = preprocess_clip(AudioClip(samples, rate))
    assert out.sample_rate == 16000
    assert len(out) < (len(samples) / rate * 16000) * 0.9
    assert len(out) > 0
