import json
import math

import numpy as np
import pytest

from emorec.audio_io import AudioClip
from emorec.errors import (
    EmptyAudioError,
    InsufficientDataError,
    ParameterError,
    ShapeError,
)
from emorec.features import (
    CENTROID_INDEX,
    CHROMA_SLICE,
    MEL_SLICE,
    MFCC_SLICE,
    N_FEATURES,
    ZCR_INDEX,
    ScalerParams,
    amplitude_to_db,
    apply_scaler,
    chroma,
    extract_feature_vector,
    feature_column_names,
    fit_scaler,
    hz_to_mel,
    identity_scaler,
    image_stft,
    jet_colormap,
    load_scaler,
    mel_filterbank,
    mel_spectrogram,
    mel_to_hz,
    mfcc,
    read_feature_csv,
    save_scaler,
    save_spectrogram_png,
    spectral_centroid,
    spectrogram_image,
    spectrogram_image_name,
    stft,
    write_feature_csv,
    zero_crossing_rate,
)

from conftest import make_tone


class TestStft:
    def test_image_grid_shape(self):
        """One second at 16 kHz with 16 ms / 4 ms / 512 gives 257 x 251."""
        spec = stft(make_tone(440, 1.0), win_ms=16.0, hop_ms=4.0, nfft=512)
        assert spec.magnitudes.shape == (257, 251)

    def test_analysis_grid_shape(self):
        spec = stft(make_tone(440, 1.0))  # 32 ms / 10 ms defaults
        assert spec.n_bins == 257
        assert spec.n_frames == 16000 // 160 + 1

    def test_frame_count_formula_centered(self):
        rng = np.random.default_rng(0)
        for _ in range(20):
            n = int(rng.integers(600, 30000))
            clip = AudioClip(rng.uniform(-0.5, 0.5, n), 16000)
            spec = stft(clip)
            assert spec.n_frames == n // 160 + 1

    def test_sine_lands_in_right_bin(self):
        spec = stft(make_tone(1000, 1.0))
        mean_mag = spec.magnitudes.mean(axis=1)
        peak_bin = int(np.argmax(mean_mag))
        assert abs(peak_bin * 16000 / 512 - 1000) <= 16000 / 512

    def test_empty_raises(self):
        with pytest.raises(EmptyAudioError):
            stft(AudioClip(np.zeros(0), 16000))

    def test_window_longer_than_nfft(self):
        with pytest.raises(ParameterError):
            stft(make_tone(440, 0.5), win_ms=40.0, nfft=512)

    def test_magnitudes_non_negative(self):
        spec = stft(make_tone(250, 0.3))
        assert (spec.magnitudes >= 0).all()


class TestMel:
    def test_scale_formula(self):
        assert hz_to_mel(0) == pytest.approx(0.0)
        assert hz_to_mel(700) == pytest.approx(2595 * math.log10(2))
        for f in (55.0, 440.0, 8000.0):
            assert mel_to_hz(hz_to_mel(f)) == pytest.approx(f, rel=1e-12)

    def test_filterbank_shape_and_support(self):
        fb = mel_filterbank(16000, 512, 60)
        assert fb.shape == (60, 257)
        # triangles have unit peak in the continuous sense, so sampled
        # values never exceed 1 and every filter has some weight
        assert fb.min() >= 0.0
        assert fb.max() <= 1.0
        assert (fb.max(axis=1) > 0.0).all()
        # each filter's support is contiguous
        for row in fb:
            nz = np.nonzero(row)[0]
            assert np.array_equal(nz, np.arange(nz[0], nz[-1] + 1))

    def test_center_frequencies_monotone(self):
        fb = mel_filterbank(16000, 512, 60)
        centers = fb.argmax(axis=1)
        assert (np.diff(centers) >= 0).all()

    def test_mel_energies_match_dense_product(self):
        """Independent route: dense filterbank times power spectrum."""
        rng = np.random.default_rng(5)
        clip = AudioClip(rng.uniform(-0.8, 0.8, 12000), 16000)
        spec = stft(clip)
        grid = mel_spectrogram(spec)
        dense = np.asarray(mel_filterbank(16000, 512, 60), dtype=np.float64)
        expected = dense @ (np.abs(spec.magnitudes) ** 2)
        denom = np.maximum(np.abs(expected), 1e-30)
        assert np.max(np.abs(grid - expected) / denom) <= 1e-6


def dct2_ortho_direct(x):
    """O(n^2) DCT-II with orthonormal scaling, straight from the sum."""
    n = x.shape[0]
    out = np.zeros_like(x)
    for k in range(n):
        basis = np.cos(np.pi * (np.arange(n) + 0.5) * k / n)
        out[k] = 2.0 * np.tensordot(basis, x, axes=(0, 0))
    out[0] *= np.sqrt(1.0 / (4.0 * n))
    out[1:] *= np.sqrt(1.0 / (2.0 * n))
    return out


class TestMfcc:
    def test_matches_direct_dct(self):
        rng = np.random.default_rng(6)
        clip = AudioClip(rng.uniform(-0.8, 0.8, 9000), 16000)
        grid = mel_spectrogram(stft(clip))
        coeffs = mfcc(grid)
        expected = dct2_ortho_direct(np.log(grid + 1e-10))[:20]
        assert coeffs.shape[0] == 20
        assert np.max(np.abs(coeffs - expected)) <= 1e-8

    def test_constant_spectrum_concentrates_in_c0(self):
        grid = np.full((60, 5), 2.0)
        coeffs = mfcc(grid)
        assert np.max(np.abs(coeffs[1:])) < 1e-10

    def test_count_parameter(self):
        grid = np.abs(np.random.default_rng(1).normal(size=(60, 4))) + 0.1
        assert mfcc(grid, n_mfcc=13).shape == (13, 4)


class TestChroma:
    def test_a440_maps_to_class_9(self):
        cg = chroma(stft(make_tone(440, 0.5)))
        assert cg.shape[0] == 12
        dominant = np.argmax(cg.mean(axis=1))
        assert dominant == 9

    def test_c_pitch_class(self):
        # C4 ~ 261.63 Hz -> class 0
        cg = chroma(stft(make_tone(261.63, 0.5)))
        assert np.argmax(cg.mean(axis=1)) == 0

    def test_octave_invariance(self):
        low = chroma(stft(make_tone(220, 0.5)))
        high = chroma(stft(make_tone(880, 0.5)))
        assert np.argmax(low.mean(axis=1)) == np.argmax(high.mean(axis=1)) == 9

    def test_frames_max_normalized(self):
        cg = chroma(stft(make_tone(330, 0.4)))
        assert np.allclose(cg.max(axis=0), 1.0)
        assert cg.min() >= 0.0


class TestZcr:
    def test_sine_rate(self):
        """A 100 Hz sine crosses zero 200 times per second: 0.0125 per sample."""
        rates = zero_crossing_rate(make_tone(100, 1.0))
        value = float(np.mean(rates))
        assert abs(value - 0.0125) / 0.0125 < 0.05

    def test_constant_signal_zero(self):
        clip = AudioClip(np.full(8000, 0.3), 16000)
        assert float(np.mean(zero_crossing_rate(clip))) == 0.0

    def test_alternating_signal_is_one(self):
        samples = 0.5 * (-1.0) ** np.arange(8000)
        rates = zero_crossing_rate(AudioClip(samples, 16000))
        # interior frames flip on every adjacent pair
        assert np.median(rates) == pytest.approx(1.0)


class TestCentroid:
    def test_sine_centroid_within_one_bin(self):
        cents = spectral_centroid(stft(make_tone(1000, 1.0)))
        mean_centroid = float(np.mean(cents))
        assert abs(mean_centroid - 1000) <= 16000 / 512

    def test_silent_frames_zero(self):
        cents = spectral_centroid(stft(AudioClip(np.zeros(4000), 16000)))
        assert np.allclose(cents, 0.0)


class TestFeatureVector:
    def test_layout_and_dimension(self):
        vec = extract_feature_vector(make_tone(440, 1.0))
        assert vec.shape == (N_FEATURES,)
        assert N_FEATURES == 94
        assert CHROMA_SLICE == slice(0, 12)
        assert MEL_SLICE == slice(12, 72)
        assert MFCC_SLICE == slice(72, 92)
        assert ZCR_INDEX == 92
        assert CENTROID_INDEX == 93

    def test_sections_equal_component_means(self):
        clip = make_tone(523.25, 1.3, amp=0.6)
        vec = extract_feature_vector(clip)
        spec = stft(clip)
        grid = mel_spectrogram(spec)
        assert np.allclose(vec[CHROMA_SLICE], chroma(spec).mean(axis=1))
        assert np.allclose(vec[MEL_SLICE], grid.mean(axis=1))
        assert np.allclose(vec[MFCC_SLICE], mfcc(grid).mean(axis=1))
        assert vec[ZCR_INDEX] == pytest.approx(float(np.mean(zero_crossing_rate(clip))))
        assert vec[CENTROID_INDEX] == pytest.approx(float(np.mean(spectral_centroid(spec))))

    def test_random_clips_all_94(self):
        rng = np.random.default_rng(8)
        for _ in range(10):
            n = int(rng.integers(1600, 5 * 16000))
            clip = AudioClip(rng.uniform(-0.9, 0.9, n), 16000)
            assert extract_feature_vector(clip).shape == (94,)


class TestScaler:
    def test_fit_and_apply(self):
        rng = np.random.default_rng(12)
        X = rng.normal(loc=3.0, scale=2.0, size=(50, 94))
        params = fit_scaler(X, fitted_on="train")
        Z = apply_scaler(params, X)
        assert np.allclose(Z.mean(axis=0), 0.0, atol=1e-12)
        assert np.allclose(Z.std(axis=0), 1.0, atol=1e-12)
        assert params.fitted_on == "train"

    def test_constant_column_guard(self):
        X = np.ones((10, 3))
        X[:, 1] = np.arange(10)
        params = fit_scaler(X)
        Z = apply_scaler(params, X)
        assert np.allclose(Z[:, 0], 0.0)
        assert np.isfinite(Z).all()

    def test_single_vector_rejected(self):
        with pytest.raises(InsufficientDataError):
            fit_scaler(np.ones((1, 94)))

    def test_dim_mismatch(self):
        params = fit_scaler(np.random.default_rng(0).normal(size=(5, 4)))
        with pytest.raises(ShapeError):
            apply_scaler(params, np.zeros(7))

    def test_identity(self):
        params = identity_scaler(94)
        X = np.random.default_rng(1).normal(size=(3, 94))
        assert np.array_equal(apply_scaler(params, X), X)

    def test_round_trip(self, tmp_path):
        params = fit_scaler(np.random.default_rng(2).normal(size=(20, 94)), fitted_on="train")
        path = tmp_path / "scaler.json"
        save_scaler(path, params)
        again = load_scaler(path)
        assert np.array_equal(again.mean, params.mean)
        assert np.array_equal(again.std, params.std)
        assert again.fitted_on == "train"
        json.loads(path.read_text())  # plain JSON document


class TestFeatureCsv:
    def test_round_trip(self, tmp_path):
        rng = np.random.default_rng(3)
        X = rng.normal(size=(6, 94))
        ids = [f"utt{i}" for i in range(6)]
        labels = [0, 1, 2, 3, 4, 5]
        path = tmp_path / "f.csv"
        write_feature_csv(path, ids, labels, X)
        ids2, labels2, X2 = read_feature_csv(path)
        assert list(ids2) == ids
        assert list(labels2) == labels
        assert np.allclose(X2, X, atol=1e-6)

    def test_header(self, tmp_path):
        path = tmp_path / "f.csv"
        write_feature_csv(path, ["a"], [0], np.zeros((1, 94)))
        header = path.read_text().splitlines()[0]
        cols = header.split(",")
        assert cols[0] == "utt_id"
        assert cols[1] == "label"
        assert cols[2] == "f000"
        assert cols[-1] == "f093"
        assert feature_column_names()[:2] == ["f000", "f001"]

    def test_deterministic_bytes(self, tmp_path):
        X = np.random.default_rng(4).normal(size=(4, 94))
        a, b = tmp_path / "a.csv", tmp_path / "b.csv"
        write_feature_csv(a, ["w", "x", "y", "z"], [1, 2, 3, 4], X)
        write_feature_csv(b, ["w", "x", "y", "z"], [1, 2, 3, 4], X)
        assert a.read_bytes() == b.read_bytes()


class TestImages:
    def test_jet_anchors(self):
        vals = np.array([0.0, 0.25, 0.5, 0.75, 1.0])
        rgb = jet_colormap(vals)
        assert rgb.shape == (5, 3)
        assert np.allclose(rgb[0], [0.0, 0.0, 1.0])   # blue
        assert np.allclose(rgb[2], [0.5, 1.0, 0.5])   # green-ish middle
        assert np.allclose(rgb[4], [1.0, 0.0, 0.0])   # red

    def test_db_conversion(self):
        assert amplitude_to_db(np.array([1.0]))[0] == pytest.approx(20 * math.log10(1 + 1e-10))
        assert amplitude_to_db(np.array([0.0]))[0] == pytest.approx(-200.0)

    def test_image_shape_and_range(self):
        image = spectrogram_image(image_stft(make_tone(440, 1.0)))
        assert image.shape == (257, 251, 3)
        assert image.dtype == np.uint8

    def test_low_frequencies_at_bottom(self):
        # a low tone's energy row should sit near the image bottom
        image = spectrogram_image(image_stft(make_tone(200, 1.0)))
        red = image[:, :, 0].astype(float).mean(axis=1)
        hot_row = int(np.argmax(red))
        assert hot_row > 200  # bottom third of a 257-row image

    def test_flat_input_maps_to_zero(self):
        spec = image_stft(AudioClip(np.zeros(16000), 16000))
        image = spectrogram_image(spec)
        blue = jet_colormap(np.zeros(1))[0]
        assert np.array_equal(image[0, 0], np.round(blue * 255).astype(np.uint8))

    def test_png_write(self, tmp_path):
        from PIL import Image

        image = spectrogram_image(image_stft(make_tone(440, 1.0)))
        path = tmp_path / spectrogram_image_name("utt1", 0)
        assert path.name == "utt1_blk0.png"
        save_spectrogram_png(path, image)
        loaded = np.asarray(Image.open(path))
        assert np.array_equal(loaded, image)
