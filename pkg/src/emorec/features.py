"""Hand-crafted acoustic features and spectrogram image rendering.

The classifier-facing representation is a 94-dimensional vector per clip:
12 chroma + 60 mel band energies + 20 MFCCs + zero crossing rate +
spectral centroid, each averaged over analysis frames. Spectrogram images
for the vision-style pipeline are rendered from 1 s blocks as 257x251
jet-mapped PNG files.
"""
from __future__ import annotations

import csv
import json
from dataclasses import dataclass

import numpy as np
import scipy.fft

from .audio_io import AudioClip
from .errors import EmptyAudioError, InsufficientDataError, ParameterError, ShapeError

# Analysis defaults: 32 ms window, 10 ms hop. Image pipeline: 16 ms / 4 ms.
ANALYSIS_WIN_MS = 32.0
ANALYSIS_HOP_MS = 10.0
IMAGE_WIN_MS = 16.0
IMAGE_HOP_MS = 4.0
N_FFT = 512
N_MELS = 60
N_MFCC = 20
N_CHROMA = 12

N_FEATURES = N_CHROMA + N_MELS + N_MFCC + 2
CHROMA_SLICE = slice(0, 12)
MEL_SLICE = slice(12, 72)
MFCC_SLICE = slice(72, 92)
ZCR_INDEX = 92
CENTROID_INDEX = 93

_LOG_EPS = 1e-10


@dataclass(frozen=True)
class SpectrogramMatrix:
    """Magnitude STFT grid (n_bins x n_frames) plus the transform geometry."""

    magnitudes: np.ndarray
    sample_rate: int
    win_samples: int
    hop_samples: int
    nfft: int
    centered: bool = True

    def __post_init__(self):
        mags = np.asarray(self.magnitudes, dtype=np.float64)
        object.__setattr__(self, "magnitudes", mags)
        if mags.ndim != 2 or mags.shape[0] != self.nfft // 2 + 1:
            raise ShapeError(
                f"magnitudes must be ({self.nfft // 2 + 1}, n_frames), got {mags.shape}"
            )

    @property
    def n_bins(self) -> int:
        return self.magnitudes.shape[0]

    @property
    def n_frames(self) -> int:
        return self.magnitudes.shape[1]

    @property
    def power(self) -> np.ndarray:
        return self.magnitudes**2

    @property
    def frequencies(self) -> np.ndarray:
        """Center frequency of each row in Hz."""
        return np.fft.rfftfreq(self.nfft, 1.0 / self.sample_rate)


def _ms_to_samples(ms: float, sample_rate: int) -> int:
    n = int(round(ms * sample_rate / 1000.0))
    if n <= 0:
        raise ParameterError(f"{ms} ms is shorter than one sample at {sample_rate} Hz")
    return n


def _frame_signal(x: np.ndarray, frame_len: int, hop: int, centered: bool) -> np.ndarray:
    """Frames as rows. Centered mode reflect-pads by frame_len // 2 so frame i
    is centered on sample i*hop, giving floor(n / hop) + 1 frames."""
    if centered:
        pad = frame_len // 2
        padded = np.pad(x, pad, mode="reflect") if x.size > 1 else np.pad(x, pad, mode="edge")
        n_frames = x.size // hop + 1
    else:
        if x.size < frame_len:
            raise ParameterError("clip shorter than one analysis window")
        padded = x
        n_frames = 1 + (x.size - frame_len) // hop
    needed = (n_frames - 1) * hop + frame_len
    if padded.size < needed:
        padded = np.concatenate([padded, np.zeros(needed - padded.size)])
    idx = np.arange(frame_len)[None, :] + hop * np.arange(n_frames)[:, None]
    return padded[idx]


def stft(
    clip: AudioClip,
    win_ms: float = ANALYSIS_WIN_MS,
    hop_ms: float = ANALYSIS_HOP_MS,
    nfft: int = N_FFT,
    centered: bool = True,
) -> SpectrogramMatrix:
    """Short-time Fourier transform magnitudes with a Hann window.

    Frames are zero-padded from the window length up to ``nfft`` and the
    one-sided DFT magnitude kept. Centered mode reflect-pads the signal so
    the frame count is floor(n_samples / hop) + 1 regardless of window size.
    """
    if len(clip) == 0:
        raise EmptyAudioError("cannot transform an empty clip")
    win = _ms_to_samples(win_ms, clip.sample_rate)
    hop = _ms_to_samples(hop_ms, clip.sample_rate)
    if win > nfft:
        raise ParameterError(f"window of {win} samples exceeds nfft {nfft}")
    frames = _frame_signal(clip.samples, win, hop, centered) * np.hanning(win)[None, :]
    mags = np.abs(np.fft.rfft(frames, n=nfft, axis=1)).T
    return SpectrogramMatrix(mags, clip.sample_rate, win, hop, nfft, centered)


def hz_to_mel(f):
    """HTK mel scale."""
    return 2595.0 * np.log10(1.0 + np.asarray(f, dtype=np.float64) / 700.0)


def mel_to_hz(m):
    return 700.0 * (10.0 ** (np.asarray(m, dtype=np.float64) / 2595.0) - 1.0)


def mel_filterbank(
    sample_rate: int,
    nfft: int = N_FFT,
    n_mels: int = N_MELS,
    fmin: float = 0.0,
    fmax: float | None = None,
) -> np.ndarray:
    """Triangular mel filters with unit peak, shape (n_mels, nfft // 2 + 1).

    Band edges are spaced uniformly on the mel scale between fmin and fmax
    (default Nyquist); each triangle rises to 1 at its center frequency.
    """
    if fmax is None:
        fmax = sample_rate / 2.0
    if not 0.0 <= fmin < fmax:
        raise ParameterError(f"need 0 <= fmin < fmax, got {fmin}, {fmax}")
    edges = mel_to_hz(np.linspace(hz_to_mel(fmin), hz_to_mel(fmax), n_mels + 2))
    freqs = np.fft.rfftfreq(nfft, 1.0 / sample_rate)
    lower = edges[:-2][:, None]
    center = edges[1:-1][:, None]
    upper = edges[2:][:, None]
    rising = (freqs[None, :] - lower) / np.maximum(center - lower, 1e-12)
    falling = (upper - freqs[None, :]) / np.maximum(upper - center, 1e-12)
    return np.clip(np.minimum(rising, falling), 0.0, 1.0)


def mel_spectrogram(spec: SpectrogramMatrix, n_mels: int = N_MELS) -> np.ndarray:
    """Mel band energies (n_mels, n_frames): filterbank times the power spectrum."""
    return mel_filterbank(spec.sample_rate, spec.nfft, n_mels) @ spec.power


def mfcc(mel_grid: np.ndarray, n_mfcc: int = N_MFCC) -> np.ndarray:
    """Cepstral coefficients from a mel grid, shape (n_mfcc, n_frames).

    Orthonormal DCT-II over log(mel + 1e-10) per frame; the epsilon keeps
    empty bands finite.
    """
    grid = np.asarray(mel_grid, dtype=np.float64)
    if grid.ndim != 2:
        raise ShapeError(f"mel grid must be 2-D, got shape {grid.shape}")
    return scipy.fft.dct(np.log(grid + _LOG_EPS), type=2, axis=0, norm="ortho")[:n_mfcc]


def chroma(spec: SpectrogramMatrix) -> np.ndarray:
    """Pitch-class energy profile, shape (12, n_frames).

    Each bin at frequency f >= 27.5 Hz maps to pitch class
    round(69 + 12 log2(f / 440)) mod 12; magnitudes are summed per class and
    each frame is scaled so its largest class is 1 (silent frames stay zero).
    """
    mag = spec.magnitudes
    freqs = spec.frequencies
    audible = freqs >= 27.5
    classes = (
        np.round(69.0 + 12.0 * np.log2(freqs[audible] / 440.0)).astype(np.int64) % 12
    )
    out = np.zeros((N_CHROMA, mag.shape[1]))
    np.add.at(out, classes, mag[audible])
    peaks = out.max(axis=0)
    nonzero = peaks > 0.0
    out[:, nonzero] /= peaks[nonzero]
    return out


def zero_crossing_rate(
    clip: AudioClip,
    frame_ms: float = ANALYSIS_WIN_MS,
    hop_ms: float = ANALYSIS_HOP_MS,
) -> np.ndarray:
    """Per-frame sign-change rate: crossings / (frame_len - 1), sign(0) is +."""
    if len(clip) == 0:
        raise EmptyAudioError("cannot compute rates for an empty clip")
    frame_len = _ms_to_samples(frame_ms, clip.sample_rate)
    hop = _ms_to_samples(hop_ms, clip.sample_rate)
    frames = _frame_signal(clip.samples, frame_len, hop, centered=True)
    signs = np.where(frames >= 0.0, 1.0, -1.0)
    flips = np.count_nonzero(signs[:, 1:] != signs[:, :-1], axis=1)
    return flips / (frame_len - 1)


def spectral_centroid(spec: SpectrogramMatrix) -> np.ndarray:
    """Magnitude-weighted mean frequency per frame in Hz; silent frames give 0."""
    mag = spec.magnitudes
    total = mag.sum(axis=0)
    weighted = spec.frequencies @ mag
    out = np.zeros_like(total)
    nonzero = total > 0.0
    out[nonzero] = weighted[nonzero] / total[nonzero]
    return out


def extract_feature_vector(
    clip: AudioClip,
    win_ms: float = ANALYSIS_WIN_MS,
    hop_ms: float = ANALYSIS_HOP_MS,
    nfft: int = N_FFT,
) -> np.ndarray:
    """Compute the 94-dimensional clip descriptor.

    Layout: [chroma 0..11 | mel 12..71 | mfcc 72..91 | zcr 92 | centroid 93].
    Framewise features are averaged over time with equal frame weight.
    """
    if len(clip) == 0:
        raise EmptyAudioError("cannot extract features from an empty clip")
    spec = stft(clip, win_ms, hop_ms, nfft)
    mels = mel_spectrogram(spec)
    mfccs = mfcc(mels)
    chrom = chroma(spec)
    zcrs = zero_crossing_rate(clip, win_ms, hop_ms)
    centroids = spectral_centroid(spec)

    vec = np.empty(N_FEATURES)
    vec[CHROMA_SLICE] = chrom.mean(axis=1)
    vec[MEL_SLICE] = mels.mean(axis=1)
    vec[MFCC_SLICE] = mfccs.mean(axis=1)
    vec[ZCR_INDEX] = zcrs.mean()
    vec[CENTROID_INDEX] = centroids.mean()
    return vec


@dataclass(frozen=True)
class ScalerParams:
    """Per-feature standardization statistics and the split they came from."""

    mean: np.ndarray
    std: np.ndarray
    fitted_on: str = ""

    def __post_init__(self):
        mean = np.asarray(self.mean, dtype=np.float64)
        std = np.asarray(self.std, dtype=np.float64)
        object.__setattr__(self, "mean", mean)
        object.__setattr__(self, "std", std)
        if mean.shape != std.shape or mean.ndim != 1:
            raise ShapeError(f"mean/std shapes differ: {mean.shape} vs {std.shape}")
        if np.any(std <= 0.0):
            raise ParameterError("std entries must be positive")


def fit_scaler(vectors, fitted_on: str = "") -> ScalerParams:
    """Column means and population standard deviations of stacked vectors.

    Dimensions with std below 1e-12 get std 1 so scaling them is a no-op.
    Needs at least two vectors.
    """
    X = np.asarray(vectors, dtype=np.float64)
    if X.ndim != 2:
        raise ShapeError(f"expected a 2-D stack of vectors, got shape {X.shape}")
    if X.shape[0] < 2:
        raise InsufficientDataError(f"need at least 2 vectors to fit a scaler, got {X.shape[0]}")
    mean = X.mean(axis=0)
    std = X.std(axis=0)
    std = np.where(std < 1e-12, 1.0, std)
    return ScalerParams(mean, std, fitted_on)


def apply_scaler(params: ScalerParams, vectors):
    """(v - mean) / std elementwise; accepts one vector or a stack."""
    X = np.asarray(vectors, dtype=np.float64)
    if X.shape[-1] != params.mean.size:
        raise ShapeError(
            f"input has {X.shape[-1]} features, scaler was fit on {params.mean.size}"
        )
    return (X - params.mean) / params.std


def identity_scaler(n_features: int = N_FEATURES) -> ScalerParams:
    return ScalerParams(np.zeros(n_features), np.ones(n_features), "identity")


def scaler_to_dict(params: ScalerParams) -> dict:
    return {
        "mean": [float(v) for v in params.mean],
        "std": [float(v) for v in params.std],
        "fitted_on": params.fitted_on,
    }


def scaler_from_dict(payload: dict) -> ScalerParams:
    return ScalerParams(
        np.asarray(payload["mean"], dtype=np.float64),
        np.asarray(payload["std"], dtype=np.float64),
        str(payload.get("fitted_on", "")),
    )


def save_scaler(path, params: ScalerParams) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(scaler_to_dict(params), fh, sort_keys=True)
        fh.write("\n")


def load_scaler(path) -> ScalerParams:
    with open(path, encoding="utf-8") as fh:
        return scaler_from_dict(json.load(fh))


def feature_column_names(n_features: int = N_FEATURES) -> list[str]:
    return [f"f{i:03d}" for i in range(n_features)]


def write_feature_csv(path, utt_ids, labels, matrix: np.ndarray) -> None:
    """Persist features as CSV: utt_id, label, f000..f093 with %.9g values."""
    X = np.asarray(matrix, dtype=np.float64)
    if X.ndim != 2 or X.shape[0] != len(utt_ids) or len(labels) != len(utt_ids):
        raise ShapeError("utt_ids, labels and matrix rows must align")
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        writer.writerow(["utt_id", "label"] + feature_column_names(X.shape[1]))
        for uid, lab, row in zip(utt_ids, labels, X):
            writer.writerow([uid, int(lab)] + [f"{v:.9g}" for v in row])


def read_feature_csv(path):
    """Inverse of write_feature_csv: (utt_ids, labels, matrix)."""
    utt_ids: list[str] = []
    labels: list[int] = []
    rows: list[list[float]] = []
    with open(path, newline="", encoding="utf-8") as fh:
        reader = csv.reader(fh)
        header = next(reader)
        if header[:2] != ["utt_id", "label"]:
            raise ParameterError(f"unexpected feature CSV header: {header[:2]}")
        for record in reader:
            utt_ids.append(record[0])
            labels.append(int(record[1]))
            rows.append([float(v) for v in record[2:]])
    matrix = np.asarray(rows, dtype=np.float64) if rows else np.zeros((0, N_FEATURES))
    return utt_ids, np.asarray(labels, dtype=np.int64), matrix


def jet_colormap(values: np.ndarray) -> np.ndarray:
    """Map values in [0, 1] to RGB floats with the classic jet ramp."""
    x = np.clip(np.asarray(values, dtype=np.float64), 0.0, 1.0)
    r = np.clip(1.5 - np.abs(4.0 * x - 3.0), 0.0, 1.0)
    g = np.clip(1.5 - np.abs(4.0 * x - 2.0), 0.0, 1.0)
    b = np.clip(1.5 - np.abs(4.0 * x - 1.0), 0.0, 1.0)
    return np.stack([r, g, b], axis=-1)


def amplitude_to_db(magnitude: np.ndarray) -> np.ndarray:
    return 20.0 * np.log10(np.asarray(magnitude, dtype=np.float64) + _LOG_EPS)


def image_stft(clip: AudioClip, nfft: int = N_FFT) -> SpectrogramMatrix:
    """STFT with the image-pipeline geometry (16 ms window, 4 ms hop)."""
    return stft(clip, IMAGE_WIN_MS, IMAGE_HOP_MS, nfft)


def spectrogram_image(spec: SpectrogramMatrix) -> np.ndarray:
    """Render a magnitude matrix as a jet-colored uint8 RGB array.

    Magnitudes go to dB, are min-max scaled per image (a flat image maps to
    0), pass through the jet ramp, and are flipped so the lowest frequency
    is the bottom row. A 1 s block at 16 kHz gives a 257 tall x 251 wide
    image.
    """
    db = amplitude_to_db(spec.magnitudes)
    low, high = float(db.min()), float(db.max())
    scaled = np.zeros_like(db) if high == low else (db - low) / (high - low)
    rgb = jet_colormap(scaled[::-1, :])
    return np.round(rgb * 255.0).astype(np.uint8)


def save_spectrogram_png(path, image: np.ndarray) -> None:
    from PIL import Image

    if image.ndim != 3 or image.shape[2] != 3 or image.dtype != np.uint8:
        raise ShapeError(f"expected uint8 RGB array, got {image.dtype} {image.shape}")
    Image.fromarray(image, mode="RGB").save(path, format="PNG")


def spectrogram_image_name(utt_id: str, block_index: int) -> str:
    return f"{utt_id}_blk{block_index}.png"
