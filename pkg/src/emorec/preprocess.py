"""Waveform cleanup: noise reduction, silence removal, length filtering, blocking.

The curation chain runs resample -> reduce_noise -> trim_silence ->
filter_short; the image pipeline additionally cuts surviving clips into
1 s blocks.
"""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .audio_io import AudioClip, resample
from .errors import ParameterError


@dataclass(frozen=True)
class PreprocessConfig:
    """Knobs for the cleanup chain.

    target_rate: common sample rate everything is converted to.
    noise_quantile: per-bin magnitude quantile taken as the noise floor.
    oversubtraction: multiplier on the floor before subtraction.
    spectral_floor: fraction of the original magnitude a bin never drops below.
    silence_frame_ms / silence_threshold_db: silence removal frame length and
        RMS threshold relative to the loudest frame.
    min_duration_s: clips shorter than this are discarded (boundary kept).
    """

    target_rate: int = 16000
    noise_quantile: float = 0.10
    oversubtraction: float = 1.5
    spectral_floor: float = 0.05
    silence_frame_ms: float = 20.0
    silence_threshold_db: float = -40.0
    min_duration_s: float = 1.0

    def __post_init__(self):
        if self.target_rate <= 0:
            raise ParameterError(f"target_rate must be positive, got {self.target_rate}")
        if not 0.0 < self.noise_quantile < 1.0:
            raise ParameterError(f"noise_quantile must be in (0, 1), got {self.noise_quantile}")
        if self.oversubtraction < 1.0:
            raise ParameterError("oversubtraction must be >= 1")
        if not 0.0 <= self.spectral_floor < 1.0:
            raise ParameterError("spectral_floor must be in [0, 1)")
        if self.silence_frame_ms <= 0:
            raise ParameterError("silence_frame_ms must be positive")
        if self.min_duration_s <= 0:
            raise ParameterError("min_duration_s must be positive")


_NOISE_N_FFT = 1024
_NOISE_HOP = 256


def _full_frames(x: np.ndarray, n_fft: int, hop: int) -> np.ndarray:
    """Frames as rows, zero-padding the tail so every sample is covered."""
    n_frames = max(1, math.ceil(max(x.size - n_fft, 0) / hop) + 1)
    needed = (n_frames - 1) * hop + n_fft
    if x.size < needed:
        x = np.concatenate([x, np.zeros(needed - x.size)])
    idx = np.arange(n_fft)[None, :] + hop * np.arange(n_frames)[:, None]
    return x[idx]


def reduce_noise(clip: AudioClip, cfg: PreprocessConfig | None = None) -> AudioClip:
    """Spectral subtraction against a quantile noise floor.

    For each frequency bin, the floor is the noise_quantile of its magnitude
    over time. Magnitudes are reduced by oversubtraction * floor but never
    below spectral_floor times their input value; phase is untouched and the
    signal is rebuilt by weighted overlap-add at the original length.

    A clip shorter than one analysis frame (1024 samples) is returned as is.
    """
    cfg = cfg or PreprocessConfig()
    x = clip.samples
    if x.size < _NOISE_N_FFT:
        return clip

    window = np.hanning(_NOISE_N_FFT)
    frames = _full_frames(x, _NOISE_N_FFT, _NOISE_HOP) * window[None, :]
    spec = np.fft.rfft(frames, axis=1)
    mag = np.abs(spec)

    floor = np.quantile(mag, cfg.noise_quantile, axis=0, keepdims=True)
    reduced = np.maximum(mag - cfg.oversubtraction * floor, cfg.spectral_floor * mag)
    gain = np.where(mag > 0.0, reduced / np.maximum(mag, 1e-300), 0.0)
    spec *= gain

    rebuilt = np.fft.irfft(spec, n=_NOISE_N_FFT, axis=1) * window[None, :]
    n_frames = frames.shape[0]
    total = _NOISE_N_FFT + _NOISE_HOP * (n_frames - 1)
    out = np.zeros(total)
    norm = np.zeros(total)
    wsq = window * window
    for i in range(n_frames):
        sl = slice(i * _NOISE_HOP, i * _NOISE_HOP + _NOISE_N_FFT)
        out[sl] += rebuilt[i]
        norm[sl] += wsq
    out /= np.maximum(norm, 1e-8)
    return clip.with_samples(out[: x.size])


def trim_silence(clip: AudioClip, cfg: PreprocessConfig | None = None) -> AudioClip:
    """Remove low-energy frames anywhere in the clip.

    The clip is cut into consecutive silence_frame_ms frames; frames whose
    RMS falls below the loudest frame's RMS by more than
    silence_threshold_db are dropped and the survivors concatenated in
    order. An all-silent clip trims to zero samples.
    """
    cfg = cfg or PreprocessConfig()
    x = clip.samples
    if x.size == 0:
        return clip
    frame_len = max(1, int(round(cfg.silence_frame_ms * clip.sample_rate / 1000.0)))
    n_frames = math.ceil(x.size / frame_len)
    # RMS over each frame's actual samples; the final frame may be short.
    sq = x * x
    rms = np.empty(n_frames)
    for i in range(n_frames):
        chunk = sq[i * frame_len : (i + 1) * frame_len]
        rms[i] = math.sqrt(float(chunk.mean()))
    peak = float(rms.max())
    if peak == 0.0:
        return clip.with_samples(np.zeros(0))
    threshold = peak * 10.0 ** (cfg.silence_threshold_db / 20.0)
    kept = [x[i * frame_len : (i + 1) * frame_len] for i in range(n_frames) if rms[i] >= threshold]
    if not kept:
        return clip.with_samples(np.zeros(0))
    return clip.with_samples(np.concatenate(kept))


def filter_short(records, cfg: PreprocessConfig | None = None):
    """Drop (id, clip) pairs shorter than min_duration_s; order preserved.

    The boundary is inclusive: a clip of exactly min_duration_s stays.
    """
    cfg = cfg or PreprocessConfig()
    out = []
    for uid, clip in records:
        if len(clip) >= int(round(cfg.min_duration_s * clip.sample_rate)):
            out.append((uid, clip))
    return out


def block_1s(clip: AudioClip, overlap_ms: float = 10.0) -> list[AudioClip]:
    """Cut a clip into overlapping 1 s blocks, each peak-normalized.

    Consecutive blocks start 1000 - overlap_ms milliseconds apart; a final
    partial block is dropped. Clips shorter than 1 s are a caller error.
    """
    if not 0.0 <= overlap_ms < 1000.0:
        raise ParameterError(f"overlap_ms must be in [0, 1000), got {overlap_ms}")
    sr = clip.sample_rate
    block_len = sr
    if len(clip) < block_len:
        raise ParameterError("clip shorter than one block")
    step = int(round((1000.0 - overlap_ms) * sr / 1000.0))
    x = clip.samples
    blocks = []
    start = 0
    while start + block_len <= x.size:
        chunk = x[start : start + block_len]
        peak = float(np.max(np.abs(chunk)))
        if peak > 0.0:
            chunk = chunk / peak
        blocks.append(AudioClip(chunk, sr, clip.source_id))
        start += step
    return blocks


def preprocess_clip(clip: AudioClip, cfg: PreprocessConfig | None = None) -> AudioClip:
    """Full single-clip chain: resample to target rate, denoise, trim silence."""
    cfg = cfg or PreprocessConfig()
    return trim_silence(reduce_noise(resample(clip, cfg.target_rate), cfg), cfg)
