"""WAV decode/encode, resampling, and amplitude normalization.

Everything downstream works on :class:`AudioClip`: a mono float64 waveform
plus its sample rate. Decoding accepts PCM 16/24/32 and IEEE float32 RIFF
files with 1 or 2 channels; encoding always writes PCM16 mono.
"""
from __future__ import annotations

import struct
from dataclasses import dataclass, field

import numpy as np

from .errors import (
    AudioFormatError,
    EmptyAudioError,
    ParameterError,
    UnsupportedEncodingError,
)

_WAVE_FORMAT_PCM = 1
_WAVE_FORMAT_IEEE_FLOAT = 3

# Windowed-sinc resampler: Kaiser window, 64 taps per output phase.
_KAISER_BETA = 8.6
_HALF_TAPS = 32


@dataclass(frozen=True)
class AudioClip:
    """Mono waveform samples and their sample rate."""

    samples: np.ndarray
    sample_rate: int
    source_id: str = ""

    def __post_init__(self):
        samples = np.asarray(self.samples, dtype=np.float64)
        object.__setattr__(self, "samples", samples)
        if self.sample_rate <= 0:
            raise ParameterError(f"sample_rate must be positive, got {self.sample_rate}")
        if samples.ndim != 1:
            raise ParameterError(f"samples must be 1-D, got shape {samples.shape}")
        if samples.size and not np.all(np.isfinite(samples)):
            raise ParameterError("samples contain NaN or Inf")

    def __len__(self) -> int:
        return int(self.samples.size)

    @property
    def duration(self) -> float:
        """Length in seconds."""
        return len(self) / self.sample_rate

    def with_samples(self, samples: np.ndarray, sample_rate: int | None = None) -> "AudioClip":
        return AudioClip(samples, sample_rate or self.sample_rate, self.source_id)


def _iter_riff_chunks(data: bytes):
    pos = 12
    while pos + 8 <= len(data):
        cid = data[pos : pos + 4]
        (size,) = struct.unpack_from("<I", data, pos + 4)
        yield cid, pos + 8, size
        pos += 8 + size + (size & 1)  # chunks are word-aligned


def decode_wav(data: bytes, source_id: str = "") -> AudioClip:
    """Decode a RIFF/WAVE byte string into a mono clip.

    Stereo input is mixed down by the arithmetic mean of the two channels.
    Integer PCM is scaled to [-1, 1) by 2^(bits-1).
    """
    if len(data) < 12 or data[:4] != b"RIFF" or data[8:12] != b"WAVE":
        raise AudioFormatError("not a RIFF/WAVE container")

    fmt = None
    payload = None
    for cid, start, size in _iter_riff_chunks(data):
        if cid == b"fmt " and fmt is None:
            if size < 16 or start + 16 > len(data):
                raise AudioFormatError("truncated fmt chunk")
            fmt = struct.unpack_from("<HHIIHH", data, start)
        elif cid == b"data" and payload is None:
            end = min(start + size, len(data))
            payload = data[start:end]
    if fmt is None:
        raise AudioFormatError("missing fmt chunk")
    if payload is None:
        raise AudioFormatError("missing data chunk")

    audio_format, channels, sample_rate, _, block_align, bits = fmt
    if audio_format not in (_WAVE_FORMAT_PCM, _WAVE_FORMAT_IEEE_FLOAT):
        raise UnsupportedEncodingError(f"unsupported audio format code {audio_format}")
    if channels not in (1, 2):
        raise UnsupportedEncodingError(f"unsupported channel count {channels}")
    if sample_rate <= 0:
        raise AudioFormatError(f"bad sample rate {sample_rate}")
    if not payload:
        raise EmptyAudioError("zero-length data chunk")

    if audio_format == _WAVE_FORMAT_PCM:
        if bits == 16:
            raw = np.frombuffer(payload[: len(payload) - len(payload) % 2], dtype="<i2")
            samples = raw.astype(np.float64) / 2.0**15
        elif bits == 24:
            usable = len(payload) - len(payload) % 3
            b = np.frombuffer(payload[:usable], dtype=np.uint8).reshape(-1, 3).astype(np.int32)
            raw = b[:, 0] | (b[:, 1] << 8) | (b[:, 2] << 16)
            raw = np.where(raw & 0x800000, raw - (1 << 24), raw)
            samples = raw.astype(np.float64) / 2.0**23
        elif bits == 32:
            raw = np.frombuffer(payload[: len(payload) - len(payload) % 4], dtype="<i4")
            samples = raw.astype(np.float64) / 2.0**31
        else:
            raise UnsupportedEncodingError(f"unsupported PCM bit depth {bits}")
    else:
        if bits != 32:
            raise UnsupportedEncodingError(f"unsupported float bit depth {bits}")
        raw = np.frombuffer(payload[: len(payload) - len(payload) % 4], dtype="<f4")
        if raw.size and not np.all(np.isfinite(raw)):
            raise AudioFormatError("float payload contains non-finite samples")
        samples = raw.astype(np.float64)

    if samples.size == 0:
        raise EmptyAudioError("data chunk holds no complete sample")
    if channels == 2:
        samples = samples[: samples.size - samples.size % 2].reshape(-1, 2).mean(axis=1)

    return AudioClip(samples, int(sample_rate), source_id)


def encode_wav(clip: AudioClip) -> bytes:
    """Encode a clip as PCM16 mono RIFF/WAVE."""
    if len(clip) == 0:
        raise EmptyAudioError("cannot encode an empty clip")
    peak = float(np.max(np.abs(clip.samples)))
    if peak > 1.0:
        raise ParameterError(f"samples outside [-1, 1] (peak {peak:.6g}); normalize first")

    pcm = np.clip(np.round(clip.samples * 2.0**15), -(2**15), 2**15 - 1).astype("<i2")
    payload = pcm.tobytes()
    byte_rate = clip.sample_rate * 2
    header = b"RIFF" + struct.pack("<I", 36 + len(payload)) + b"WAVE"
    header += b"fmt " + struct.pack(
        "<IHHIIHH", 16, _WAVE_FORMAT_PCM, 1, clip.sample_rate, byte_rate, 2, 16
    )
    header += b"data" + struct.pack("<I", len(payload))
    return header + payload


def read_wav(path) -> AudioClip:
    with open(path, "rb") as fh:
        return decode_wav(fh.read(), source_id=str(path))


def write_wav(path, clip: AudioClip) -> None:
    with open(path, "wb") as fh:
        fh.write(encode_wav(clip))


def _kaiser_sinc(offsets: np.ndarray, scale: float, half_width: float) -> np.ndarray:
    """Anti-aliased interpolation kernel evaluated at fractional tap offsets."""
    window = np.zeros_like(offsets)
    inside = np.abs(offsets) <= half_width
    t = offsets[inside] / half_width
    window[inside] = np.i0(_KAISER_BETA * np.sqrt(1.0 - t * t)) / np.i0(_KAISER_BETA)
    return scale * np.sinc(scale * offsets) * window


def resample_ratio(samples: np.ndarray, ratio: float) -> np.ndarray:
    """Resample a waveform by an arbitrary rate ratio (out rate / in rate).

    Windowed-sinc interpolation; when downsampling the kernel is widened by
    1/ratio so the cutoff sits at the output Nyquist.
    """
    if not np.isfinite(ratio) or ratio <= 0:
        raise ParameterError(f"resampling ratio must be positive, got {ratio}")
    x = np.asarray(samples, dtype=np.float64)
    n_out = int(round(x.size * ratio))
    if n_out == 0:
        return np.zeros(0)
    scale = min(1.0, ratio)
    half_width = _HALF_TAPS / scale
    pad = int(np.ceil(half_width)) + 1
    padded = np.concatenate([np.zeros(pad), x, np.zeros(pad)])

    out = np.empty(n_out)
    k = np.arange(-int(np.ceil(half_width)), int(np.ceil(half_width)) + 1)
    for start in range(0, n_out, 65536):  # bound the tap matrix to ~64k rows
        idx = np.arange(start, min(start + 65536, n_out))
        pos = idx / ratio
        base = np.floor(pos).astype(np.int64)
        offsets = (pos - base)[:, None] - k[None, :]
        weights = _kaiser_sinc(offsets, scale, half_width)
        gathered = padded[base[:, None] + k[None, :] + pad]
        out[idx] = np.sum(gathered * weights, axis=1)
    return out


def resample(clip: AudioClip, target_rate: int) -> AudioClip:
    """Convert a clip to ``target_rate``; identity when rates already match."""
    if target_rate <= 0:
        raise ParameterError(f"target_rate must be positive, got {target_rate}")
    if target_rate == clip.sample_rate:
        return clip
    out = resample_ratio(clip.samples, target_rate / clip.sample_rate)
    return AudioClip(out, target_rate, clip.source_id)


def normalize_amplitude(clip: AudioClip) -> AudioClip:
    """Scale so the peak magnitude is exactly 1; all-zero clips pass through."""
    if len(clip) == 0:
        return clip
    peak = float(np.max(np.abs(clip.samples)))
    if peak == 0.0:
        return clip
    return clip.with_samples(clip.samples / peak)
