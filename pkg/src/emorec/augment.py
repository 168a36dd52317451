"""Audio augmentation transforms and the class-balancing planner.

Four label-preserving transforms (time stretch, pitch shift, gain, noise
mixing) plus a deterministic planner that decides which augmented copies to
create so every emotion class reaches a target count.
"""
from __future__ import annotations

import hashlib
import json
import math
from dataclasses import dataclass, field

import numpy as np

from .audio_io import AudioClip, resample_ratio
from .errors import DegenerateNoiseError, MissingSourceError, ParameterError

_N_FFT = 1024
_HOP = 256

STRETCH_BOUNDS = (0.5, 2.0)
KIND_ORDER = ("stretch", "pitch_shift", "gain", "noise_mix")

# Mild default parameter ranges; wide enough to vary, narrow enough that the
# emotion label survives the transform.
DEFAULT_RANGES = {
    "stretch": (0.8, 1.2),
    "pitch_shift": (-2.0, 2.0),
    "gain": (-6.0, 6.0),
    "noise_mix": (10.0, 20.0),
}


def _limit_peak(samples: np.ndarray) -> np.ndarray:
    peak = float(np.max(np.abs(samples))) if samples.size else 0.0
    if peak > 1.0:
        return samples / peak
    return samples


def _analysis_frames(x: np.ndarray) -> np.ndarray:
    n_frames = max(1, math.ceil(max(x.size - _N_FFT, 0) / _HOP) + 1)
    needed = (n_frames - 1) * _HOP + _N_FFT
    if x.size < needed:
        x = np.concatenate([x, np.zeros(needed - x.size)])
    idx = np.arange(_N_FFT)[None, :] + _HOP * np.arange(n_frames)[:, None]
    return x[idx]


def _overlap_add(frames: np.ndarray, window: np.ndarray) -> np.ndarray:
    n_frames = frames.shape[0]
    total = _N_FFT + _HOP * (n_frames - 1)
    out = np.zeros(total)
    norm = np.zeros(total)
    wsq = window * window
    for i in range(n_frames):
        sl = slice(i * _HOP, i * _HOP + _N_FFT)
        out[sl] += frames[i]
        norm[sl] += wsq
    return out / np.maximum(norm, 1e-8)


def time_stretch(clip: AudioClip, rate: float, seed: int = 0) -> AudioClip:
    """Change speed without changing pitch (phase vocoder, Hann 1024 / hop 256).

    Output duration is the input duration divided by ``rate``, accurate to
    within one hop. The transform is fully deterministic; ``seed`` is part
    of the stable call signature and unused.
    """
    if not STRETCH_BOUNDS[0] <= rate <= STRETCH_BOUNDS[1]:
        raise ParameterError(f"stretch rate {rate} outside {STRETCH_BOUNDS}")
    if rate == 1.0:
        return clip.with_samples(clip.samples.copy())

    x = clip.samples
    target_len = int(round(x.size / rate))
    window = np.hanning(_N_FFT)
    spec = np.fft.rfft(_analysis_frames(x) * window[None, :], axis=1)
    n_frames = spec.shape[0]
    if n_frames < 2:
        spec = np.vstack([spec, spec])
        n_frames = 2

    steps = np.arange(0.0, n_frames - 1, rate)
    omega = 2.0 * np.pi * _HOP * np.arange(spec.shape[1]) / _N_FFT
    mags = np.abs(spec)
    phases = np.angle(spec)

    out_spec = np.empty((steps.size, spec.shape[1]), dtype=complex)
    phase_acc = phases[0].copy()
    for j, t in enumerate(steps):
        i = int(t)
        frac = t - i
        mag = (1.0 - frac) * mags[i] + frac * mags[i + 1]
        out_spec[j] = mag * np.exp(1j * phase_acc)
        # Instantaneous frequency: deviation of the measured phase advance
        # from the bin's expected advance, wrapped to (-pi, pi].
        dphi = phases[i + 1] - phases[i] - omega
        dphi -= 2.0 * np.pi * np.round(dphi / (2.0 * np.pi))
        phase_acc += omega + dphi

    rebuilt = np.fft.irfft(out_spec, n=_N_FFT, axis=1) * window[None, :]
    y = _overlap_add(rebuilt, window)
    if y.size < target_len:
        y = np.concatenate([y, np.zeros(target_len - y.size)])
    return clip.with_samples(_limit_peak(y[:target_len]))


def pitch_shift(clip: AudioClip, semitones: float, seed: int = 0) -> AudioClip:
    """Shift pitch by a number of semitones without changing duration.

    Stretches duration by 2^(s/12) with the phase vocoder, then resamples by
    the inverse factor; the tail is trimmed or zero-padded so the output
    length equals the input length exactly.
    """
    if not np.isfinite(semitones) or abs(semitones) > 12.0:
        raise ParameterError(f"semitones must be in [-12, 12], got {semitones}")
    if semitones == 0.0:
        return clip.with_samples(clip.samples.copy())
    factor = 2.0 ** (semitones / 12.0)
    stretched = time_stretch(clip, 1.0 / factor, seed)
    y = resample_ratio(stretched.samples, 1.0 / factor)
    n = len(clip)
    if y.size < n:
        y = np.concatenate([y, np.zeros(n - y.size)])
    return clip.with_samples(_limit_peak(y[:n]))


def apply_gain(clip: AudioClip, gain_db: float) -> AudioClip:
    """Scale every sample by 10^(gain_db / 20); no clipping is applied."""
    if not np.isfinite(gain_db):
        raise ParameterError(f"gain_db must be finite, got {gain_db}")
    return clip.with_samples(clip.samples * 10.0 ** (gain_db / 20.0))


def mix_noise(clip: AudioClip, noise: AudioClip, snr_db: float, seed: int = 0) -> AudioClip:
    """Add background noise at a target signal-to-noise ratio.

    The noise is looped or truncated to the clip length starting at offset
    zero, then scaled so 10*log10(P_signal / P_noise) equals ``snr_db`` with
    P the mean squared amplitude. If the sum peaks above 1 it is rescaled
    into [-1, 1].
    """
    if noise.sample_rate != clip.sample_rate:
        raise ParameterError(
            f"sample rate mismatch: clip {clip.sample_rate}, noise {noise.sample_rate}"
        )
    x = clip.samples
    p_signal = float(np.mean(x * x)) if x.size else 0.0
    if p_signal == 0.0:
        raise ParameterError("cannot target an SNR against a silent clip")
    looped = np.resize(noise.samples, x.size)
    p_noise = float(np.mean(looped * looped))
    if p_noise == 0.0:
        raise DegenerateNoiseError("noise clip is silent over the mixing span")
    scale = math.sqrt(p_signal / (p_noise * 10.0 ** (snr_db / 10.0)))
    return clip.with_samples(_limit_peak(x + scale * looped))


@dataclass(frozen=True)
class AugmentSpec:
    """One augmentation to apply; only the active kind's parameter is set."""

    kind: str
    rate: float | None = None
    semitones: float | None = None
    gain_db: float | None = None
    snr_db: float | None = None
    noise_id: str | None = None
    seed: int = 0

    _REQUIRED = {
        "stretch": ("rate",),
        "pitch_shift": ("semitones",),
        "gain": ("gain_db",),
        "noise_mix": ("snr_db", "noise_id"),
    }

    def __post_init__(self):
        if self.kind not in self._REQUIRED:
            raise ParameterError(f"unknown augmentation kind {self.kind!r}")
        for name in self._REQUIRED[self.kind]:
            if getattr(self, name) is None:
                raise ParameterError(f"{self.kind} spec is missing {name}")


@dataclass(frozen=True)
class PlanEntry:
    source_id: str
    spec: AugmentSpec
    new_id: str
    emotion: int


@dataclass(frozen=True)
class BalancePlan:
    entries: tuple[PlanEntry, ...]
    target_per_class: int
    unbalanceable: tuple[int, ...] = ()

    def __len__(self) -> int:
        return len(self.entries)


def _entry_seed(seed: int, new_id: str) -> int:
    digest = hashlib.blake2b(f"{seed}:{new_id}".encode(), digest_size=8).digest()
    return int.from_bytes(digest, "big")


def plan_balance(
    sources_by_class: dict,
    target_per_class: int,
    seed: int = 0,
    ranges: dict | None = None,
    noise_ids=None,
    max_copies_per_source: int = 3,
) -> BalancePlan:
    """Plan augmented copies so each class reaches ``target_per_class``.

    Args:
        sources_by_class: emotion code -> list of source utterance ids.
        target_per_class: desired count per class after augmentation.
        seed: master seed; every entry draws its parameters from an RNG
            keyed by (seed, new id), so plans are order-independent and
            reproducible.
        ranges: optional overrides of DEFAULT_RANGES, per kind.
        noise_ids: identifiers of available noise clips. Without any, the
            noise_mix kind is skipped in the cycle.
        max_copies_per_source: cap on augmented copies of one utterance.
            A class whose sources exhaust the cap stays below target.

    Classes with zero sources are listed in ``unbalanceable`` rather than
    raising. Entry kinds cycle stretch -> pitch_shift -> gain -> noise_mix.
    """
    if target_per_class < 0:
        raise ParameterError("target_per_class must be non-negative")
    bounds = dict(DEFAULT_RANGES)
    if ranges:
        bounds.update(ranges)
    noise_ids = sorted(noise_ids) if noise_ids else []
    kinds = KIND_ORDER if noise_ids else KIND_ORDER[:3]

    entries: list[PlanEntry] = []
    unbalanceable: list[int] = []
    for emotion in sorted(sources_by_class):
        ids = sorted(sources_by_class[emotion])
        deficit = target_per_class - len(ids)
        if deficit <= 0:
            continue
        if not ids:
            unbalanceable.append(int(emotion))
            continue
        n_new = min(deficit, max_copies_per_source * len(ids))
        for j in range(n_new):
            src = ids[j % len(ids)]
            copy_idx = j // len(ids) + 1
            kind = kinds[j % len(kinds)]
            new_id = f"{src}.aug{copy_idx}.{kind}"
            entry_seed = _entry_seed(seed, new_id)
            rng = np.random.default_rng(entry_seed)
            lo, hi = bounds[kind]
            if kind == "stretch":
                spec = AugmentSpec("stretch", rate=float(rng.uniform(lo, hi)), seed=entry_seed)
            elif kind == "pitch_shift":
                spec = AugmentSpec(
                    "pitch_shift", semitones=float(rng.uniform(lo, hi)), seed=entry_seed
                )
            elif kind == "gain":
                spec = AugmentSpec("gain", gain_db=float(rng.uniform(lo, hi)), seed=entry_seed)
            else:
                spec = AugmentSpec(
                    "noise_mix",
                    snr_db=float(rng.uniform(lo, hi)),
                    noise_id=noise_ids[int(rng.integers(len(noise_ids)))],
                    seed=entry_seed,
                )
            entries.append(PlanEntry(src, spec, new_id, int(emotion)))
    return BalancePlan(tuple(entries), target_per_class, tuple(unbalanceable))


def apply_spec(clip: AudioClip, spec: AugmentSpec, fetch_noise=None) -> AudioClip:
    """Run one augmentation spec against a clip."""
    if spec.kind == "stretch":
        return time_stretch(clip, spec.rate, spec.seed)
    if spec.kind == "pitch_shift":
        return pitch_shift(clip, spec.semitones, spec.seed)
    if spec.kind == "gain":
        return apply_gain(clip, spec.gain_db)
    if fetch_noise is None:
        raise ParameterError("noise_mix spec requires a noise fetcher")
    try:
        noise = fetch_noise(spec.noise_id)
    except KeyError:
        raise MissingSourceError(spec.noise_id) from None
    return mix_noise(clip, noise, spec.snr_db, spec.seed)


def execute_plan(plan: BalancePlan, fetch, fetch_noise=None):
    """Materialize a plan: list of (new id, AudioClip, emotion) in plan order.

    ``fetch`` maps a source utterance id to its AudioClip; ``fetch_noise``
    resolves noise ids (defaults to ``fetch``). Unknown ids raise
    MissingSourceError naming the id. Outputs are rescaled into [-1, 1] if
    a transform pushed them outside; sources are never modified.
    """
    if fetch_noise is None:
        fetch_noise = fetch
    results = []
    for entry in plan.entries:
        try:
            clip = fetch(entry.source_id)
        except KeyError:
            raise MissingSourceError(entry.source_id) from None
        out = apply_spec(clip, entry.spec, fetch_noise)
        results.append((entry.new_id, out.with_samples(_limit_peak(out.samples)), entry.emotion))
    return results


def _spec_to_dict(spec: AugmentSpec) -> dict:
    out = {"kind": spec.kind, "seed": int(spec.seed)}
    for name in AugmentSpec._REQUIRED[spec.kind]:
        value = getattr(spec, name)
        out[name] = value if isinstance(value, str) else float(value)
    return out


def _spec_from_dict(payload: dict) -> AugmentSpec:
    kwargs = {k: v for k, v in payload.items()}
    return AugmentSpec(**kwargs)


def save_plan(path, plan: BalancePlan) -> None:
    doc = {
        "target_per_class": int(plan.target_per_class),
        "unbalanceable": [int(e) for e in plan.unbalanceable],
        "entries": [
            {
                "source_id": e.source_id,
                "new_id": e.new_id,
                "emotion": int(e.emotion),
                "spec": _spec_to_dict(e.spec),
            }
            for e in plan.entries
        ],
    }
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(doc, fh, indent=2, sort_keys=True)
        fh.write("\n")


def load_plan(path) -> BalancePlan:
    with open(path, encoding="utf-8") as fh:
        doc = json.load(fh)
    entries = tuple(
        PlanEntry(e["source_id"], _spec_from_dict(e["spec"]), e["new_id"], int(e["emotion"]))
        for e in doc["entries"]
    )
    return BalancePlan(entries, int(doc["target_per_class"]), tuple(doc["unbalanceable"]))
