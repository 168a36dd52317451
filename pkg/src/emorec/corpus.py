"""Corpus curation: label mapping, manifest ingestion, splits, statistics.

Five source corpora are concatenated into one 7-class corpus. Neutral
variants are dropped everywhere; IEMOCAP's xxx/oth/fru annotations are
dropped and its "exc" (excitement) label is folded into happy.
"""
from __future__ import annotations

import csv
import json
import math
import warnings
from collections import Counter
from dataclasses import dataclass, field, replace
from enum import IntEnum

import numpy as np

from .errors import ManifestError, MappingError, ParameterError


class Emotion(IntEnum):
    """The seven target classes; codes are stable and ordered as listed."""

    ANGRY = 0
    CALM = 1
    DISGUST = 2
    FEARFUL = 3
    HAPPY = 4
    SAD = 5
    SURPRISED = 6

    @property
    def canonical(self) -> str:
        return self.name.lower()

    @classmethod
    def from_name(cls, name: str) -> "Emotion":
        try:
            return cls[name.strip().upper()]
        except KeyError:
            raise MappingError(f"unknown emotion name {name!r}") from None


EMOTION_NAMES = tuple(e.canonical for e in Emotion)

DATASETS = ("CREMA-D", "SAVEE", "TESS", "IEMOCAP", "RAVDESS")

_DROP = "__drop__"

# Raw-label vocabularies per corpus, keyed lowercase. Values are Emotion or
# the drop sentinel. Numeric RAVDESS codes cover filename-derived manifests.
_LABEL_TABLES: dict[str, dict[str, object]] = {
    "CREMA-D": {
        "ang": Emotion.ANGRY,
        "dis": Emotion.DISGUST,
        "fea": Emotion.FEARFUL,
        "hap": Emotion.HAPPY,
        "neu": _DROP,
        "sad": Emotion.SAD,
    },
    "SAVEE": {
        "a": Emotion.ANGRY,
        "d": Emotion.DISGUST,
        "f": Emotion.FEARFUL,
        "h": Emotion.HAPPY,
        "n": _DROP,
        "sa": Emotion.SAD,
        "su": Emotion.SURPRISED,
        "anger": Emotion.ANGRY,
        "disgust": Emotion.DISGUST,
        "fear": Emotion.FEARFUL,
        "happiness": Emotion.HAPPY,
        "neutral": _DROP,
        "sadness": Emotion.SAD,
        "surprise": Emotion.SURPRISED,
    },
    "TESS": {
        "angry": Emotion.ANGRY,
        "disgust": Emotion.DISGUST,
        "fear": Emotion.FEARFUL,
        "happy": Emotion.HAPPY,
        "neutral": _DROP,
        "sad": Emotion.SAD,
        "ps": Emotion.SURPRISED,
        "pleasant_surprise": Emotion.SURPRISED,
        "pleasant surprise": Emotion.SURPRISED,
        "surprise": Emotion.SURPRISED,
    },
    "IEMOCAP": {
        "ang": Emotion.ANGRY,
        "dis": Emotion.DISGUST,
        "exc": Emotion.HAPPY,
        "fea": Emotion.FEARFUL,
        "fru": _DROP,
        "hap": Emotion.HAPPY,
        "neu": _DROP,
        "oth": _DROP,
        "sad": Emotion.SAD,
        "sur": Emotion.SURPRISED,
        "xxx": _DROP,
    },
    "RAVDESS": {
        "neutral": _DROP,
        "calm": Emotion.CALM,
        "happy": Emotion.HAPPY,
        "sad": Emotion.SAD,
        "angry": Emotion.ANGRY,
        "fearful": Emotion.FEARFUL,
        "disgust": Emotion.DISGUST,
        "surprised": Emotion.SURPRISED,
        "01": _DROP,
        "02": Emotion.CALM,
        "03": Emotion.HAPPY,
        "04": Emotion.SAD,
        "05": Emotion.ANGRY,
        "06": Emotion.FEARFUL,
        "07": Emotion.DISGUST,
        "08": Emotion.SURPRISED,
    },
}


def register_label_alias(dataset: str, raw_label: str, emotion: Emotion | None) -> None:
    """Extend a corpus's raw-label vocabulary; emotion None drops the label.

    Corpus releases differ in how labels are spelled; this absorbs variants
    without editing the built-in tables.
    """
    table = _LABEL_TABLES.get(dataset)
    if table is None:
        raise MappingError(f"unknown dataset {dataset!r}")
    table[raw_label.strip().lower()] = _DROP if emotion is None else Emotion(emotion)


def map_label(dataset: str, raw_label: str):
    """Map a corpus-specific raw label to an Emotion, or None if dropped.

    Unknown datasets and unmapped labels raise MappingError naming both.
    """
    table = _LABEL_TABLES.get(dataset)
    if table is None:
        raise MappingError(f"unknown dataset {dataset!r} (label {raw_label!r})")
    mapped = table.get(raw_label.strip().lower())
    if mapped is None:
        raise MappingError(f"unmapped raw label {raw_label!r} for dataset {dataset!r}")
    return None if mapped is _DROP else mapped


@dataclass(frozen=True)
class UtteranceRecord:
    """One labeled audio file and its place in the pipeline."""

    utt_id: str
    path: str
    dataset: str
    raw_label: str
    label: Emotion
    split: str = "unassigned"
    augmented_from: str | None = None
    speaker: str = ""
    gender: str = ""


def sanitize_utt_id(path: str) -> str:
    """Filesystem-safe id: path minus extension, separators flattened."""
    stem = path
    if stem.startswith("./"):
        stem = stem[2:]
    dot = stem.rfind(".")
    if dot > 0:
        stem = stem[:dot]
    return stem.replace("\\", "__").replace("/", "__")


def load_manifest(path):
    """Read a manifest CSV into records, applying the label mapping.

    Expected header: path,dataset,raw_label with optional speaker and gender
    columns. Returns (records, drops) where drops counts removed rows per
    (dataset, raw_label). Duplicate paths and missing columns raise
    ManifestError with the offending row number.
    """
    try:
        fh = open(path, newline="", encoding="utf-8")
    except OSError as exc:
        raise ManifestError(f"cannot read manifest {path}: {exc}") from exc
    records: list[UtteranceRecord] = []
    drops: Counter = Counter()
    seen_paths: set[str] = set()
    seen_ids: set[str] = set()
    with fh:
        reader = csv.reader(fh)
        try:
            header = next(reader)
        except StopIteration:
            raise ManifestError(f"manifest {path} is empty") from None
        header = [h.strip() for h in header]
        required = ["path", "dataset", "raw_label"]
        if header[: len(required)] != required:
            raise ManifestError(
                f"manifest header must start with {','.join(required)}, got {','.join(header)}"
            )
        col = {name: i for i, name in enumerate(header)}
        for row_no, row in enumerate(reader, start=2):
            if not row or all(not c.strip() for c in row):
                continue
            if len(row) < 3:
                raise ManifestError(f"row {row_no}: expected at least 3 columns, got {len(row)}")
            file_path = row[col["path"]].strip()
            dataset = row[col["dataset"]].strip()
            raw_label = row[col["raw_label"]].strip()
            if file_path in seen_paths:
                raise ManifestError(f"row {row_no}: duplicate path {file_path!r}")
            seen_paths.add(file_path)
            try:
                label = map_label(dataset, raw_label)
            except MappingError as exc:
                raise MappingError(f"row {row_no}: {exc}") from None
            if label is None:
                drops[(dataset, raw_label)] += 1
                continue
            utt_id = sanitize_utt_id(file_path)
            if utt_id in seen_ids:
                raise ManifestError(f"row {row_no}: duplicate utterance id {utt_id!r}")
            seen_ids.add(utt_id)
            speaker = row[col["speaker"]].strip() if "speaker" in col and len(row) > col["speaker"] else ""
            gender = row[col["gender"]].strip() if "gender" in col and len(row) > col["gender"] else ""
            records.append(
                UtteranceRecord(utt_id, file_path, dataset, raw_label, label, "unassigned",
                                None, speaker, gender)
            )
    return records, drops


@dataclass(frozen=True)
class SplitConfig:
    test_fraction: float = 0.2
    val_fraction_of_train: float = 0.2
    seed: int = 0

    def __post_init__(self):
        for name in ("test_fraction", "val_fraction_of_train"):
            value = getattr(self, name)
            if not 0.0 < value < 1.0:
                raise ParameterError(f"{name} must be in (0, 1), got {value}")


def _round_half_up(x: float) -> int:
    return int(math.floor(x + 0.5))


def held_out_counts(class_counts: dict, fraction: float) -> dict:
    """Per-class held-out counts: round-half-up, reconciled to the exact total.

    The grand total is ceil(fraction * N). Any difference against the
    per-class rounding is settled by adding to (or removing from) classes in
    order of largest (smallest) fractional part of fraction * n_c, ties
    broken by class code.
    """
    labels = sorted(class_counts)
    n_total = sum(class_counts[c] for c in labels)
    target_total = math.ceil(fraction * n_total)
    base = {}
    fracs = {}
    for c in labels:
        exact = fraction * class_counts[c]
        base[c] = min(_round_half_up(exact), class_counts[c])
        fracs[c] = exact - math.floor(exact)
    diff = target_total - sum(base.values())
    while diff > 0:
        order = sorted(labels, key=lambda c: (-fracs[c], c))
        moved = False
        for c in order:
            if diff == 0:
                break
            if base[c] < class_counts[c]:
                base[c] += 1
                diff -= 1
                moved = True
        if not moved:
            break
    while diff < 0:
        order = sorted(labels, key=lambda c: (fracs[c], c))
        moved = False
        for c in order:
            if diff == 0:
                break
            if base[c] > 0:
                base[c] -= 1
                diff += 1
                moved = True
        if not moved:
            break
    return base


def _select_held(records, fraction: float, rng) -> set:
    """Choose utt_ids to hold out, stratified per class."""
    by_class: dict[int, list[str]] = {}
    for r in records:
        by_class.setdefault(int(r.label), []).append(r.utt_id)
    eligible = {}
    for c in sorted(by_class):
        if len(by_class[c]) < 2:
            warnings.warn(
                f"class {Emotion(c).canonical} has {len(by_class[c])} record(s); "
                "keeping all in train",
                stacklevel=3,
            )
        else:
            eligible[c] = sorted(by_class[c])
    counts = held_out_counts({c: len(ids) for c, ids in eligible.items()}, fraction)
    selected: set[str] = set()
    for c in sorted(eligible):
        ids = eligible[c]
        perm = rng.permutation(len(ids))
        selected.update(ids[i] for i in perm[: counts[c]])
    return selected


def _select_held_by_speaker(records, fraction: float, rng) -> set:
    speakers = sorted({r.speaker for r in records})
    if "" in speakers:
        raise ParameterError("speaker-grouped split needs a speaker for every record")
    per_speaker: dict[str, list[str]] = {s: [] for s in speakers}
    for r in records:
        per_speaker[r.speaker].append(r.utt_id)
    target = math.ceil(fraction * len(records))
    selected: set[str] = set()
    for i in rng.permutation(len(speakers)):
        if len(selected) >= target:
            break
        selected.update(per_speaker[speakers[i]])
    return selected


def stratified_split(records, cfg: SplitConfig, speaker_grouped: bool = False):
    """Assign the test split: held-out fraction test_fraction, rest train.

    Every input record must be unassigned and labeled. Per-class test counts
    follow held_out_counts; assignment is deterministic given cfg.seed. With
    speaker_grouped, whole speakers are held out instead (stratification is
    then only approximate).
    """
    for r in records:
        if r.split != "unassigned":
            raise ParameterError(f"record {r.utt_id} already assigned to {r.split!r}")
    rng = np.random.default_rng([cfg.seed, 0])
    if speaker_grouped:
        held = _select_held_by_speaker(records, cfg.test_fraction, rng)
    else:
        held = _select_held(records, cfg.test_fraction, rng)
    return [replace(r, split="test" if r.utt_id in held else "train") for r in records]


def split_train_val(records, cfg: SplitConfig, speaker_grouped: bool = False):
    """Split the train pool into train/val; other records pass through.

    Only original recordings are eligible for val: augmented copies always
    stay in train, so no synthetic audio leaks into evaluation splits. The
    same per-class rounding applies with val_fraction_of_train.
    """
    train = [r for r in records if r.split == "train" and r.augmented_from is None]
    rng = np.random.default_rng([cfg.seed, 1])
    if speaker_grouped:
        held = _select_held_by_speaker(train, cfg.val_fraction_of_train, rng)
    else:
        held = _select_held(train, cfg.val_fraction_of_train, rng)
    out = []
    for r in records:
        if r.split == "train" and r.augmented_from is None and r.utt_id in held:
            out.append(replace(r, split="val"))
        else:
            out.append(r)
    return out


@dataclass(frozen=True)
class CorpusStats:
    """Per-dataset x per-emotion counts with totals."""

    datasets: tuple[str, ...]
    counts: np.ndarray  # (n_datasets, 7)

    @property
    def emotion_totals(self) -> np.ndarray:
        return self.counts.sum(axis=0)

    @property
    def dataset_totals(self) -> np.ndarray:
        return self.counts.sum(axis=1)

    @property
    def total(self) -> int:
        return int(self.counts.sum())

    def to_text(self) -> str:
        headers = ["dataset"] + list(EMOTION_NAMES) + ["total"]
        rows = [headers]
        for i, name in enumerate(self.datasets):
            rows.append([name] + [str(int(v)) for v in self.counts[i]]
                        + [str(int(self.dataset_totals[i]))])
        rows.append(["total"] + [str(int(v)) for v in self.emotion_totals] + [str(self.total)])
        widths = [max(len(row[j]) for row in rows) for j in range(len(headers))]
        lines = []
        for row in rows:
            lines.append("  ".join(cell.rjust(widths[j]) for j, cell in enumerate(row)))
        return "\n".join(lines)

    def to_csv(self) -> str:
        lines = ["dataset," + ",".join(EMOTION_NAMES) + ",total"]
        for i, name in enumerate(self.datasets):
            lines.append(
                name + "," + ",".join(str(int(v)) for v in self.counts[i])
                + f",{int(self.dataset_totals[i])}"
            )
        lines.append(
            "total," + ",".join(str(int(v)) for v in self.emotion_totals) + f",{self.total}"
        )
        return "\n".join(lines) + "\n"


def corpus_stats(records) -> CorpusStats:
    """Count records per (dataset, emotion); all five datasets always appear."""
    datasets = list(DATASETS)
    extra = sorted({r.dataset for r in records} - set(datasets))
    datasets += extra
    index = {name: i for i, name in enumerate(datasets)}
    counts = np.zeros((len(datasets), len(Emotion)), dtype=np.int64)
    for r in records:
        counts[index[r.dataset], int(r.label)] += 1
    return CorpusStats(tuple(datasets), counts)


def record_to_dict(record: UtteranceRecord) -> dict:
    return {
        "utt_id": record.utt_id,
        "path": record.path,
        "dataset": record.dataset,
        "raw_label": record.raw_label,
        "label": record.label.canonical,
        "split": record.split,
        "augmented_from": record.augmented_from,
        "speaker": record.speaker,
        "gender": record.gender,
    }


def record_from_dict(payload: dict) -> UtteranceRecord:
    return UtteranceRecord(
        payload["utt_id"],
        payload["path"],
        payload["dataset"],
        payload["raw_label"],
        Emotion.from_name(payload["label"]),
        payload.get("split", "unassigned"),
        payload.get("augmented_from"),
        payload.get("speaker", ""),
        payload.get("gender", ""),
    )


def write_records(path, records) -> None:
    """One record per line as JSON, stable key order."""
    with open(path, "w", encoding="utf-8") as fh:
        for r in records:
            fh.write(json.dumps(record_to_dict(r), sort_keys=True))
            fh.write("\n")


def read_records(path):
    records = []
    with open(path, encoding="utf-8") as fh:
        for line in fh:
            line = line.strip()
            if line:
                records.append(record_from_dict(json.loads(line)))
    return records
