"""Command-line pipeline driver.

Each subcommand covers one pipeline stage (curate, split, augment,
featurize, spectrogram, train, train-head, evaluate, predict, serve) so
every intermediate artifact can be regenerated independently. Every run
drops a reproducibility record (config hash, seeds, output checksums)
under <work dir>/runs/; records contain no timestamps, so identical runs
write identical records.
"""
from __future__ import annotations

import argparse
import hashlib
import json
import os
import sys

import numpy as np

from . import augment as aug
from . import classic_ml, metrics, neural_net, service
from .audio_io import read_wav, resample, write_wav
from .config import PipelineConfig, config_hash, load_config
from .corpus import (
    EMOTION_NAMES,
    Emotion,
    SplitConfig,
    UtteranceRecord,
    corpus_stats,
    load_manifest,
    read_records,
    split_train_val,
    stratified_split,
    write_records,
)
from .errors import EmorecError, ParameterError
from .features import (
    apply_scaler,
    extract_feature_vector,
    fit_scaler,
    image_stft,
    load_scaler,
    read_feature_csv,
    save_scaler,
    save_spectrogram_png,
    spectrogram_image,
    spectrogram_image_name,
    write_feature_csv,
)
from .preprocess import PreprocessConfig, block_1s, preprocess_clip


def _file_sha(path: str) -> str:
    h = hashlib.sha256()
    with open(path, "rb") as fh:
        for chunk in iter(lambda: fh.read(1 << 20), b""):
            h.update(chunk)
    return h.hexdigest()


def _dir_sha(path: str) -> str:
    """Digest of a directory: hash of sorted (relative name, file hash) pairs."""
    h = hashlib.sha256()
    for root, dirs, files in sorted(os.walk(path)):
        dirs.sort()
        for name in sorted(files):
            full = os.path.join(root, name)
            rel = os.path.relpath(full, path)
            h.update(rel.encode("utf-8"))
            h.update(_file_sha(full).encode("ascii"))
    return h.hexdigest()


def _write_run_record(work_dir: str, command: str, args_doc: dict,
                      seeds: dict, outputs: list, cfg_hash: str | None) -> None:
    runs = os.path.join(work_dir, "runs")
    os.makedirs(runs, exist_ok=True)
    checksums = {}
    for out in outputs:
        if os.path.isdir(out):
            checksums[out] = _dir_sha(out)
        elif os.path.isfile(out):
            checksums[out] = _file_sha(out)
    record = {
        "command": command,
        "args": args_doc,
        "config_hash": cfg_hash,
        "seeds": seeds,
        "outputs": checksums,
    }
    with open(os.path.join(runs, f"{command}.json"), "w", encoding="utf-8") as fh:
        json.dump(record, fh, sort_keys=True, indent=2)
        fh.write("\n")


def _load_cfg(args) -> PipelineConfig:
    if getattr(args, "config", None):
        return load_config(args.config)
    return PipelineConfig()


def _args_doc(args) -> dict:
    doc = {k: v for k, v in vars(args).items() if k not in ("func", "work_dir")}
    return {k: v for k, v in doc.items() if v is not None}


# each handler returns (seeds dict, output paths, config hash or None)

def _cmd_curate(args):
    records, drops = load_manifest(args.manifest)
    write_records(args.out, records)
    for (dataset, raw_label), n in sorted(drops.items()):
        print(f"dropped {n:5d}  {dataset:<10} {raw_label}")
    print(f"curated {len(records)} records -> {args.out}")
    print(corpus_stats(records).to_text())
    return {}, [args.out], None


def _cmd_split(args):
    records = read_records(args.records)
    cfg = SplitConfig(
        test_fraction=args.test_frac,
        val_fraction_of_train=args.val_frac,
        seed=args.seed,
    )
    records = stratified_split(records, cfg, speaker_grouped=args.speaker_grouped)
    records = split_train_val(records, cfg, speaker_grouped=args.speaker_grouped)
    out = args.out or args.records
    write_records(out, records)
    for name in ("train", "val", "test"):
        n = sum(1 for r in records if r.split == name)
        print(f"{name:>6}: {n}")
    return {"split_seed": args.seed}, [out], None


def _parse_targets(text: str, pool) -> int:
    if text in ("balance", "max"):
        counts = {}
        for r in pool:
            counts[int(r.label)] = counts.get(int(r.label), 0) + 1
        if not counts:
            raise ParameterError("no train records to balance")
        return max(counts.values())
    try:
        target = int(text)
    except ValueError:
        raise ParameterError(
            f"--targets must be an integer per-class count or 'balance', got {text!r}"
        ) from None
    if target < 0:
        raise ParameterError("--targets must be non-negative")
    return target


def _noise_table(noise_dir: str | None):
    if not noise_dir:
        return {}
    table = {}
    for name in sorted(os.listdir(noise_dir)):
        if not name.lower().endswith(".wav"):
            continue
        stem = name[: name.rfind(".")]
        table[stem] = os.path.join(noise_dir, name)
    return table


def _cmd_augment(args):
    records = read_records(args.records)
    pre = PreprocessConfig()
    pool = [r for r in records if r.split == "train" and r.augmented_from is None]
    if not pool:
        raise ParameterError("no non-augmented train records; run split first")
    target = _parse_targets(args.targets, pool)

    sources_by_class: dict[int, list[str]] = {}
    by_id = {}
    for r in pool:
        sources_by_class.setdefault(int(r.label), []).append(r.utt_id)
        by_id[r.utt_id] = r
    noise_paths = _noise_table(args.noise_dir)

    plan = aug.plan_balance(
        sources_by_class,
        target,
        seed=args.seed,
        noise_ids=sorted(noise_paths) or None,
    )
    aug.save_plan(args.plan, plan)

    # all audio is brought to the pipeline rate before transforms so noise
    # and source rates always agree
    def fetch(utt_id: str):
        return resample(read_wav(by_id[utt_id].path), pre.target_rate)

    def fetch_noise(noise_id: str):
        return resample(read_wav(noise_paths[noise_id]), pre.target_rate)

    os.makedirs(args.out_dir, exist_ok=True)
    new_records = []
    results = aug.execute_plan(plan, fetch, fetch_noise)
    for entry, (new_id, clip, emotion) in zip(plan.entries, results):
        path = os.path.join(args.out_dir, f"{new_id}.wav")
        write_wav(path, clip)
        src = by_id[entry.source_id]
        new_records.append(
            UtteranceRecord(
                utt_id=new_id,
                path=path,
                dataset=src.dataset,
                raw_label=src.raw_label,
                label=Emotion(emotion),
                split="train",
                augmented_from=src.utt_id,
                speaker=src.speaker,
                gender=src.gender,
            )
        )
    out = args.out or args.records
    write_records(out, list(records) + new_records)
    print(f"planned {len(plan)} augmented clips -> {args.out_dir}")
    if plan.unbalanceable:
        names = ", ".join(EMOTION_NAMES[c] for c in plan.unbalanceable)
        print(f"unbalanceable classes (no sources): {names}")
    return {"augment_seed": args.seed}, [args.plan, args.out_dir, out], None


def _select_records(records, split: str):
    if split == "all":
        return list(records)
    return [r for r in records if r.split == split]


def _feature_rows(records, pre: PreprocessConfig):
    ids, labels, rows, skipped = [], [], [], 0
    min_samples = int(round(pre.min_duration_s * pre.target_rate))
    for r in records:
        clip = preprocess_clip(read_wav(r.path), pre)
        if len(clip) < min_samples:
            skipped += 1
            continue
        ids.append(r.utt_id)
        labels.append(int(r.label))
        rows.append(extract_feature_vector(clip))
    return ids, labels, rows, skipped


def _cmd_featurize(args):
    records = _select_records(read_records(args.records), args.split)
    pre = PreprocessConfig()
    ids, labels, rows, skipped = _feature_rows(records, pre)
    if not rows:
        raise ParameterError("no records survived preprocessing")
    matrix = np.vstack(rows)
    outputs = [args.out]
    if args.fit_scaler:
        if not args.scaler:
            raise ParameterError("--fit-scaler requires --scaler PATH")
        params = fit_scaler(matrix, fitted_on=args.split)
        save_scaler(args.scaler, params)
        outputs.append(args.scaler)
    elif args.scaler:
        matrix = apply_scaler(load_scaler(args.scaler), matrix)
    write_feature_csv(args.out, ids, labels, matrix)
    note = f", skipped {skipped} too-short clips" if skipped else ""
    print(f"wrote {len(ids)} x {matrix.shape[1]} features -> {args.out}{note}")
    return {}, outputs, None


def _cmd_spectrogram(args):
    records = _select_records(read_records(args.records), args.split)
    pre = PreprocessConfig()
    os.makedirs(args.out_dir, exist_ok=True)
    n_images = 0
    skipped = 0
    for r in records:
        clip = preprocess_clip(read_wav(r.path), pre)
        if len(clip) < clip.sample_rate:
            skipped += 1
            continue
        for k, block in enumerate(block_1s(clip, overlap_ms=args.overlap_ms)):
            image = spectrogram_image(image_stft(block))
            save_spectrogram_png(
                os.path.join(args.out_dir, spectrogram_image_name(r.utt_id, k)), image
            )
            n_images += 1
    note = f", skipped {skipped} too-short clips" if skipped else ""
    print(f"wrote {n_images} images -> {args.out_dir}{note}")
    return {}, [args.out_dir], None


def _resolve_scaler(args, matrix):
    if getattr(args, "no_scale", False):
        return None, matrix
    if getattr(args, "scaler", None):
        params = load_scaler(args.scaler)
        return params, apply_scaler(params, matrix)
    params = fit_scaler(matrix, fitted_on="train")
    return params, apply_scaler(params, matrix)


def _cmd_train(args):
    cfg = _load_cfg(args)
    ids, labels, matrix = read_feature_csv(args.features)
    params, scaled = _resolve_scaler(args, matrix)
    data = classic_ml.DesignMatrix(scaled, np.asarray(labels), tuple(ids))

    if args.model in ("mlp", "cnn1d"):
        if args.model == "cnn1d":
            net = neural_net.build_cnn1d(matrix.shape[1], seed=cfg.train.seed)
        else:
            hidden = cfg.hyperparameters.get("hidden", [128, 64])
            net = neural_net.build_mlp(hidden, input_dim=matrix.shape[1], seed=cfg.train.seed)
        artifact, trace = neural_net.train(
            net, data, cfg.train, scaler=params, architecture=args.model
        )
        for epoch, loss in enumerate(trace, start=1):
            print(f"epoch {epoch:3d}  loss {loss:.6f}")
        seeds = {"train_seed": cfg.train.seed}
    else:
        artifact = classic_ml.fit_model(args.model, data, cfg.hyperparameters or None,
                                        scaler=params)
        seeds = {}
        if "seed" in artifact.hyperparameters:
            seeds["model_seed"] = artifact.hyperparameters["seed"]
    classic_ml.save_artifact(artifact, args.out)
    print(f"trained {args.model} on {data.n} rows -> {args.out}")
    return seeds, [args.out], config_hash(cfg) if args.config else None


def _cmd_train_head(args):
    cfg = _load_cfg(args)
    artifact, trace = neural_net.train_head(args.embeddings, cfg.train,
                                            fuse=not args.no_fuse)
    for epoch, loss in enumerate(trace, start=1):
        print(f"epoch {epoch:3d}  loss {loss:.6f}")
    classic_ml.save_artifact(artifact, args.out)
    print(f"trained embedding head -> {args.out}")
    return ({"train_seed": cfg.train.seed}, [args.out],
            config_hash(cfg) if args.config else None)


def _cmd_evaluate(args):
    artifact = classic_ml.load_artifact(args.model)
    ids, labels, matrix = read_feature_csv(args.features)
    predicted = classic_ml.predict(artifact, matrix)
    rep = metrics.report(labels, predicted)
    with open(args.report, "w", encoding="utf-8") as fh:
        fh.write(metrics.report_to_json(rep))
    print(metrics.report_to_text(rep), end="")
    return {}, [args.report], None


def _predict_embeddings(artifact, path):
    ids, labels, A, B = neural_net.load_embeddings(path)
    expected = artifact.scaler.mean.size
    if B is not None and A.shape[1] + B.shape[1] == expected:
        X = np.concatenate([A, B], axis=1)
    elif A.shape[1] == expected:
        X = A
    else:
        raise ParameterError(
            f"embedding dims {A.shape[1]}+{B.shape[1] if B is not None else 0} "
            f"do not match the model's {expected} inputs"
        )
    probs = classic_ml.predict_proba(artifact, X)
    for i, uid in enumerate(ids):
        doc = {
            "utt_id": uid,
            "predicted": EMOTION_NAMES[int(np.argmax(probs[i]))],
            "probabilities": {EMOTION_NAMES[c]: float(probs[i][c]) for c in range(7)},
        }
        print(json.dumps(doc, sort_keys=True))


def _cmd_predict(args):
    artifact = classic_ml.load_artifact(args.model)
    if args.embeddings:
        _predict_embeddings(artifact, args.embeddings)
        return {}, [], None
    if not args.wav:
        raise ParameterError("predict needs --wav FILE or --embeddings FILE")
    response = service.prediction_for_clip(artifact, read_wav(args.wav))
    print(json.dumps(response.to_dict(), sort_keys=True, indent=2))
    return {}, [], None


def _cmd_serve(args):
    artifact = classic_ml.load_artifact(args.model)
    host, _, port_text = args.addr.rpartition(":")
    if not host or not port_text.isdigit():
        raise ParameterError(f"--addr must be host:port, got {args.addr!r}")
    service.serve_http(artifact, host, int(port_text))
    return {}, [], None


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="emorec",
        description="Speech emotion recognition pipeline tools.",
    )
    parser.add_argument("--work-dir", default=".",
                        help="where reproducibility records are written")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("curate", help="map a manifest to labeled records")
    p.add_argument("--manifest", required=True)
    p.add_argument("--out", required=True)
    p.set_defaults(func=_cmd_curate)

    p = sub.add_parser("split", help="assign train/val/test splits")
    p.add_argument("--records", required=True)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--test-frac", type=float, default=0.2)
    p.add_argument("--val-frac", type=float, default=0.2)
    p.add_argument("--speaker-grouped", action="store_true")
    p.add_argument("--out", help="defaults to rewriting --records")
    p.set_defaults(func=_cmd_split)

    p = sub.add_parser("augment", help="plan and materialize augmented training clips")
    p.add_argument("--records", required=True)
    p.add_argument("--noise-dir")
    p.add_argument("--targets", default="balance",
                   help="per-class count, or 'balance' for the largest class size")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out-dir", required=True)
    p.add_argument("--plan", required=True)
    p.add_argument("--out", help="defaults to rewriting --records")
    p.set_defaults(func=_cmd_augment)

    p = sub.add_parser("featurize", help="extract 94-dim feature vectors to CSV")
    p.add_argument("--records", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--scaler")
    p.add_argument("--fit-scaler", action="store_true")
    p.add_argument("--split", default="all",
                   choices=("all", "train", "val", "test"))
    p.set_defaults(func=_cmd_featurize)

    p = sub.add_parser("spectrogram", help="render per-second spectrogram images")
    p.add_argument("--records", required=True)
    p.add_argument("--overlap-ms", type=float, default=10.0)
    p.add_argument("--out-dir", required=True)
    p.add_argument("--split", default="all",
                   choices=("all", "train", "val", "test"))
    p.set_defaults(func=_cmd_spectrogram)

    p = sub.add_parser("train", help="fit a model on a feature CSV")
    p.add_argument("--features", required=True)
    p.add_argument("--model", required=True,
                   choices=("knn", "gnb", "logreg", "tree", "forest", "mlp", "cnn1d"))
    p.add_argument("--config", help="TOML/JSON pipeline config")
    p.add_argument("--out", required=True)
    p.add_argument("--scaler", help="apply a previously fitted scaler")
    p.add_argument("--no-scale", action="store_true",
                   help="train on raw features (identity scaler)")
    p.set_defaults(func=_cmd_train)

    p = sub.add_parser("train-head", help="fit the linear head on stored embeddings")
    p.add_argument("--embeddings", required=True)
    p.add_argument("--config", help="TOML/JSON pipeline config")
    p.add_argument("--out", required=True)
    p.add_argument("--no-fuse", action="store_true",
                   help="use only emb_a even when emb_b is present")
    p.set_defaults(func=_cmd_train_head)

    p = sub.add_parser("evaluate", help="score a model on a feature CSV")
    p.add_argument("--model", required=True)
    p.add_argument("--features", required=True)
    p.add_argument("--report", required=True)
    p.set_defaults(func=_cmd_evaluate)

    p = sub.add_parser("predict", help="classify one WAV file or an embedding file")
    p.add_argument("--model", required=True)
    p.add_argument("--wav")
    p.add_argument("--embeddings")
    p.set_defaults(func=_cmd_predict)

    p = sub.add_parser("serve", help="run the HTTP inference service")
    p.add_argument("--model", required=True)
    p.add_argument("--addr", default="127.0.0.1:8000")
    p.set_defaults(func=_cmd_serve)

    return parser


def run_cli(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        seeds, outputs, cfg_hash = args.func(args)
        _write_run_record(args.work_dir, args.command, _args_doc(args),
                          seeds, outputs, cfg_hash)
    except (EmorecError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    return 0


def main(argv=None) -> int:
    return run_cli(argv)


if __name__ == "__main__":
    sys.exit(main())
