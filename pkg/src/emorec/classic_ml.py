"""Classical baselines trained from scratch: KNN, Gaussian naive Bayes,
multinomial logistic regression, CART decision tree, and random forest.

Every fitted model becomes a ModelArtifact bundling the scaler it was
trained with; predict_proba applies that scaler, so callers always pass raw
feature rows. Probability rows are non-negative and sum to 1; hard labels
break ties toward the lowest class code.
"""
from __future__ import annotations

import hashlib
import json
import math
from dataclasses import dataclass, field

import numpy as np
from scipy.special import logsumexp

from .corpus import EMOTION_NAMES, Emotion
from .errors import (
    ArtifactIntegrityError,
    ArtifactVersionError,
    ParameterError,
    ShapeError,
)
from .features import ScalerParams, apply_scaler, identity_scaler, scaler_from_dict, scaler_to_dict

FORMAT_VERSION = 1
N_CLASSES = len(Emotion)

MODEL_DEFAULTS = {
    "knn": {"k": 5, "weighting": "uniform"},
    "gnb": {},
    "logreg": {"lr": 0.1, "epochs": 1000, "l2": 1e-4},
    "tree": {"max_depth": 20, "min_samples_leaf": 2},
    "forest": {
        "n_trees": 100,
        "max_depth": 20,
        "min_samples_leaf": 2,
        "bootstrap": True,
        "max_features": "sqrt",
        "seed": 0,
    },
}


@dataclass(frozen=True)
class DesignMatrix:
    """Feature rows, integer emotion codes, and the utterance ids behind them."""

    rows: np.ndarray
    labels: np.ndarray
    ids: tuple[str, ...] = ()

    def __post_init__(self):
        rows = np.asarray(self.rows, dtype=np.float64)
        labels = np.asarray(self.labels, dtype=np.int64)
        object.__setattr__(self, "rows", rows)
        object.__setattr__(self, "labels", labels)
        if rows.ndim != 2 or rows.shape[0] < 1:
            raise ShapeError(f"rows must be a non-empty 2-D matrix, got shape {rows.shape}")
        if labels.shape != (rows.shape[0],):
            raise ShapeError("labels must align with rows")
        if not np.all(np.isfinite(rows)):
            raise ParameterError("rows contain non-finite values")
        if labels.min() < 0 or labels.max() >= N_CLASSES:
            raise ParameterError("labels must be emotion codes 0..6")
        if self.ids and len(self.ids) != rows.shape[0]:
            raise ShapeError("ids must align with rows")

    @property
    def n(self) -> int:
        return self.rows.shape[0]

    @property
    def d(self) -> int:
        return self.rows.shape[1]


@dataclass(frozen=True)
class ModelArtifact:
    """A trained model plus everything needed to run it elsewhere."""

    kind: str
    hyperparameters: dict
    payload: dict
    scaler: ScalerParams
    label_set: tuple[str, ...] = EMOTION_NAMES
    format_version: int = FORMAT_VERSION


def _one_hot(labels: np.ndarray, n_classes: int = N_CLASSES) -> np.ndarray:
    out = np.zeros((labels.size, n_classes))
    out[np.arange(labels.size), labels] = 1.0
    return out


def _softmax(logits: np.ndarray) -> np.ndarray:
    shifted = logits - logits.max(axis=1, keepdims=True)
    e = np.exp(shifted)
    return e / e.sum(axis=1, keepdims=True)


def _derived_seed(seed: int, index) -> int:
    digest = hashlib.blake2b(f"{seed}:{index}".encode(), digest_size=8).digest()
    return int.from_bytes(digest, "big")


# --- KNN ---------------------------------------------------------------


def _fit_knn(train: DesignMatrix, hp: dict) -> dict:
    if hp["k"] < 1:
        raise ParameterError(f"knn k must be >= 1, got {hp['k']}")
    if hp["weighting"] not in ("uniform", "inverse-distance"):
        raise ParameterError(f"unknown knn weighting {hp['weighting']!r}")
    return {
        "train_rows": [[float(v) for v in row] for row in train.rows],
        "train_labels": [int(v) for v in train.labels],
    }


def _predict_knn(hp: dict, payload: dict, X: np.ndarray) -> np.ndarray:
    train = np.asarray(payload["train_rows"], dtype=np.float64)
    labels = np.asarray(payload["train_labels"], dtype=np.int64)
    k = min(int(hp["k"]), train.shape[0])
    inverse = hp["weighting"] == "inverse-distance"
    probs = np.zeros((X.shape[0], N_CLASSES))
    train_sq = np.sum(train * train, axis=1)
    for start in range(0, X.shape[0], 512):
        chunk = X[start : start + 512]
        d2 = np.sum(chunk * chunk, axis=1)[:, None] + train_sq[None, :] - 2.0 * chunk @ train.T
        d2 = np.maximum(d2, 0.0)
        # Stable sort so equal distances resolve to the lower training index.
        neighbor_idx = np.argsort(d2, axis=1, kind="stable")[:, :k]
        for i in range(chunk.shape[0]):
            idx = neighbor_idx[i]
            dists = np.sqrt(d2[i, idx])
            votes = np.zeros(N_CLASSES)
            if inverse:
                exact = dists == 0.0
                if exact.any():
                    weights = exact.astype(np.float64)
                else:
                    weights = 1.0 / dists
            else:
                weights = np.ones(k)
            np.add.at(votes, labels[idx], weights)
            probs[start + i] = votes / votes.sum()
    return probs


# --- Gaussian naive Bayes -----------------------------------------------


def _fit_gnb(train: DesignMatrix, hp: dict) -> dict:
    classes = sorted(int(c) for c in np.unique(train.labels))
    priors, means, variances = [], [], []
    for c in classes:
        rows = train.rows[train.labels == c]
        priors.append(rows.shape[0] / train.n)
        means.append(rows.mean(axis=0))
        variances.append(np.maximum(rows.var(axis=0), 1e-9))
    return {
        "classes": classes,
        "priors": [float(p) for p in priors],
        "means": [[float(v) for v in m] for m in means],
        "variances": [[float(v) for v in s] for s in variances],
    }


def _predict_gnb(hp: dict, payload: dict, X: np.ndarray) -> np.ndarray:
    classes = payload["classes"]
    means = np.asarray(payload["means"], dtype=np.float64)
    variances = np.asarray(payload["variances"], dtype=np.float64)
    log_priors = np.log(np.asarray(payload["priors"], dtype=np.float64))
    # Joint log likelihood per class, computed fully in log space.
    log_post = np.empty((X.shape[0], len(classes)))
    for j in range(len(classes)):
        diff = X - means[j]
        log_post[:, j] = log_priors[j] - 0.5 * np.sum(
            np.log(2.0 * np.pi * variances[j]) + diff * diff / variances[j], axis=1
        )
    log_post -= logsumexp(log_post, axis=1, keepdims=True)
    probs = np.zeros((X.shape[0], N_CLASSES))
    probs[:, classes] = np.exp(log_post)
    return probs / probs.sum(axis=1, keepdims=True)


# --- multinomial logistic regression -------------------------------------


def logreg_loss_and_grad(W: np.ndarray, b: np.ndarray, X: np.ndarray, Y: np.ndarray, l2: float):
    """Mean softmax cross-entropy with L2 on weights, and its gradients."""
    P = _softmax(X @ W + b)
    n = X.shape[0]
    loss = -np.sum(Y * np.log(np.maximum(P, 1e-300))) / n + 0.5 * l2 * np.sum(W * W)
    diff = (P - Y) / n
    grad_w = X.T @ diff + l2 * W
    grad_b = diff.sum(axis=0)
    return loss, grad_w, grad_b


def _fit_logreg(train: DesignMatrix, hp: dict) -> dict:
    if hp["lr"] <= 0:
        raise ParameterError(f"logreg lr must be positive, got {hp['lr']}")
    if hp["epochs"] < 1:
        raise ParameterError(f"logreg epochs must be >= 1, got {hp['epochs']}")
    X = train.rows
    Y = _one_hot(train.labels)
    W = np.zeros((train.d, N_CLASSES))
    b = np.zeros(N_CLASSES)
    for _ in range(int(hp["epochs"])):
        _, grad_w, grad_b = logreg_loss_and_grad(W, b, X, Y, hp["l2"])
        W -= hp["lr"] * grad_w
        b -= hp["lr"] * grad_b
    return {
        "weights": [[float(v) for v in row] for row in W],
        "bias": [float(v) for v in b],
    }


def _predict_logreg(hp: dict, payload: dict, X: np.ndarray) -> np.ndarray:
    W = np.asarray(payload["weights"], dtype=np.float64)
    b = np.asarray(payload["bias"], dtype=np.float64)
    return _softmax(X @ W + b)


# --- CART decision tree ---------------------------------------------------


def _gini(counts: np.ndarray) -> float:
    total = counts.sum()
    if total == 0:
        return 0.0
    p = counts / total
    return 1.0 - float(np.sum(p * p))


def _best_split(X, y, feature_ids, min_leaf):
    """Best (feature, threshold, weighted child impurity), or None.

    Candidates are midpoints between adjacent distinct values; both children
    must hold at least min_leaf rows. Ties resolve to the lowest feature
    index and threshold, keeping trees deterministic.
    """
    n = y.size
    best = None
    for j in feature_ids:
        col = X[:, j]
        order = np.argsort(col, kind="stable")
        sorted_col = col[order]
        sorted_y = y[order]
        cut = np.nonzero(sorted_col[1:] > sorted_col[:-1])[0]
        if cut.size == 0:
            continue
        onehot = np.zeros((n, N_CLASSES))
        onehot[np.arange(n), sorted_y] = 1.0
        prefix = np.cumsum(onehot, axis=0)
        total = prefix[-1]
        n_left = cut + 1
        n_right = n - n_left
        valid = (n_left >= min_leaf) & (n_right >= min_leaf)
        if not valid.any():
            continue
        left = prefix[cut[valid]]
        right = total[None, :] - left
        nl = n_left[valid].astype(np.float64)
        nr = n_right[valid].astype(np.float64)
        gini_l = 1.0 - np.sum((left / nl[:, None]) ** 2, axis=1)
        gini_r = 1.0 - np.sum((right / nr[:, None]) ** 2, axis=1)
        weighted = (nl * gini_l + nr * gini_r) / n
        i = int(np.argmin(weighted))
        pos = cut[valid][i]
        threshold = 0.5 * (sorted_col[pos] + sorted_col[pos + 1])
        score = float(weighted[i])
        if best is None or score < best[2] - 1e-15:
            best = (int(j), float(threshold), score)
    return best


def _grow_tree(X, y, depth, max_depth, min_leaf, max_features, rng):
    counts = np.bincount(y, minlength=N_CLASSES).astype(np.float64)
    leaf = {"dist": [float(v) for v in counts / counts.sum()]}
    if depth >= max_depth or _gini(counts) == 0.0 or y.size < 2 * min_leaf:
        return leaf
    if max_features is not None and max_features < X.shape[1]:
        feature_ids = np.sort(rng.choice(X.shape[1], size=max_features, replace=False))
    else:
        feature_ids = np.arange(X.shape[1])
    # An impure node splits at the best candidate even at zero Gini gain;
    # refusing zero-gain splits would leave XOR-like corners unseparated.
    split = _best_split(X, y, feature_ids, min_leaf)
    if split is None:
        return leaf
    j, threshold, _ = split
    mask = X[:, j] <= threshold
    return {
        "feature": j,
        "threshold": threshold,
        "left": _grow_tree(X[mask], y[mask], depth + 1, max_depth, min_leaf, max_features, rng),
        "right": _grow_tree(X[~mask], y[~mask], depth + 1, max_depth, min_leaf, max_features, rng),
    }


def _fit_tree(train: DesignMatrix, hp: dict) -> dict:
    if hp["max_depth"] < 1:
        raise ParameterError(f"tree max_depth must be >= 1, got {hp['max_depth']}")
    if hp["min_samples_leaf"] < 1:
        raise ParameterError("tree min_samples_leaf must be >= 1")
    root = _grow_tree(
        train.rows, train.labels, 0, int(hp["max_depth"]), int(hp["min_samples_leaf"]), None, None
    )
    return {"root": root}


def _tree_probs(node: dict, X: np.ndarray) -> np.ndarray:
    out = np.empty((X.shape[0], N_CLASSES))
    if "dist" in node:
        out[:] = np.asarray(node["dist"], dtype=np.float64)
        return out
    mask = X[:, node["feature"]] <= node["threshold"]
    if mask.any():
        out[mask] = _tree_probs(node["left"], X[mask])
    if (~mask).any():
        out[~mask] = _tree_probs(node["right"], X[~mask])
    return out


def _predict_tree(hp: dict, payload: dict, X: np.ndarray) -> np.ndarray:
    return _tree_probs(payload["root"], X)


# --- random forest ---------------------------------------------------------


def _fit_forest(train: DesignMatrix, hp: dict) -> dict:
    if hp["n_trees"] < 1:
        raise ParameterError(f"forest n_trees must be >= 1, got {hp['n_trees']}")
    max_features = hp["max_features"]
    if max_features == "sqrt":
        max_features = max(1, int(round(math.sqrt(train.d))))
    elif max_features is not None:
        max_features = int(max_features)
    trees = []
    for t in range(int(hp["n_trees"])):
        rng = np.random.default_rng(_derived_seed(hp["seed"], t))
        if hp["bootstrap"]:
            idx = rng.integers(0, train.n, size=train.n)
            X, y = train.rows[idx], train.labels[idx]
        else:
            X, y = train.rows, train.labels
        trees.append(
            _grow_tree(X, y, 0, int(hp["max_depth"]), int(hp["min_samples_leaf"]),
                       max_features, rng)
        )
    return {"trees": trees}


def _predict_forest(hp: dict, payload: dict, X: np.ndarray) -> np.ndarray:
    acc = np.zeros((X.shape[0], N_CLASSES))
    for tree in payload["trees"]:
        acc += _tree_probs(tree, X)
    return acc / len(payload["trees"])


_FITTERS = {
    "knn": _fit_knn,
    "gnb": _fit_gnb,
    "logreg": _fit_logreg,
    "tree": _fit_tree,
    "forest": _fit_forest,
}

_PREDICTORS = {
    "knn": _predict_knn,
    "gnb": _predict_gnb,
    "logreg": _predict_logreg,
    "tree": _predict_tree,
    "forest": _predict_forest,
}


def register_predictor(kind: str, fn) -> None:
    """Let another module handle predict_proba for its artifact kind."""
    _PREDICTORS[kind] = fn


def fit_model(
    kind: str,
    train: DesignMatrix,
    hyperparameters: dict | None = None,
    scaler: ScalerParams | None = None,
) -> ModelArtifact:
    """Train one of the classical baselines.

    The train matrix is taken as already scaled when ``scaler`` is given
    (the scaler is stored for inference); without one, an identity scaler
    is bundled and rows are used as they are.
    """
    if kind not in _FITTERS:
        raise ParameterError(f"unknown model kind {kind!r}")
    hp = dict(MODEL_DEFAULTS[kind])
    if hyperparameters:
        unknown = set(hyperparameters) - set(hp)
        if unknown:
            raise ParameterError(f"unknown {kind} hyperparameters: {sorted(unknown)}")
        hp.update(hyperparameters)
    if scaler is None:
        scaler = identity_scaler(train.d)
    payload = _FITTERS[kind](train, hp)
    return ModelArtifact(kind, hp, payload, scaler)


def predict_proba(artifact: ModelArtifact, rows) -> np.ndarray:
    """Class probabilities (n, 7) for raw feature rows.

    The artifact's bundled scaler is applied first; a feature-count mismatch
    raises ShapeError.
    """
    X = np.atleast_2d(np.asarray(rows, dtype=np.float64))
    if X.shape[1] != artifact.scaler.mean.size:
        raise ShapeError(
            f"rows have {X.shape[1]} features, model expects {artifact.scaler.mean.size}"
        )
    if artifact.kind not in _PREDICTORS:
        raise ParameterError(f"no predictor registered for kind {artifact.kind!r}")
    scaled = apply_scaler(artifact.scaler, X)
    return _PREDICTORS[artifact.kind](artifact.hyperparameters, artifact.payload, scaled)


def predict(artifact: ModelArtifact, rows) -> np.ndarray:
    """Hard labels: argmax probability, ties toward the lowest class code."""
    return np.argmax(predict_proba(artifact, rows), axis=1)


def _stratified_folds(labels: np.ndarray, n_folds: int, rng) -> list[np.ndarray]:
    folds: list[list[int]] = [[] for _ in range(n_folds)]
    for c in np.unique(labels):
        idx = np.nonzero(labels == c)[0]
        idx = idx[rng.permutation(idx.size)]
        for i, row in enumerate(idx):
            folds[i % n_folds].append(int(row))
    return [np.asarray(sorted(f), dtype=np.int64) for f in folds]


def grid_search_knn(
    train: DesignMatrix,
    ks=range(1, 26),
    weightings=("uniform", "inverse-distance"),
    n_folds: int = 5,
    seed: int = 0,
):
    """Pick (k, weighting) by stratified cross-validated accuracy.

    Returns (best hyperparameters, results) where results holds one row per
    grid point with its mean fold accuracy. Ties prefer smaller k, then the
    listed weighting order.
    """
    rng = np.random.default_rng(seed)
    folds = _stratified_folds(train.labels, n_folds, rng)
    results = []
    for k in ks:
        for weighting in weightings:
            accs = []
            for held in folds:
                if held.size == 0:
                    continue
                mask = np.ones(train.n, dtype=bool)
                mask[held] = False
                fit = DesignMatrix(train.rows[mask], train.labels[mask])
                artifact = fit_model("knn", fit, {"k": k, "weighting": weighting})
                pred = predict(artifact, train.rows[held])
                accs.append(float(np.mean(pred == train.labels[held])))
            results.append({"k": int(k), "weighting": weighting, "accuracy": float(np.mean(accs))})
    order = {w: i for i, w in enumerate(weightings)}
    best = max(results, key=lambda r: (r["accuracy"], -r["k"], -order[r["weighting"]]))
    return {"k": best["k"], "weighting": best["weighting"]}, results


# --- artifact serialization -------------------------------------------------


def payload_checksum(payload: dict) -> str:
    canonical = json.dumps(payload, sort_keys=True, separators=(",", ":"))
    return hashlib.sha256(canonical.encode()).hexdigest()


def save_artifact(artifact: ModelArtifact, path) -> None:
    """Write the versioned JSON container; floats keep full precision."""
    doc = {
        "format_version": artifact.format_version,
        "kind": artifact.kind,
        "hyperparameters": artifact.hyperparameters,
        "scaler": scaler_to_dict(artifact.scaler),
        "label_set": list(artifact.label_set),
        "payload": artifact.payload,
        "checksum": payload_checksum(artifact.payload),
    }
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(doc, fh, sort_keys=True)
        fh.write("\n")


def load_artifact(path) -> ModelArtifact:
    """Read a container, verifying version and payload checksum."""
    with open(path, encoding="utf-8") as fh:
        try:
            doc = json.load(fh)
        except ValueError as exc:
            raise ArtifactIntegrityError(f"artifact {path} is not valid JSON: {exc}") from exc
    version = doc.get("format_version")
    if version != FORMAT_VERSION:
        raise ArtifactVersionError(
            f"artifact {path} has format_version {version!r}, expected {FORMAT_VERSION}"
        )
    stored = doc.get("checksum", "")
    actual = payload_checksum(doc["payload"])
    if stored != actual:
        raise ArtifactIntegrityError(
            f"artifact {path} checksum mismatch: stored {stored[:12]}, computed {actual[:12]}"
        )
    return ModelArtifact(
        doc["kind"],
        doc["hyperparameters"],
        doc["payload"],
        scaler_from_dict(doc["scaler"]),
        tuple(doc["label_set"]),
        version,
    )
