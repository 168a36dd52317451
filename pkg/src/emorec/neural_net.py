"""A small neural engine with manual backpropagation.

Layers operate on plain numpy arrays: Conv1D works on (batch, channels,
length), Dense on (batch, features). The stock architectures are a deep
1-D CNN over the 94-feature vector treated as a single-channel sequence,
an MLP baseline, and a linear softmax head for precomputed embeddings.
"""
from __future__ import annotations

import json
import math
from dataclasses import asdict, dataclass

import numpy as np

from .classic_ml import DesignMatrix, ModelArtifact, register_predictor
from .errors import (
    InsufficientDataError,
    ParameterError,
    ShapeError,
    TrainingDivergedError,
)
from .features import ScalerParams, identity_scaler

N_CLASSES = 7
_BN_EPS = 1e-5
_BN_MOMENTUM = 0.9


def relu(x: np.ndarray) -> np.ndarray:
    return np.maximum(x, 0.0)


def softmax(logits: np.ndarray) -> np.ndarray:
    shifted = logits - logits.max(axis=-1, keepdims=True)
    e = np.exp(shifted)
    return e / e.sum(axis=-1, keepdims=True)


def cross_entropy(probs: np.ndarray, targets: np.ndarray) -> float:
    """Mean categorical cross-entropy; targets are one-hot rows."""
    return float(-np.sum(targets * np.log(np.maximum(probs, 1e-300))) / probs.shape[0])


def one_hot(labels: np.ndarray, n_classes: int = N_CLASSES) -> np.ndarray:
    labels = np.asarray(labels, dtype=np.int64)
    out = np.zeros((labels.size, n_classes))
    out[np.arange(labels.size), labels] = 1.0
    return out


class Conv1D:
    """1-D convolution over (B, C, L) with optional ReLU and 'same' padding."""

    def __init__(self, out_channels: int, kernel_size: int = 8,
                 activation: str | None = "relu", padding: str = "same"):
        if padding != "same":
            raise ParameterError(f"only 'same' padding is supported, got {padding!r}")
        if activation not in (None, "relu"):
            raise ParameterError(f"unsupported conv activation {activation!r}")
        self.out_channels = out_channels
        self.kernel_size = kernel_size
        self.activation = activation
        self.padding = padding
        self.params: dict[str, np.ndarray] = {}
        self.grads: dict[str, np.ndarray] = {}
        self._cache = None

    def initialize(self, in_shape, rng):
        c_in, length = in_shape
        fan_in = c_in * self.kernel_size
        limit = math.sqrt(6.0 / fan_in)
        self.params["weights"] = rng.uniform(
            -limit, limit, size=(self.out_channels, c_in, self.kernel_size)
        )
        self.params["bias"] = np.zeros(self.out_channels)
        return (self.out_channels, length)

    def forward(self, x, train=False, rng=None):
        W, b = self.params["weights"], self.params["bias"]
        k = self.kernel_size
        left = (k - 1) // 2
        x_pad = np.pad(x, ((0, 0), (0, 0), (left, k - 1 - left)))
        length = x.shape[2]
        idx = np.arange(length)[:, None] + np.arange(k)[None, :]
        cols = x_pad[:, :, idx]  # (B, Cin, L, k)
        z = np.einsum("bclk,ock->bol", cols, W, optimize=True) + b[None, :, None]
        out = relu(z) if self.activation == "relu" else z
        if train:
            self._cache = (cols, z, x.shape, left)
        return out

    def backward(self, grad):
        cols, z, x_shape, left = self._cache
        if self.activation == "relu":
            grad = grad * (z > 0.0)
        W = self.params["weights"]
        self.grads["weights"] = np.einsum("bclk,bol->ock", cols, grad, optimize=True)
        self.grads["bias"] = grad.sum(axis=(0, 2))
        grad_cols = np.einsum("ock,bol->bclk", W, grad, optimize=True)
        k = self.kernel_size
        length = x_shape[2]
        grad_pad = np.zeros((x_shape[0], x_shape[1], length + k - 1))
        for j in range(k):
            grad_pad[:, :, j : j + length] += grad_cols[:, :, :, j]
        return grad_pad[:, :, left : left + length]

    def config(self):
        return {
            "kind": "conv1d",
            "out_channels": self.out_channels,
            "kernel_size": self.kernel_size,
            "activation": self.activation,
            "padding": self.padding,
        }


class BatchNorm:
    """Per-channel batch normalization with running statistics."""

    def __init__(self, momentum: float = _BN_MOMENTUM, eps: float = _BN_EPS):
        self.momentum = momentum
        self.eps = eps
        self.params: dict[str, np.ndarray] = {}
        self.grads: dict[str, np.ndarray] = {}
        self.running_mean = None
        self.running_var = None
        self._cache = None

    def initialize(self, in_shape, rng):
        channels = in_shape[0] if len(in_shape) == 2 else in_shape[0]
        self.params["gamma"] = np.ones(channels)
        self.params["beta"] = np.zeros(channels)
        self.running_mean = np.zeros(channels)
        self.running_var = np.ones(channels)
        return in_shape

    def _expand(self, v, ndim):
        return v[None, :, None] if ndim == 3 else v[None, :]

    def forward(self, x, train=False, rng=None):
        axes = (0, 2) if x.ndim == 3 else (0,)
        gamma, beta = self.params["gamma"], self.params["beta"]
        if train:
            mean = x.mean(axis=axes)
            var = x.var(axis=axes)
            self.running_mean = self.momentum * self.running_mean + (1 - self.momentum) * mean
            self.running_var = self.momentum * self.running_var + (1 - self.momentum) * var
        else:
            mean, var = self.running_mean, self.running_var
        inv_std = 1.0 / np.sqrt(var + self.eps)
        x_hat = (x - self._expand(mean, x.ndim)) * self._expand(inv_std, x.ndim)
        if train:
            n = x.shape[0] * (x.shape[2] if x.ndim == 3 else 1)
            self._cache = (x_hat, inv_std, axes, n)
        return self._expand(gamma, x.ndim) * x_hat + self._expand(beta, x.ndim)

    def backward(self, grad):
        x_hat, inv_std, axes, n = self._cache
        gamma = self.params["gamma"]
        self.grads["gamma"] = np.sum(grad * x_hat, axis=axes)
        self.grads["beta"] = np.sum(grad, axis=axes)
        g_hat = grad * self._expand(gamma, grad.ndim)
        sum_g = np.sum(g_hat, axis=axes, keepdims=True)
        sum_gx = np.sum(g_hat * x_hat, axis=axes, keepdims=True)
        return (self._expand(inv_std, grad.ndim) / n) * (n * g_hat - sum_g - x_hat * sum_gx)

    def config(self):
        return {"kind": "batchnorm", "momentum": self.momentum, "eps": self.eps}


class Dropout:
    """Inverted dropout: scales surviving units by 1/(1-rate); identity in eval."""

    def __init__(self, rate: float):
        if not 0.0 <= rate < 1.0:
            raise ParameterError(f"dropout rate must be in [0, 1), got {rate}")
        self.rate = rate
        self.params: dict[str, np.ndarray] = {}
        self.grads: dict[str, np.ndarray] = {}
        self._mask = None

    def initialize(self, in_shape, rng):
        return in_shape

    def forward(self, x, train=False, rng=None):
        if not train or self.rate == 0.0:
            self._mask = None
            return x
        if rng is None:
            raise ParameterError("train-mode dropout needs a random generator")
        self._mask = (rng.random(x.shape) >= self.rate) / (1.0 - self.rate)
        return x * self._mask

    def backward(self, grad):
        if self._mask is None:
            return grad
        return grad * self._mask

    def config(self):
        return {"kind": "dropout", "rate": self.rate}


class Flatten:
    def __init__(self):
        self.params: dict[str, np.ndarray] = {}
        self.grads: dict[str, np.ndarray] = {}
        self._shape = None

    def initialize(self, in_shape, rng):
        return (int(np.prod(in_shape)),)

    def forward(self, x, train=False, rng=None):
        self._shape = x.shape
        return x.reshape(x.shape[0], -1)

    def backward(self, grad):
        return grad.reshape(self._shape)

    def config(self):
        return {"kind": "flatten"}


class Dense:
    """Affine layer (in, units) with relu, softmax, or linear activation.

    With softmax activation the layer is the network output; backward then
    expects the combined cross-entropy gradient (probs - targets) / batch
    with respect to the logits.
    """

    def __init__(self, units: int, activation: str | None = None):
        if activation not in (None, "relu", "softmax"):
            raise ParameterError(f"unsupported dense activation {activation!r}")
        self.units = units
        self.activation = activation
        self.params: dict[str, np.ndarray] = {}
        self.grads: dict[str, np.ndarray] = {}
        self._cache = None

    def initialize(self, in_shape, rng):
        (fan_in,) = in_shape
        if self.activation == "relu":
            limit = math.sqrt(6.0 / fan_in)
        else:
            limit = math.sqrt(6.0 / (fan_in + self.units))
        self.params["weights"] = rng.uniform(-limit, limit, size=(fan_in, self.units))
        self.params["bias"] = np.zeros(self.units)
        return (self.units,)

    def forward(self, x, train=False, rng=None):
        z = x @ self.params["weights"] + self.params["bias"]
        if self.activation == "relu":
            out = relu(z)
        elif self.activation == "softmax":
            out = softmax(z)
        else:
            out = z
        if train:
            self._cache = (x, z)
        return out

    def backward(self, grad):
        x, z = self._cache
        if self.activation == "relu":
            grad = grad * (z > 0.0)
        # softmax: incoming grad is already d(loss)/d(logits)
        self.grads["weights"] = x.T @ grad
        self.grads["bias"] = grad.sum(axis=0)
        return grad @ self.params["weights"].T

    def config(self):
        return {"kind": "dense", "units": self.units, "activation": self.activation}


_LAYER_KINDS = {"conv1d": Conv1D, "batchnorm": BatchNorm, "dropout": Dropout,
                "flatten": Flatten, "dense": Dense}


class Network:
    """An ordered layer stack with explicit forward/backward passes."""

    def __init__(self, layers, input_shape):
        self.layers = list(layers)
        self.input_shape = tuple(int(v) for v in input_shape)

    def initialize(self, seed: int = 0) -> "Network":
        rng = np.random.default_rng(seed)
        shape = self.input_shape
        for layer in self.layers:
            shape = layer.initialize(shape, rng)
        self.output_shape = shape
        return self

    def forward(self, x, train: bool = False, rng=None):
        expected = (x.shape[0],) + self.input_shape
        if x.shape != expected:
            raise ShapeError(f"batch shape {x.shape} does not match network input {expected}")
        out = x
        for layer in self.layers:
            out = layer.forward(out, train=train, rng=rng)
        return out

    def backward(self, grad):
        for layer in reversed(self.layers):
            grad = layer.backward(grad)
        return grad

    def parameters(self):
        """Yield (layer index, layer, param name, array) in a stable order."""
        for i, layer in enumerate(self.layers):
            for name in sorted(layer.params):
                yield i, layer, name, layer.params[name]

    def n_parameters(self) -> int:
        return sum(p.size for _, _, _, p in self.parameters())


def forward(net: Network, batch: np.ndarray, mode: str = "eval", seed: int = 0) -> np.ndarray:
    """Run the network on a batch.

    Eval mode is pure: dropout is the identity and batchnorm uses running
    statistics. Train mode draws dropout masks from ``seed`` and lets
    batchnorm use (and update) batch statistics.
    """
    if mode not in ("train", "eval"):
        raise ParameterError(f"mode must be 'train' or 'eval', got {mode!r}")
    x = np.asarray(batch, dtype=np.float64)
    return net.forward(x, train=(mode == "train"), rng=np.random.default_rng(seed))


def build_cnn1d(input_length: int = 94, seed: int = 0) -> Network:
    """The deep 1-D CNN over a single-channel feature sequence.

    Stack: two Conv1D(256, 8) blocks, BatchNorm, Dropout(0.6), four
    Conv1D(128, 8), BatchNorm, Dropout(0.6), two Conv1D(64, 8), Flatten,
    Dense(128, relu), Dense(64, relu), Dropout(0.6), Dense(7, softmax).
    All convolutions are ReLU with 'same' padding, so the sequence length
    never changes.
    """
    layers = [
        Conv1D(256), Conv1D(256),
        BatchNorm(), Dropout(0.6),
        Conv1D(128), Conv1D(128), Conv1D(128), Conv1D(128),
        BatchNorm(), Dropout(0.6),
        Conv1D(64), Conv1D(64),
        Flatten(),
        Dense(128, "relu"), Dense(64, "relu"),
        Dropout(0.6),
        Dense(N_CLASSES, "softmax"),
    ]
    return Network(layers, (1, input_length)).initialize(seed)


def build_mlp(hidden, input_dim: int = 94, seed: int = 0) -> Network:
    """Fully connected baseline: ReLU hidden layers, softmax output."""
    if not hidden:
        raise ParameterError("hidden layer list must be non-empty")
    layers = [Dense(int(h), "relu") for h in hidden]
    layers.append(Dense(N_CLASSES, "softmax"))
    return Network(layers, (int(input_dim),)).initialize(seed)


def build_embedding_head(dim_a: int, dim_b: int | None = None, seed: int = 0) -> Network:
    """Linear softmax classifier over one embedding or a fused pair."""
    if dim_a < 1:
        raise ParameterError(f"dim_a must be >= 1, got {dim_a}")
    input_dim = dim_a + (dim_b or 0)
    return Network([Dense(N_CLASSES, "softmax")], (input_dim,)).initialize(seed)


def concat_pool(seq_a: np.ndarray, seq_b: np.ndarray | None = None) -> np.ndarray:
    """Mean over each sequence's time axis, then feature-wise concatenation."""
    a = np.asarray(seq_a, dtype=np.float64)
    if a.ndim != 2 or a.shape[0] == 0:
        raise InsufficientDataError(f"sequence A must be (T, d) with T >= 1, got {a.shape}")
    pooled = a.mean(axis=0)
    if seq_b is None:
        return pooled
    b = np.asarray(seq_b, dtype=np.float64)
    if b.ndim != 2 or b.shape[0] == 0:
        raise InsufficientDataError(f"sequence B must be (T, d) with T >= 1, got {b.shape}")
    return np.concatenate([pooled, b.mean(axis=0)])


@dataclass(frozen=True)
class TrainConfig:
    optimizer: str = "adam"
    learning_rate: float = 1e-3
    weight_decay: float = 0.0
    warmup_steps: int = 0
    epochs: int = 10
    batch_size: int = 32
    grad_accumulation_steps: int = 1
    seed: int = 0

    def __post_init__(self):
        if self.optimizer not in ("sgd", "adam", "adamw"):
            raise ParameterError(f"unknown optimizer {self.optimizer!r}")
        if self.learning_rate < 0:
            raise ParameterError("learning_rate must be non-negative")
        if self.epochs < 1 or self.batch_size < 1 or self.grad_accumulation_steps < 1:
            raise ParameterError("epochs, batch_size and grad_accumulation_steps must be >= 1")
        if self.warmup_steps < 0 or self.weight_decay < 0:
            raise ParameterError("warmup_steps and weight_decay must be non-negative")


class _Optimizer:
    """SGD/Adam/AdamW over the network's parameter arrays.

    Adam couples weight decay into the gradient; AdamW applies it directly
    to the parameters (decoupled). Learning rate warms up linearly over
    warmup_steps updates, then stays constant.
    """

    def __init__(self, net: Network, cfg: TrainConfig):
        self.cfg = cfg
        self.step_count = 0
        self.moments = {}
        for i, layer, name, p in net.parameters():
            self.moments[(i, name)] = (np.zeros_like(p), np.zeros_like(p))

    def _lr(self) -> float:
        lr = self.cfg.learning_rate
        if self.cfg.warmup_steps > 0 and self.step_count <= self.cfg.warmup_steps:
            lr *= self.step_count / self.cfg.warmup_steps
        return lr

    def update(self, net: Network, grads: dict):
        self.step_count += 1
        lr = self._lr()
        cfg = self.cfg
        beta1, beta2, eps = 0.9, 0.999, 1e-8
        for i, layer, name, p in net.parameters():
            g = grads[(i, name)]
            if cfg.optimizer == "sgd":
                if cfg.weight_decay:
                    g = g + cfg.weight_decay * p
                p -= lr * g
                continue
            if cfg.optimizer == "adam" and cfg.weight_decay:
                g = g + cfg.weight_decay * p
            m, v = self.moments[(i, name)]
            m *= beta1
            m += (1 - beta1) * g
            v *= beta2
            v += (1 - beta2) * g * g
            m_hat = m / (1 - beta1**self.step_count)
            v_hat = v / (1 - beta2**self.step_count)
            if cfg.optimizer == "adamw" and cfg.weight_decay:
                p -= lr * cfg.weight_decay * p
            p -= lr * m_hat / (np.sqrt(v_hat) + eps)


def _as_xy(data):
    if isinstance(data, DesignMatrix):
        return data.rows, data.labels
    X, y = data
    return np.asarray(X, dtype=np.float64), np.asarray(y, dtype=np.int64)


def train(
    net: Network,
    data,
    cfg: TrainConfig,
    scaler: ScalerParams | None = None,
    architecture: str = "custom",
):
    """Mini-batch training with categorical cross-entropy.

    ``data`` is a DesignMatrix or an (X, y) pair; rows are reshaped to the
    network's input shape. Gradients are averaged over
    grad_accumulation_steps micro-batches per optimizer update. A non-finite
    loss aborts with TrainingDivergedError naming the step. Returns
    (ModelArtifact, per-epoch mean loss trace).
    """
    X, y = _as_xy(data)
    if X.ndim != 2:
        raise ShapeError(f"training rows must be 2-D, got shape {X.shape}")
    if X.shape[0] == 0:
        raise InsufficientDataError("training data is empty")
    flat_dim = int(np.prod(net.input_shape))
    if X.shape[1] != flat_dim:
        raise ShapeError(f"rows have {X.shape[1]} features, network expects {flat_dim}")
    if y.min() < 0 or y.max() >= N_CLASSES:
        raise ParameterError("labels must be emotion codes 0..6")
    Xs = X.reshape((X.shape[0],) + net.input_shape)
    Y = one_hot(y)

    rng = np.random.default_rng(cfg.seed)
    optimizer = _Optimizer(net, cfg)
    trace = []
    global_step = 0
    for _epoch in range(cfg.epochs):
        order = rng.permutation(X.shape[0])
        epoch_losses = []
        accum = None
        n_accum = 0
        for start in range(0, X.shape[0], cfg.batch_size):
            idx = order[start : start + cfg.batch_size]
            batch, targets = Xs[idx], Y[idx]
            probs = net.forward(batch, train=True, rng=rng)
            loss = cross_entropy(probs, targets)
            global_step += 1
            if not math.isfinite(loss):
                raise TrainingDivergedError(global_step)
            epoch_losses.append(loss)
            net.backward((probs - targets) / batch.shape[0])
            if accum is None:
                accum = {(i, name): layer.grads[name].copy()
                         for i, layer, name, _ in net.parameters()}
            else:
                for i, layer, name, _ in net.parameters():
                    accum[(i, name)] += layer.grads[name]
            n_accum += 1
            if n_accum == cfg.grad_accumulation_steps:
                for key in accum:
                    accum[key] /= n_accum
                optimizer.update(net, accum)
                accum, n_accum = None, 0
        if n_accum:
            for key in accum:
                accum[key] /= n_accum
            optimizer.update(net, accum)
        trace.append(float(np.mean(epoch_losses)))

    if scaler is None:
        scaler = identity_scaler(flat_dim)
    payload = network_to_payload(net)
    hyperparameters = {"architecture": architecture, "train_config": asdict(cfg)}
    return ModelArtifact("neural", hyperparameters, payload, scaler), trace


def grad_check(
    net: Network,
    batch: np.ndarray,
    labels: np.ndarray,
    step: float = 1e-6,
    samples_per_type: int = 200,
    seed: int = 0,
):
    """Compare analytic gradients against central finite differences.

    For every layer type, at least ``samples_per_type`` randomly chosen
    parameters are perturbed (all of them when a type has fewer). Dropout
    masks are pinned by reusing the same seed for every forward pass, so
    stochastic layers check cleanly. Returns a report dict with the max
    relative error per layer type; differences below 1e-7 absolute count
    as zero error.
    """
    x = np.asarray(batch, dtype=np.float64)
    targets = one_hot(np.asarray(labels, dtype=np.int64))

    def loss_fn():
        probs = net.forward(x, train=True, rng=np.random.default_rng(seed))
        return cross_entropy(probs, targets)

    probs = net.forward(x, train=True, rng=np.random.default_rng(seed))
    net.backward((probs - targets) / x.shape[0])
    analytic = {(i, name): layer.grads[name].copy() for i, layer, name, _ in net.parameters()}

    coords_by_type: dict[str, list] = {}
    for i, layer, name, p in net.parameters():
        kind = layer.config()["kind"]
        for flat in range(p.size):
            coords_by_type.setdefault(kind, []).append((i, layer, name, flat))

    rng = np.random.default_rng(seed + 1)
    report = {"per_type": {}, "n_checked": 0}
    worst = 0.0
    for kind, coords in sorted(coords_by_type.items()):
        if len(coords) > samples_per_type:
            chosen = [coords[j] for j in rng.choice(len(coords), samples_per_type, replace=False)]
        else:
            chosen = coords
        max_err = 0.0
        for i, layer, name, flat in chosen:
            p = layer.params[name]
            original = p.flat[flat]
            p.flat[flat] = original + step
            loss_plus = loss_fn()
            p.flat[flat] = original - step
            loss_minus = loss_fn()
            p.flat[flat] = original
            numeric = (loss_plus - loss_minus) / (2.0 * step)
            a = analytic[(i, name)].flat[flat]
            diff = abs(a - numeric)
            if diff <= 1e-7:
                err = 0.0
            else:
                err = diff / max(abs(a), abs(numeric))
            max_err = max(max_err, err)
        report["per_type"][kind] = max_err
        report["n_checked"] += len(chosen)
        worst = max(worst, max_err)
    report["max_relative_error"] = worst
    return report


def network_to_payload(net: Network) -> dict:
    """JSON-ready description: configs plus parameters and norm statistics."""
    layers = []
    for layer in net.layers:
        entry = dict(layer.config())
        for name, p in layer.params.items():
            entry[name] = p.tolist()
        if isinstance(layer, BatchNorm):
            entry["running_mean"] = layer.running_mean.tolist()
            entry["running_var"] = layer.running_var.tolist()
        layers.append(entry)
    return {"input_shape": list(net.input_shape), "layers": layers}


def network_from_payload(payload: dict) -> Network:
    layers = []
    for entry in payload["layers"]:
        kind = entry["kind"]
        if kind == "conv1d":
            layer = Conv1D(entry["out_channels"], entry["kernel_size"],
                           entry["activation"], entry["padding"])
            layer.params["weights"] = np.asarray(entry["weights"], dtype=np.float64)
            layer.params["bias"] = np.asarray(entry["bias"], dtype=np.float64)
        elif kind == "batchnorm":
            layer = BatchNorm(entry["momentum"], entry["eps"])
            layer.params["gamma"] = np.asarray(entry["gamma"], dtype=np.float64)
            layer.params["beta"] = np.asarray(entry["beta"], dtype=np.float64)
            layer.running_mean = np.asarray(entry["running_mean"], dtype=np.float64)
            layer.running_var = np.asarray(entry["running_var"], dtype=np.float64)
        elif kind == "dropout":
            layer = Dropout(entry["rate"])
        elif kind == "flatten":
            layer = Flatten()
        elif kind == "dense":
            layer = Dense(entry["units"], entry["activation"])
            layer.params["weights"] = np.asarray(entry["weights"], dtype=np.float64)
            layer.params["bias"] = np.asarray(entry["bias"], dtype=np.float64)
        else:
            raise ParameterError(f"unknown layer kind {kind!r}")
        layers.append(layer)
    return Network(layers, tuple(payload["input_shape"]))


def _predict_neural(hyperparameters: dict, payload: dict, X: np.ndarray) -> np.ndarray:
    net = network_from_payload(payload)
    batch = X.reshape((X.shape[0],) + net.input_shape)
    return net.forward(batch, train=False)


register_predictor("neural", _predict_neural)


def load_embeddings(path):
    """Read an embedding JSONL file: {utt_id, label, emb_a, emb_b?} per line.

    Returns (ids, labels, emb_a matrix, emb_b matrix or None). Dimensions
    must be constant across the file; emb_b must be present on all lines or
    none.
    """
    ids, labels, a_rows, b_rows = [], [], [], []
    with open(path, encoding="utf-8") as fh:
        for line_no, line in enumerate(fh, start=1):
            line = line.strip()
            if not line:
                continue
            doc = json.loads(line)
            ids.append(doc["utt_id"])
            labels.append(int(doc["label"]))
            a_rows.append(doc["emb_a"])
            if "emb_b" in doc and doc["emb_b"] is not None:
                b_rows.append(doc["emb_b"])
    if not ids:
        raise InsufficientDataError(f"embedding file {path} holds no records")
    if b_rows and len(b_rows) != len(a_rows):
        raise ParameterError("emb_b must be present on every line or on none")
    A = np.asarray(a_rows, dtype=np.float64)
    if A.ndim != 2:
        raise ShapeError("emb_a dimensions vary across the file")
    B = None
    if b_rows:
        B = np.asarray(b_rows, dtype=np.float64)
        if B.ndim != 2:
            raise ShapeError("emb_b dimensions vary across the file")
    return ids, np.asarray(labels, dtype=np.int64), A, B


def write_embeddings(path, ids, labels, emb_a, emb_b=None) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        for i, uid in enumerate(ids):
            doc = {"utt_id": uid, "label": int(labels[i]),
                   "emb_a": [float(v) for v in emb_a[i]]}
            if emb_b is not None:
                doc["emb_b"] = [float(v) for v in emb_b[i]]
            fh.write(json.dumps(doc, sort_keys=True))
            fh.write("\n")


def train_head(embedding_path, cfg: TrainConfig, fuse: bool = True):
    """Train the linear head on an embedding file.

    With two embeddings per record and fuse=True the inputs are
    concatenated; otherwise only emb_a is used. Returns (artifact, trace).
    """
    ids, labels, A, B = load_embeddings(embedding_path)
    if B is not None and fuse:
        X = np.concatenate([A, B], axis=1)
    else:
        X = A
    net = build_embedding_head(A.shape[1], B.shape[1] if (B is not None and fuse) else None,
                               seed=cfg.seed)
    return train(net, (X, labels), cfg, architecture="embedding-head")
