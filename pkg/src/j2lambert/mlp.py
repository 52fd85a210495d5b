"""Fully connected network with hand-written backpropagation and Adam.

Inputs and outputs are z-scored with statistics of the training split; the
loss is the mean over samples of the squared error summed over output
components, evaluated on the standardized outputs.
"""

from __future__ import annotations

import copy
import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

ACTIVATIONS = ("tanh", "relu", "identity")
# per-column pretreatment applied before z-scoring: "log" takes log10 of a
# positive magnitude, "angle" expands an angle into its (cos, sin) pair
CODECS = ("raw", "log", "angle")
LOG_FLOOR = 1e-12
FORMAT_TAG = "j2lambert-mlp"
FORMAT_VERSION = 1


class TrainingDivergedError(RuntimeError):
    def __init__(self, message: str, history: "TrainHistory"):
        super().__init__(message)
        self.history = history


class ModelFormatError(ValueError):
    def __init__(self, message: str, line: int):
        super().__init__(f"line {line}: {message}")
        self.line = line


def _check_codec(codec: tuple[str, ...], dim: int, what: str) -> None:
    if codec and len(codec) != dim:
        raise ValueError(f"{what} codec has {len(codec)} entries for {dim} columns")
    bad = [c for c in codec if c not in CODECS]
    if bad:
        raise ValueError(f"unknown {what} codec entries {bad}")


def encoded_width(codec: tuple[str, ...], dim: int) -> int:
    return dim + sum(1 for c in codec if c == "angle")


def encode_columns(data, codec: tuple[str, ...]) -> np.ndarray:
    data = np.asarray(data, dtype=float)
    if not codec:
        return data
    cols = []
    for k, c in enumerate(codec):
        col = data[..., k]
        if c == "log":
            cols.append(np.log10(np.maximum(col, LOG_FLOOR)))
        elif c == "angle":
            cols.extend((np.cos(col), np.sin(col)))
        else:
            cols.append(col)
    return np.stack(cols, axis=-1)


def decode_columns(data, codec: tuple[str, ...]) -> np.ndarray:
    """Inverse of ``encode_columns``; angles come back in [0, 2pi)."""
    if not codec:
        return data
    cols = []
    j = 0
    for c in codec:
        if c == "log":
            cols.append(10.0 ** data[..., j])
            j += 1
        elif c == "angle":
            cols.append(np.mod(np.arctan2(data[..., j + 1], data[..., j]), 2.0 * math.pi))
            j += 2
        else:
            cols.append(data[..., j])
            j += 1
    return np.stack(cols, axis=-1)


@dataclass(frozen=True)
class MlpConfig:
    """Network shape. ``input_dim``/``output_dim`` count data columns; the
    codecs (empty means all raw) decide the actual layer widths."""

    input_dim: int
    output_dim: int
    hidden_layers: tuple[int, ...] = (50, 50, 50, 50)
    hidden_activation: str = "tanh"
    output_activation: str = "identity"
    init_seed: int = 0
    input_codec: tuple[str, ...] = ()
    output_codec: tuple[str, ...] = ()

    def __post_init__(self):
        object.__setattr__(self, "hidden_layers", tuple(int(w) for w in self.hidden_layers))
        object.__setattr__(self, "input_codec", tuple(self.input_codec))
        object.__setattr__(self, "output_codec", tuple(self.output_codec))
        if self.input_dim <= 0 or self.output_dim <= 0 or any(w <= 0 for w in self.hidden_layers):
            raise ValueError("layer dimensions must be positive")
        _check_codec(self.input_codec, self.input_dim, "input")
        _check_codec(self.output_codec, self.output_dim, "output")
        if not 1 <= len(self.hidden_layers) <= 8:
            raise ValueError("between 1 and 8 hidden layers are supported")
        if self.hidden_activation not in ("tanh", "relu"):
            raise ValueError(f"hidden activation must be tanh or relu, got {self.hidden_activation}")
        if self.output_activation not in ACTIVATIONS:
            raise ValueError(f"unknown output activation {self.output_activation}")

    @property
    def layer_sizes(self) -> tuple[int, ...]:
        return (encoded_width(self.input_codec, self.input_dim), *self.hidden_layers,
                encoded_width(self.output_codec, self.output_dim))


@dataclass(frozen=True)
class TrainConfig:
    learning_rate: float = 1e-3
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    max_epochs: int = 1000
    batch_size: int = 256
    shuffle_seed: int = 0
    validation_fraction: float = 0.1
    # when set, the rate decays geometrically to this value at the last epoch
    final_learning_rate: float | None = None

    def __post_init__(self):
        if not self.learning_rate > 0:
            raise ValueError("learning_rate must be positive")
        if self.final_learning_rate is not None and not self.final_learning_rate > 0:
            raise ValueError("final_learning_rate must be positive")
        if self.max_epochs < 1 or self.batch_size < 1:
            raise ValueError("max_epochs and batch_size must be at least 1")
        if not 0.0 <= self.validation_fraction < 1.0:
            raise ValueError("validation_fraction must lie in [0, 1)")

    def learning_rate_at(self, epoch: int) -> float:
        if self.final_learning_rate is None or self.max_epochs == 1:
            return self.learning_rate
        frac = epoch / (self.max_epochs - 1)
        return self.learning_rate * (self.final_learning_rate / self.learning_rate) ** frac


@dataclass(eq=False)
class Standardizer:
    mean: np.ndarray
    std: np.ndarray

    @classmethod
    def fit(cls, data: np.ndarray, min_std: float = 1e-12) -> "Standardizer":
        data = np.asarray(data, dtype=float)
        std = data.std(axis=0)
        return cls(data.mean(axis=0), np.where(std > min_std, std, 1.0))

    @classmethod
    def identity(cls, dim: int) -> "Standardizer":
        return cls(np.zeros(dim), np.ones(dim))

    def transform(self, data):
        return (data - self.mean) / self.std

    def inverse(self, data):
        return data * self.std + self.mean


@dataclass(eq=False)
class MlpModel:
    weights: list[np.ndarray]
    biases: list[np.ndarray]
    hidden_activation: str
    output_activation: str
    input_standardizer: Standardizer
    output_standardizer: Standardizer
    # added to raw targets before encoding (relu output range shift)
    output_shift: np.ndarray | None = None
    input_codec: tuple[str, ...] = ()
    output_codec: tuple[str, ...] = ()
    meta: dict[str, str] = field(default_factory=dict)

    @property
    def input_dim(self) -> int:
        return len(self.input_codec) if self.input_codec else self.weights[0].shape[0]

    @property
    def output_dim(self) -> int:
        return len(self.output_codec) if self.output_codec else self.weights[-1].shape[1]

    @property
    def layer_sizes(self) -> tuple[int, ...]:
        return (self.weights[0].shape[0], *(w.shape[1] for w in self.weights))

    def params(self) -> list[np.ndarray]:
        return [*self.weights, *self.biases]

    def copy(self) -> "MlpModel":
        return copy.deepcopy(self)

    def input_to_std(self, x):
        return self.input_standardizer.transform(encode_columns(x, self.input_codec))

    def target_to_std(self, y):
        if self.output_shift is not None:
            y = y + self.output_shift
        return self.output_standardizer.transform(encode_columns(y, self.output_codec))

    def std_to_target(self, y_std):
        y = decode_columns(self.output_standardizer.inverse(y_std), self.output_codec)
        if self.output_shift is not None:
            y = y - self.output_shift
        return y


def init_model(cfg: MlpConfig) -> MlpModel:
    """Glorot-uniform weights for tanh/identity layers, He-uniform for relu; zero biases."""
    rng = np.random.default_rng(cfg.init_seed)
    sizes = cfg.layer_sizes
    weights, biases = [], []
    for k in range(len(sizes) - 1):
        fan_in, fan_out = sizes[k], sizes[k + 1]
        act = cfg.hidden_activation if k < len(sizes) - 2 else cfg.output_activation
        limit = math.sqrt(6.0 / fan_in) if act == "relu" else math.sqrt(6.0 / (fan_in + fan_out))
        weights.append(rng.uniform(-limit, limit, size=(fan_in, fan_out)))
        biases.append(np.zeros(fan_out))
    return MlpModel(
        weights, biases, cfg.hidden_activation, cfg.output_activation,
        Standardizer.identity(sizes[0]), Standardizer.identity(sizes[-1]),
        input_codec=cfg.input_codec, output_codec=cfg.output_codec,
    )


def _act(name: str, z: np.ndarray) -> np.ndarray:
    if name == "tanh":
        return np.tanh(z)
    if name == "relu":
        return np.maximum(z, 0.0)
    return z


def _act_grad(name: str, z: np.ndarray, a: np.ndarray) -> np.ndarray | None:
    # derivative in terms of the activation output; relu uses 0 at z == 0
    if name == "tanh":
        return 1.0 - a * a
    if name == "relu":
        return (z > 0.0).astype(float)
    return None


def _forward_std(model: MlpModel, xs: np.ndarray, keep: bool = False):
    a = xs
    cache = [(None, xs)]
    last = len(model.weights) - 1
    for k, (W, b) in enumerate(zip(model.weights, model.biases)):
        z = a @ W + b
        a = _act(model.hidden_activation if k < last else model.output_activation, z)
        if keep:
            cache.append((z, a))
    return (a, cache) if keep else a


def forward(model: MlpModel, x) -> np.ndarray:
    """Network output in raw target units for one input vector or a batch."""
    x = np.asarray(x, dtype=float)
    if x.shape[-1] != model.input_dim:
        raise ValueError(f"input has dimension {x.shape[-1]}, model expects {model.input_dim}")
    return model.std_to_target(_forward_std(model, model.input_to_std(x)))


def loss_mse(pred, target) -> float:
    pred = np.asarray(pred, dtype=float)
    target = np.asarray(target, dtype=float)
    if pred.shape != target.shape:
        raise ValueError(f"shape mismatch {pred.shape} vs {target.shape}")
    if pred.size == 0:
        raise ValueError("empty batch")
    diff = (pred - target).reshape(pred.shape[0], -1) if pred.ndim > 1 else (pred - target)[:, None]
    return float(np.sum(diff * diff) / diff.shape[0])


def _backward_std(model: MlpModel, xs: np.ndarray, ys: np.ndarray):
    out, cache = _forward_std(model, xs, keep=True)
    n = xs.shape[0]
    delta = 2.0 * (out - ys) / n
    grads_w = [None] * len(model.weights)
    grads_b = [None] * len(model.weights)
    last = len(model.weights) - 1
    for k in range(last, -1, -1):
        z, a = cache[k + 1]
        g = _act_grad(model.hidden_activation if k < last else model.output_activation, z, a)
        if g is not None:
            delta = delta * g
        grads_w[k] = cache[k][1].T @ delta
        grads_b[k] = delta.sum(axis=0)
        if k > 0:
            delta = delta @ model.weights[k].T
    return float(np.sum((out - ys) ** 2) / n), grads_w, grads_b


def backward(model: MlpModel, x_batch, y_batch):
    """Loss and exact gradients w.r.t. (weights, biases) for a raw-unit batch."""
    xs = model.input_to_std(np.asarray(x_batch, dtype=float))
    ys = model.target_to_std(np.asarray(y_batch, dtype=float))
    loss, gw, gb = _backward_std(model, xs, ys)
    return loss, gw, gb


@dataclass(eq=False)
class AdamState:
    m: list[np.ndarray]
    v: list[np.ndarray]
    t: int = 0

    @classmethod
    def zeros_like(cls, params) -> "AdamState":
        return cls([np.zeros_like(p) for p in params], [np.zeros_like(p) for p in params])


def adam_step(state: AdamState, params: list[np.ndarray], grads: list[np.ndarray],
              lr: float = 1e-3, betas: tuple[float, float] = (0.9, 0.999), eps: float = 1e-8) -> list[np.ndarray]:
    """Bias-corrected Adam update, applied in place; returns ``params``."""
    b1, b2 = betas
    state.t += 1
    c1 = 1.0 - b1 ** state.t
    c2 = 1.0 - b2 ** state.t
    step = lr * math.sqrt(c2) / c1
    eps_hat = eps * math.sqrt(c2)
    for p, g, m, v in zip(params, grads, state.m, state.v):
        m *= b1
        m += (1.0 - b1) * g
        v *= b2
        v += (1.0 - b2) * (g * g)
        p -= step * m / (np.sqrt(v) + eps_hat)
    return params


@dataclass
class TrainHistory:
    train_mse: list[float] = field(default_factory=list)
    val_mse: list[float] = field(default_factory=list)
    best_epoch: int = -1
    final_train_mse: float = float("nan")
    batch_size: int = 0
    wall_time_s: float = 0.0

    def write_csv(self, path: str | Path) -> None:
        with open(path, "w") as fh:
            fh.write("epoch,train_mse,val_mse\n")
            for k, tr in enumerate(self.train_mse):
                val = self.val_mse[k] if k < len(self.val_mse) else float("nan")
                fh.write(f"{k + 1},{tr:.17g},{val:.17g}\n")


def train(cfg: MlpConfig, tcfg: TrainConfig, x, y, output_shift=None,
          progress=None, augment=None) -> tuple[MlpModel, TrainHistory]:
    """Train with mini-batch Adam; returns the best-validation model.

    ``output_shift`` is added to the targets before the codecs and z-scoring;
    the model keeps both so ``forward`` works in raw units. With
    ``validation_fraction == 0`` the last epoch's model is returned.

    ``augment(rng, x_batch, y_batch) -> (x_batch, y_batch)`` transforms each
    raw training batch before encoding; validation data is never augmented.
    Epochs and the best epoch are counted from 1.
    """
    import time

    t_start = time.perf_counter()
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    if x.ndim != 2 or y.ndim != 2 or x.shape[0] != y.shape[0] or x.shape[0] == 0:
        raise ValueError("x and y must be non-empty 2-D arrays with matching rows")
    if x.shape[1] != cfg.input_dim or y.shape[1] != cfg.output_dim:
        raise ValueError("data dimensions do not match the network configuration")

    rng = np.random.default_rng(tcfg.shuffle_seed)
    n = x.shape[0]
    order = rng.permutation(n)
    n_val = int(round(tcfg.validation_fraction * n))
    if n_val >= n:
        n_val = n - 1
    val_idx, tr_idx = order[:n_val], order[n_val:]

    model = init_model(cfg)
    if output_shift is not None:
        model.output_shift = np.asarray(output_shift, dtype=float)
    x_pre = encode_columns(x, model.input_codec)
    y_pre = encode_columns(y + model.output_shift if model.output_shift is not None else y,
                           model.output_codec)
    model.input_standardizer = Standardizer.fit(x_pre[tr_idx])
    model.output_standardizer = Standardizer.fit(y_pre[tr_idx])
    xs = model.input_standardizer.transform(x_pre)
    ys = model.output_standardizer.transform(y_pre)
    xs_tr, ys_tr = xs[tr_idx], ys[tr_idx]
    xs_val, ys_val = xs[val_idx], ys[val_idx]
    x_tr, y_tr = x[tr_idx], y[tr_idx]

    def batch(idx):
        if augment is None:
            return xs_tr[idx], ys_tr[idx]
        xb, yb = augment(rng, x_tr[idx], y_tr[idx])
        return model.input_to_std(xb), model.target_to_std(yb)

    params = model.params()
    nw = len(model.weights)
    adam = AdamState.zeros_like(params)
    history = TrainHistory(batch_size=tcfg.batch_size)
    best = None
    best_val = math.inf
    n_tr = xs_tr.shape[0]
    bs = min(tcfg.batch_size, n_tr)
    betas = (tcfg.beta1, tcfg.beta2)
    for epoch in range(tcfg.max_epochs):
        lr = tcfg.learning_rate_at(epoch)
        perm = rng.permutation(n_tr)
        total = 0.0
        for start in range(0, n_tr, bs):
            idx = perm[start:start + bs]
            loss, gw, gb = _backward_std(model, *batch(idx))
            total += loss * idx.shape[0]
            adam_step(adam, params, gw + gb, lr, betas, tcfg.eps)
        tr_mse = total / n_tr
        history.train_mse.append(tr_mse)
        if not math.isfinite(tr_mse):
            raise TrainingDivergedError(f"non-finite training loss at epoch {epoch + 1}", history)
        if n_val > 0:
            val = loss_mse(_forward_std(model, xs_val), ys_val)
            history.val_mse.append(val)
            if val < best_val:
                best_val = val
                history.best_epoch = epoch + 1
                best = [p.copy() for p in params]
        if progress is not None:
            progress(epoch + 1, history)
    if best is not None:
        for p, b in zip(params, best):
            p[...] = b
    else:
        history.best_epoch = tcfg.max_epochs
    model.weights, model.biases = params[:nw], params[nw:]
    history.final_train_mse = loss_mse(_forward_std(model, xs_tr), ys_tr)
    history.wall_time_s = time.perf_counter() - t_start
    return model, history


def evaluate_mse(model: MlpModel, x, y) -> float:
    """Loss on standardized outputs for raw-unit data."""
    xs = model.input_to_std(np.asarray(x, float))
    return loss_mse(_forward_std(model, xs), model.target_to_std(np.asarray(y, float)))


# ---------------------------------------------------------------------------
# Persistence


def _fmt(values) -> str:
    return " ".join(f"{v:.17g}" for v in np.ravel(values))


def save_model(model: MlpModel, path: str | Path) -> None:
    lines = [
        f"{FORMAT_TAG} {FORMAT_VERSION}",
        "layers " + " ".join(str(s) for s in model.layer_sizes),
        f"hidden_activation {model.hidden_activation}",
        f"output_activation {model.output_activation}",
        "input_codec" + "".join(f" {c}" for c in model.input_codec),
        "output_codec" + "".join(f" {c}" for c in model.output_codec),
    ]
    for key, value in sorted(model.meta.items()):
        value = " ".join(str(value).split())
        if not key or len(key.split()) != 1 or not value:
            raise ValueError(f"meta entry {key!r} cannot be stored")
        lines.append(f"meta {key} {value}")
    lines.append("input_mean " + _fmt(model.input_standardizer.mean))
    lines.append("input_std " + _fmt(model.input_standardizer.std))
    lines.append("output_mean " + _fmt(model.output_standardizer.mean))
    lines.append("output_std " + _fmt(model.output_standardizer.std))
    shift = model.output_shift if model.output_shift is not None else np.zeros(model.output_dim)
    lines.append("output_shift " + _fmt(shift))
    for k, (W, b) in enumerate(zip(model.weights, model.biases)):
        lines.append(f"weight {k} {W.shape[0]} {W.shape[1]}")
        lines.extend(_fmt(row) for row in W)
        lines.append(f"bias {k} {b.shape[0]}")
        lines.append(_fmt(b))
    lines.append("end")
    Path(path).write_text("\n".join(lines) + "\n")


class _Lines:
    def __init__(self, text: str):
        self.lines = text.split("\n")
        self.pos = 0

    def next(self, what: str) -> list[str]:
        while self.pos < len(self.lines) and not self.lines[self.pos].strip():
            self.pos += 1
        if self.pos >= len(self.lines):
            raise ModelFormatError(f"unexpected end of file, expected {what}", self.pos + 1)
        self.pos += 1
        return self.lines[self.pos - 1].split()

    def fail(self, message: str):
        raise ModelFormatError(message, self.pos)

    def floats(self, tokens, count: int, what: str) -> np.ndarray:
        if len(tokens) != count:
            self.fail(f"{what}: expected {count} values, got {len(tokens)}")
        try:
            return np.array([float(t) for t in tokens])
        except ValueError:
            self.fail(f"{what}: malformed number")

    def keyed(self, key: str, count: int) -> np.ndarray:
        tokens = self.next(key)
        if not tokens or tokens[0] != key:
            self.fail(f"expected '{key}'")
        return self.floats(tokens[1:], count, key)


def load_model(path: str | Path) -> MlpModel:
    rd = _Lines(Path(path).read_text())
    head = rd.next("header")
    if len(head) != 2 or head[0] != FORMAT_TAG:
        rd.fail("not a model file")
    if head[1] != str(FORMAT_VERSION):
        rd.fail(f"unsupported format version {head[1]}")
    tokens = rd.next("layers")
    if tokens[:1] != ["layers"] or len(tokens) < 4:
        rd.fail("expected 'layers' with at least three sizes")
    try:
        sizes = [int(t) for t in tokens[1:]]
    except ValueError:
        rd.fail("malformed layer size")
    acts = {}
    for key in ("hidden_activation", "output_activation"):
        tokens = rd.next(key)
        if len(tokens) != 2 or tokens[0] != key or tokens[1] not in ACTIVATIONS:
            rd.fail(f"bad {key} line")
        acts[key] = tokens[1]
    codecs = {}
    for key, width in (("input_codec", sizes[0]), ("output_codec", sizes[-1])):
        tokens = rd.next(key)
        if not tokens or tokens[0] != key:
            rd.fail(f"expected '{key}'")
        codec = tuple(tokens[1:])
        if any(c not in CODECS for c in codec):
            rd.fail(f"{key}: unknown entry")
        if codec and encoded_width(codec, len(codec)) != width:
            rd.fail(f"{key} does not match layer width {width}")
        codecs[key] = codec
    meta = {}
    while True:
        save = rd.pos
        tokens = rd.next("meta or input_mean")
        if tokens and tokens[0] == "meta":
            if len(tokens) < 3:
                rd.fail("meta lines need a key and a value")
            meta[tokens[1]] = " ".join(tokens[2:])
        else:
            rd.pos = save
            break
    n_in, n_out = sizes[0], sizes[-1]
    in_mean = rd.keyed("input_mean", n_in)
    in_std = rd.keyed("input_std", n_in)
    out_mean = rd.keyed("output_mean", n_out)
    out_std = rd.keyed("output_std", n_out)
    shift = rd.keyed("output_shift", len(codecs["output_codec"]) or n_out)
    if np.any(in_std <= 0) or np.any(out_std <= 0):
        rd.fail("standardizer std must be positive")
    weights, biases = [], []
    for k in range(len(sizes) - 1):
        tokens = rd.next("weight")
        if tokens != ["weight", str(k), str(sizes[k]), str(sizes[k + 1])]:
            rd.fail(f"expected 'weight {k} {sizes[k]} {sizes[k + 1]}'")
        W = np.vstack([rd.floats(rd.next("weight row"), sizes[k + 1], "weight row") for _ in range(sizes[k])])
        tokens = rd.next("bias")
        if tokens != ["bias", str(k), str(sizes[k + 1])]:
            rd.fail(f"expected 'bias {k} {sizes[k + 1]}'")
        b = rd.floats(rd.next("bias values"), sizes[k + 1], "bias")
        weights.append(W)
        biases.append(b)
    if rd.next("end") != ["end"]:
        rd.fail("expected 'end'")
    return MlpModel(
        weights, biases, acts["hidden_activation"], acts["output_activation"],
        Standardizer(in_mean, in_std), Standardizer(out_mean, out_std),
        output_shift=shift if np.any(shift != 0) else None,
        input_codec=codecs["input_codec"], output_codec=codecs["output_codec"], meta=meta,
    )
