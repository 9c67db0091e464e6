"""Mini-batch training of dropout MLPs with hand-written backprop, plus data plumbing."""

from __future__ import annotations

import csv
import logging
import warnings
from dataclasses import MISSING, dataclass, fields
from pathlib import Path

import numpy as np

from .network import LayerKind, Network, ShapeError

log = logging.getLogger(__name__)


class TrainingError(RuntimeError):
    """Training diverged (non-finite loss)."""


@dataclass(frozen=True)
class Scaler:
    x_mean: np.ndarray
    x_std: np.ndarray
    y_mean: float
    y_std: float

    def transform_X(self, X):
        return (np.asarray(X, dtype=np.float64) - self.x_mean) / self.x_std

    def transform_y(self, y):
        return (np.asarray(y, dtype=np.float64) - self.y_mean) / self.y_std

    def inverse_y(self, y):
        return np.asarray(y) * self.y_std + self.y_mean

    def inverse_var(self, v):
        return np.asarray(v) * self.y_std**2

    @classmethod
    def fit(cls, X, y) -> "Scaler":
        X = np.asarray(X, dtype=np.float64)
        y = np.asarray(y, dtype=np.float64)
        x_std = X.std(axis=0)
        const = x_std == 0
        if np.any(const):
            warnings.warn(f"constant feature column(s) {np.flatnonzero(const).tolist()} left unscaled",
                          RuntimeWarning, stacklevel=3)
            x_std = np.where(const, 1.0, x_std)
        y_std = float(y.std())
        if y_std == 0:
            warnings.warn("constant target left unscaled", RuntimeWarning, stacklevel=3)
            y_std = 1.0
        return cls(X.mean(axis=0), x_std, float(y.mean()), y_std)


@dataclass(frozen=True)
class Dataset:
    X: np.ndarray
    y: np.ndarray
    scaler: Scaler | None = None

    def __post_init__(self):
        X = np.asarray(self.X, dtype=np.float64)
        y = np.asarray(self.y, dtype=np.float64).ravel()
        if X.ndim == 1:
            X = X[:, None]
        if X.shape[0] < 1 or X.shape[1] < 1:
            raise ValueError(f"dataset must have N >= 1 and Q >= 1, got {X.shape}")
        if X.shape[0] != y.shape[0]:
            raise ShapeError(f"{X.shape[0]} rows of X but {y.shape[0]} targets")
        if np.isnan(X).any() or np.isnan(y).any():
            raise ValueError("dataset contains NaN")
        object.__setattr__(self, "X", X)
        object.__setattr__(self, "y", y)

    @property
    def N(self) -> int:
        return self.X.shape[0]

    @property
    def Q(self) -> int:
        return self.X.shape[1]

    def subset(self, idx) -> "Dataset":
        return Dataset(self.X[idx], self.y[idx], self.scaler)


def standardize(train: Dataset, test: Dataset | None = None):
    """Zero-mean/unit-variance features and target using training statistics only."""
    sc = Scaler.fit(train.X, train.y)
    tr = Dataset(sc.transform_X(train.X), sc.transform_y(train.y), sc)
    te = None if test is None else Dataset(sc.transform_X(test.X), sc.transform_y(test.y), sc)
    return tr, te, sc


def load_csv(path, delimiter: str | None = ",", target_col: int = -1, header: bool | None = None,
             drop_cols=()) -> Dataset:
    """Numeric table, one row per example. ``header=None`` detects a non-numeric first row.

    ``delimiter=None`` splits on runs of whitespace. Columns in ``drop_cols``
    are discarded (e.g. a second target).
    """
    text = Path(path).read_text().strip().splitlines()
    if delimiter is None:
        rows = [line.split() for line in text if line.strip()]
    else:
        rows = [r for r in csv.reader(text, delimiter=delimiter) if r]
    if header is None:
        try:
            [float(v) for v in rows[0]]
            header = False
        except ValueError:
            header = True
    rows = rows[1:] if header else rows
    try:
        data = np.array([[float(v) for v in r] for r in rows])
    except ValueError as exc:
        raise ValueError(f"{path}: non-numeric entry ({exc})") from None
    if data.ndim != 2 or data.shape[1] < 2:
        raise ValueError(f"{path}: need at least one feature and one target column")
    t = target_col % data.shape[1]
    drop = {t} | {int(c) % data.shape[1] for c in drop_cols}
    keep = [c for c in range(data.shape[1]) if c not in drop]
    return Dataset(data[:, keep], data[:, t])


def read_kv(path) -> dict[str, str]:
    """``key = value`` lines; ``#`` starts a comment."""
    out = {}
    for n, line in enumerate(Path(path).read_text().splitlines(), 1):
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ValueError(f"{path}:{n}: expected 'key = value'")
        k, v = line.split("=", 1)
        out[k.strip()] = v.strip()
    return out


def coerce_fields(cls, raw: dict[str, str]) -> dict:
    """Convert string values to the types of the dataclass defaults."""
    known = {f.name: f for f in fields(cls)}
    unknown = set(raw) - set(known)
    if unknown:
        raise ValueError(f"unknown {cls.__name__} keys: {sorted(unknown)}")
    out = {}
    for k, v in raw.items():
        f = known[k]
        default = f.default if f.default_factory is MISSING else f.default_factory()
        if isinstance(default, bool):
            out[k] = v.lower() in ("1", "true", "yes", "on")
        elif isinstance(default, int):
            out[k] = int(v)
        elif isinstance(default, float):
            out[k] = float(v)
        elif isinstance(default, (list, tuple)):
            out[k] = [float(t) for t in v.replace(",", " ").split()]
        elif default is None and v.lower() == "none":
            out[k] = None
        else:
            out[k] = v
    return out



@dataclass(frozen=True)
class TrainConfig:
    epochs: int = 400
    batch_size: int = 128
    learning_rate: float = 1e-3
    optimizer: str = "adam"
    weight_decay: float = 0.0
    seed: int = 0

    def __post_init__(self):
        if self.epochs < 1:
            raise ValueError(f"epochs must be >= 1, got {self.epochs}")
        if self.batch_size < 1:
            raise ValueError(f"batch_size must be >= 1, got {self.batch_size}")
        if not self.learning_rate > 0:
            raise ValueError(f"learning_rate must be positive, got {self.learning_rate}")
        if self.optimizer not in ("adam", "sgd"):
            raise ValueError(f"optimizer must be 'adam' or 'sgd', got {self.optimizer!r}")

    @classmethod
    def from_file(cls, path) -> "TrainConfig":
        return cls(**coerce_fields(cls, read_kv(path)))


def _forward(net: Network, weights, X, masks):
    """Forward pass keeping what backprop needs. ``masks`` is one array (or None) per Dropout."""
    cache = []
    h = X
    d = 0
    k = 0
    for spec in net.layers:
        if spec.kind is LayerKind.DROPOUT:
            m = masks[d] if masks is not None else None
            d += 1
            cache.append(m)
            if m is not None:
                h = h * m
        elif spec.kind is LayerKind.DENSE:
            W, b = weights[k]
            k += 1
            cache.append(h)
            h = h @ W.T + b
        else:
            cache.append(h > 0)
            h = np.maximum(h, 0.0)
    return h, cache


def _backward(net: Network, weights, cache, grad_out):
    grads = [None] * len(weights)
    g = grad_out
    k = len(weights)
    for spec, c in zip(reversed(net.layers), reversed(cache)):
        if spec.kind is LayerKind.DROPOUT:
            if c is not None:
                g = g * c
        elif spec.kind is LayerKind.DENSE:
            k -= 1
            W, _ = weights[k]
            grads[k] = (g.T @ c, g.sum(axis=0))
            g = g @ W
        else:
            g = g * c
    return grads


def _sample_masks(net: Network, n: int, rng: np.random.Generator):
    masks = []
    width = net.input_width
    for spec in net.layers:
        if spec.kind is LayerKind.DROPOUT:
            masks.append((rng.random((n, width)) >= spec.p_star).astype(np.float64))
        elif spec.kind is LayerKind.DENSE:
            width = spec.out_dim
    return masks


def loss_and_grads(net: Network, X, y, masks=None, weight_decay: float = 0.0, weights=None):
    """Mean squared error and its gradient w.r.t. every ``(W, b)``.

    ``masks=None`` disables dropout (every unit kept).
    """
    weights = net.weights if weights is None else weights
    X = np.asarray(X, dtype=np.float64)
    Y = np.asarray(y, dtype=np.float64).reshape(X.shape[0], -1)
    out, cache = _forward(net, weights, X, masks)
    resid = out - Y
    loss = float(np.mean(resid**2))
    grads = _backward(net, weights, cache, 2.0 * resid / resid.size)
    if weight_decay:
        loss += weight_decay * sum(float(np.sum(W**2)) for W, _ in weights)
        grads = [(gW + 2.0 * weight_decay * W, gb) for (gW, gb), (W, _) in zip(grads, weights)]
    return loss, grads


def mse_loss(net: Network, X, y) -> float:
    return loss_and_grads(net, X, y)[0]


def train(net: Network, data: Dataset, cfg: TrainConfig) -> Network:
    """Fit weights under MSE with train-time dropout.

    Dropout masks are raw Bernoulli draws, the same convention used by
    :func:`momentprop.mc.mc_forward`, so the trained weights serve MC sampling,
    moment propagation and the ``(1 - p)``-scaled deterministic pass unchanged.
    """
    if data.Q != net.input_width:
        raise ShapeError(f"network expects {net.input_width} inputs, data has {data.Q}")
    rng = np.random.default_rng(cfg.seed)
    weights = [(W.copy(), b.copy()) for W, b in net.weights]
    m1 = [(np.zeros_like(W), np.zeros_like(b)) for W, b in weights]
    m2 = [(np.zeros_like(W), np.zeros_like(b)) for W, b in weights]
    beta1, beta2, eps = 0.9, 0.999, 1e-8
    step = 0
    X, y = data.X, data.y
    n = data.N
    for epoch in range(cfg.epochs):
        order = rng.permutation(n)
        for start in range(0, n, cfg.batch_size):
            idx = order[start:start + cfg.batch_size]
            masks = _sample_masks(net, idx.size, rng)
            loss, grads = loss_and_grads(net, X[idx], y[idx], masks, cfg.weight_decay, weights)
            if not np.isfinite(loss):
                raise TrainingError(f"non-finite loss {loss} at epoch {epoch}, batch offset {start}")
            step += 1
            for k, (gW, gb) in enumerate(grads):
                W, b = weights[k]
                if cfg.optimizer == "sgd":
                    W -= cfg.learning_rate * gW
                    b -= cfg.learning_rate * gb
                    continue
                for arr, g, a, v in ((W, gW, m1[k][0], m2[k][0]), (b, gb, m1[k][1], m2[k][1])):
                    a *= beta1
                    a += (1 - beta1) * g
                    v *= beta2
                    v += (1 - beta2) * g * g
                    a_hat = a / (1 - beta1**step)
                    v_hat = v / (1 - beta2**step)
                    arr -= cfg.learning_rate * a_hat / (np.sqrt(v_hat) + eps)
        if log.isEnabledFor(logging.DEBUG) and (epoch + 1) % 50 == 0:
            log.debug("epoch %d loss %.5f", epoch + 1, loss)
    return net.with_weights(weights)


def finite_difference_gradcheck(net: Network, batch, masks=None, step: float = 1e-5,
                                floor: float = 1e-6) -> float:
    """Max relative error between backprop and central differences over all parameters.

    ``batch`` is ``(X, y)``. ``masks`` are held fixed for every evaluation, so a
    frozen dropout pattern can be checked too.
    """
    X, y = batch
    _, grads = loss_and_grads(net, X, y, masks)
    weights = [(W.copy(), b.copy()) for W, b in net.weights]
    worst = 0.0
    for k in range(len(weights)):
        for j in range(2):
            arr = weights[k][j]
            analytic = grads[k][j]
            for i in np.ndindex(arr.shape):
                orig = arr[i]
                arr[i] = orig + step
                up = loss_and_grads(net, X, y, masks, weights=weights)[0]
                arr[i] = orig - step
                down = loss_and_grads(net, X, y, masks, weights=weights)[0]
                arr[i] = orig
                numeric = (up - down) / (2 * step)
                a = analytic[i]
                err = abs(a - numeric) / max(abs(a), abs(numeric), floor)
                worst = max(worst, err)
    return worst
