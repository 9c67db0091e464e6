"""Fully connected network built from Dropout, Dense and ReLU blocks.

A :class:`Network` is an immutable ordered list of :class:`LayerSpec` plus one
``(W, b)`` pair per Dense layer. ``W`` has shape ``(out_dim, in_dim)``.
All forward functions accept a single input vector ``(q,)`` or a batch
``(n, q)``.
"""

from __future__ import annotations

import enum
import json
from dataclasses import dataclass
from pathlib import Path
from typing import Iterator, Sequence

import numpy as np

FORMAT_MAGIC = "MOMENTPROP-NETWORK"
FORMAT_VERSION = 1


class NetworkFormatError(ValueError):
    """A network file could not be parsed."""


class ShapeError(ValueError):
    """Array or layer dimensions do not chain."""


class LayerKind(str, enum.Enum):
    DROPOUT = "dropout"
    DENSE = "dense"
    RELU = "relu"


@dataclass(frozen=True)
class LayerSpec:
    kind: LayerKind
    p_star: float | None = None
    in_dim: int | None = None
    out_dim: int | None = None

    def __post_init__(self):
        kind = LayerKind(self.kind)
        object.__setattr__(self, "kind", kind)
        if kind is LayerKind.DROPOUT:
            if self.p_star is None or not 0.0 <= float(self.p_star) <= 1.0:
                raise ValueError(f"dropout probability must lie in [0, 1], got {self.p_star}")
            object.__setattr__(self, "p_star", float(self.p_star))
        elif kind is LayerKind.DENSE:
            if self.in_dim is None or self.out_dim is None or self.in_dim < 1 or self.out_dim < 1:
                raise ValueError(f"dense layer needs positive in_dim/out_dim, got {self.in_dim}->{self.out_dim}")
            object.__setattr__(self, "in_dim", int(self.in_dim))
            object.__setattr__(self, "out_dim", int(self.out_dim))

    def to_dict(self) -> dict:
        if self.kind is LayerKind.DROPOUT:
            return {"kind": self.kind.value, "p_star": self.p_star}
        if self.kind is LayerKind.DENSE:
            return {"kind": self.kind.value, "in_dim": self.in_dim, "out_dim": self.out_dim}
        return {"kind": self.kind.value}

    @classmethod
    def from_dict(cls, d: dict) -> "LayerSpec":
        return cls(LayerKind(d["kind"]), d.get("p_star"), d.get("in_dim"), d.get("out_dim"))


def Dropout(p_star: float) -> LayerSpec:
    return LayerSpec(LayerKind.DROPOUT, p_star=p_star)


def Dense(in_dim: int, out_dim: int) -> LayerSpec:
    return LayerSpec(LayerKind.DENSE, in_dim=in_dim, out_dim=out_dim)


def ReLU() -> LayerSpec:
    return LayerSpec(LayerKind.RELU)


def check_chain(specs: Sequence[LayerSpec]) -> tuple[int, int]:
    """Validate dimension chaining and return ``(input_width, output_width)``."""
    dense = [s for s in specs if s.kind is LayerKind.DENSE]
    if not dense:
        raise ShapeError("network needs at least one Dense layer")
    for prev, nxt in zip(dense[:-1], dense[1:]):
        if prev.out_dim != nxt.in_dim:
            raise ShapeError(f"Dense({prev.in_dim}->{prev.out_dim}) cannot feed Dense({nxt.in_dim}->{nxt.out_dim})")
    return dense[0].in_dim, dense[-1].out_dim


@dataclass(frozen=True, eq=False)
class Network:
    layers: tuple[LayerSpec, ...]
    weights: tuple[tuple[np.ndarray, np.ndarray], ...]

    def __post_init__(self):
        layers = tuple(self.layers)
        object.__setattr__(self, "layers", layers)
        check_chain(layers)
        dense = [s for s in layers if s.kind is LayerKind.DENSE]
        if len(dense) != len(self.weights):
            raise ShapeError(f"{len(dense)} Dense layers but {len(self.weights)} weight pairs")
        frozen = []
        for spec, (W, b) in zip(dense, self.weights):
            W = np.array(W, dtype=np.float64)
            b = np.array(b, dtype=np.float64)
            if W.shape != (spec.out_dim, spec.in_dim) or b.shape != (spec.out_dim,):
                raise ShapeError(
                    f"weights {W.shape}/{b.shape} do not match Dense({spec.in_dim}->{spec.out_dim})"
                )
            if not (np.all(np.isfinite(W)) and np.all(np.isfinite(b))):
                raise ValueError("network weights must be finite")
            W.flags.writeable = False
            b.flags.writeable = False
            frozen.append((W, b))
        object.__setattr__(self, "weights", tuple(frozen))

    @property
    def input_width(self) -> int:
        return check_chain(self.layers)[0]

    @property
    def output_width(self) -> int:
        return check_chain(self.layers)[1]

    @property
    def n_params(self) -> int:
        return sum(W.size + b.size for W, b in self.weights)

    def iter_layers(self) -> Iterator[tuple[LayerSpec, tuple[np.ndarray, np.ndarray] | None]]:
        """Yield ``(spec, (W, b))`` for Dense layers and ``(spec, None)`` otherwise."""
        it = iter(self.weights)
        for spec in self.layers:
            yield spec, (next(it) if spec.kind is LayerKind.DENSE else None)

    def with_weights(self, weights) -> "Network":
        return Network(self.layers, tuple(weights))

    def with_dropout(self, p_star: float) -> "Network":
        """Copy with every Dropout layer set to ``p_star``."""
        layers = tuple(Dropout(p_star) if s.kind is LayerKind.DROPOUT else s for s in self.layers)
        return Network(layers, self.weights)

    def __eq__(self, other):
        if not isinstance(other, Network):
            return NotImplemented
        return self.layers == other.layers and all(
            np.array_equal(W1, W2) and np.array_equal(b1, b2)
            for (W1, b1), (W2, b2) in zip(self.weights, other.weights)
        ) and len(self.weights) == len(other.weights)

    __hash__ = None


def _feeds_relu(specs: Sequence[LayerSpec], i: int) -> bool:
    for s in specs[i + 1:]:
        if s.kind is LayerKind.DROPOUT:
            continue
        return s.kind is LayerKind.RELU
    return False


def build_network(specs: Sequence[LayerSpec], seed: int = 0) -> Network:
    """Initialise weights: N(0, 2/in_dim) ahead of a ReLU, N(0, 1/in_dim) otherwise; zero biases."""
    specs = tuple(specs)
    check_chain(specs)
    rng = np.random.default_rng(seed)
    weights = []
    for i, spec in enumerate(specs):
        if spec.kind is not LayerKind.DENSE:
            continue
        gain = 2.0 if _feeds_relu(specs, i) else 1.0
        W = rng.normal(0.0, np.sqrt(gain / spec.in_dim), size=(spec.out_dim, spec.in_dim))
        weights.append((W, np.zeros(spec.out_dim)))
    return Network(specs, tuple(weights))


def mlp_specs(n_in: int, hidden: Sequence[int], n_out: int = 1, p_star: float = 0.0,
              input_dropout: bool = False) -> list[LayerSpec]:
    """Dense/ReLU stack with a Dropout ahead of every Dense that reads a hidden layer.

    ``input_dropout`` adds a Dropout on the raw inputs as well.
    """
    specs: list[LayerSpec] = []
    widths = [n_in, *hidden]
    for k, (a, b) in enumerate(zip(widths[:-1], widths[1:])):
        if k > 0 or input_dropout:
            specs.append(Dropout(p_star))
        specs += [Dense(a, b), ReLU()]
    if hidden or input_dropout:
        specs.append(Dropout(p_star))
    specs.append(Dense(widths[-1], n_out))
    return specs


def as_input(net: Network, x) -> np.ndarray:
    x = np.asarray(x, dtype=np.float64)
    if x.ndim not in (1, 2) or x.shape[-1] != net.input_width:
        raise ShapeError(f"input of shape {x.shape} does not match input width {net.input_width}")
    if x.shape[-1] == 0 or not np.all(np.isfinite(x)):
        raise ValueError("input must be non-empty and finite")
    return x


def forward_deterministic(net: Network, x) -> np.ndarray:
    """Standard-dropout inference: Dropout layers scale activations by ``1 - p_star``."""
    h = as_input(net, x)
    for spec, params in net.iter_layers():
        if spec.kind is LayerKind.DROPOUT:
            h = h * (1.0 - spec.p_star)
        elif spec.kind is LayerKind.DENSE:
            W, b = params
            h = h @ W.T + b
        else:
            h = np.maximum(h, 0.0)
    return h


def save_network(net: Network, path) -> None:
    """Write a text file: magic line, JSON header, then hex-encoded weight blocks (bit-exact)."""
    header = {"version": FORMAT_VERSION, "layers": [s.to_dict() for s in net.layers]}
    lines = [f"{FORMAT_MAGIC} {FORMAT_VERSION}", json.dumps(header)]
    for k, (W, b) in enumerate(net.weights):
        lines.append(f"W {k} {W.shape[0]} {W.shape[1]}")
        lines.extend(" ".join(float(v).hex() for v in row) for row in W)
        lines.append(f"b {k} {b.shape[0]}")
        lines.append(" ".join(float(v).hex() for v in b))
    Path(path).write_text("\n".join(lines) + "\n")


def _parse_row(line: str, width: int, where: str) -> list[float]:
    toks = line.split()
    if len(toks) != width:
        raise ShapeError(f"{where}: expected {width} values, found {len(toks)}")
    try:
        return [float.fromhex(t) for t in toks]
    except ValueError as exc:
        raise NetworkFormatError(f"{where}: bad number ({exc})") from None


def load_network(path) -> Network:
    lines = Path(path).read_text().splitlines()
    if not lines or not lines[0].startswith(FORMAT_MAGIC):
        raise NetworkFormatError(f"{path}: not a network file")
    try:
        version = int(lines[0].split()[1])
    except (IndexError, ValueError):
        raise NetworkFormatError(f"{path}: missing format version") from None
    if version != FORMAT_VERSION:
        raise NetworkFormatError(f"{path}: unsupported version {version} (expected {FORMAT_VERSION})")
    try:
        header = json.loads(lines[1])
        specs = [LayerSpec.from_dict(d) for d in header["layers"]]
    except (IndexError, KeyError, TypeError, json.JSONDecodeError) as exc:
        raise NetworkFormatError(f"{path}: bad header ({exc})") from None

    dense = [s for s in specs if s.kind is LayerKind.DENSE]
    pos = 2
    weights = []

    def take(what: str) -> str:
        nonlocal pos
        if pos >= len(lines):
            raise NetworkFormatError(f"{path}: truncated while reading {what}")
        pos += 1
        return lines[pos - 1]

    for k, spec in enumerate(dense):
        tag = take(f"W{k} header").split()
        if len(tag) != 4 or tag[0] != "W" or tag[1] != str(k):
            raise NetworkFormatError(f"{path}: expected block header 'W {k} ...', got {' '.join(tag)!r}")
        rows, cols = int(tag[2]), int(tag[3])
        if (rows, cols) != (spec.out_dim, spec.in_dim):
            raise ShapeError(f"{path}: W{k} declared {rows}x{cols}, layer is {spec.out_dim}x{spec.in_dim}")
        W = [_parse_row(take(f"W{k} row {r}"), cols, f"W{k} row {r}") for r in range(rows)]
        tag = take(f"b{k} header").split()
        if len(tag) != 3 or tag[0] != "b" or int(tag[2]) != spec.out_dim:
            raise ShapeError(f"{path}: bias block {k} does not match out_dim {spec.out_dim}")
        b = _parse_row(take(f"b{k} values"), spec.out_dim, f"b{k}")
        weights.append((np.array(W).reshape(rows, cols), np.array(b)))
    if any(line.strip() for line in lines[pos:]):
        raise ShapeError(f"{path}: trailing data after last weight block")
    return Network(tuple(specs), tuple(weights))
