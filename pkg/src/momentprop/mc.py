"""Monte Carlo dropout: stochastic forward passes with raw Bernoulli masks.

Masks multiply the inputs of each Dropout layer and are *not* rescaled by
``1 / (1 - p_star)``, so the expectation of a pass matches the moment
propagation in :mod:`momentprop.moments`.

Randomness comes from Philox, a counter-based generator keyed by
``(seed, index)``. An ensemble is evaluated in fixed-size chunks of runs and
chunk ``c`` always uses stream ``(seed, c)``; any run can therefore be
reproduced on its own, whatever the scheduling of the other chunks.
"""

from __future__ import annotations

from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass

import numpy as np

from .moments import MomentVector
from .network import LayerKind, Network, as_input

#: Number of MC runs drawn from one RNG stream.
CHUNK = 256


@dataclass(frozen=True)
class RngStream:
    seed: int
    index: int = 0

    def generator(self) -> np.random.Generator:
        key = np.array([self.seed, self.index], dtype=np.uint64)
        return np.random.Generator(np.random.Philox(key=key))


def sample_mask(width: int, p_star: float, rng) -> np.ndarray:
    """Binary mask of ``width`` entries (or shape tuple), each 0 with probability ``p_star``."""
    if not 0.0 <= p_star <= 1.0:
        raise ValueError(f"dropout probability must lie in [0, 1], got {p_star}")
    if isinstance(rng, RngStream):
        rng = rng.generator()
    return (rng.random(width) >= p_star).astype(np.float64)


def _stochastic_pass(net: Network, h: np.ndarray, gen: np.random.Generator) -> np.ndarray:
    for spec, params in net.iter_layers():
        if spec.kind is LayerKind.DROPOUT:
            h = h * (gen.random(h.shape) >= spec.p_star)
        elif spec.kind is LayerKind.DENSE:
            W, b = params
            h = h @ W.T + b
        else:
            h = np.maximum(h, 0.0)
    return h


def mc_forward(net: Network, x, rng) -> np.ndarray:
    """One stochastic pass. A batch of inputs gets independent masks per row."""
    x = as_input(net, x)
    gen = rng.generator() if isinstance(rng, RngStream) else rng
    return _stochastic_pass(net, x, gen)


@dataclass(frozen=True)
class McEnsemble:
    """``samples[t]`` is the output of MC run ``t``; shape ``(T, ..., out)``."""

    samples: np.ndarray

    def __post_init__(self):
        s = np.asarray(self.samples, dtype=np.float64)
        if s.ndim < 2 or s.shape[0] < 1:
            raise ValueError("an ensemble needs at least one sample vector")
        object.__setattr__(self, "samples", s)

    @property
    def T(self) -> int:
        return self.samples.shape[0]


def _run_chunk(net: Network, x: np.ndarray, seed: int, c: int, size: int) -> np.ndarray:
    gen = RngStream(seed, c).generator()
    h = np.broadcast_to(x, (size, *x.shape))
    return _stochastic_pass(net, h, gen)


def mc_ensemble(net: Network, x, T: int, rng, threads: int = 1) -> McEnsemble:
    """``T`` MC runs for input ``x`` (vector or batch).

    ``rng`` is a seed or an :class:`RngStream` whose ``seed`` is used; results do
    not depend on ``threads``.
    """
    if T < 1:
        raise ValueError(f"T must be >= 1, got {T}")
    seed = rng.seed if isinstance(rng, RngStream) else int(rng)
    x = as_input(net, x)
    jobs = [(c, min(CHUNK, T - c * CHUNK)) for c in range(-(-T // CHUNK))]
    if threads > 1:
        with ThreadPoolExecutor(threads) as pool:
            parts = list(pool.map(lambda j: _run_chunk(net, x, seed, *j), jobs))
    else:
        parts = [_run_chunk(net, x, seed, c, size) for c, size in jobs]
    return McEnsemble(np.concatenate(parts, axis=0))


def empirical_moments(e: McEnsemble) -> MomentVector:
    """Sample mean and unbiased sample variance across runs."""
    if e.T < 2:
        raise ValueError("need at least two MC samples to estimate a variance")
    return MomentVector(e.samples.mean(axis=0), e.samples.var(axis=0, ddof=1))
