"""Single-pass propagation of per-node mean and variance through a dropout net.

Only the diagonal of the activation covariance is carried; cross-node
correlations are dropped at every layer. All functions are pure and work on
a single vector ``(d,)`` or a batch ``(n, d)``.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.special import ndtr

from .network import LayerKind, Network, ShapeError, as_input

#: Below this variance a ReLU input is treated as deterministic.
VAR_FLOOR = 1e-12
#: Beyond |E/sqrt(V)| > this the ReLU is taken as fully on or fully off.
SATURATION = 8.0

_INV_SQRT_2PI = 1.0 / np.sqrt(2.0 * np.pi)


@dataclass(frozen=True)
class MomentVector:
    """Expectation ``E`` and diagonal variance ``V`` of a layer's activations."""

    E: np.ndarray
    V: np.ndarray

    def __post_init__(self):
        E = np.asarray(self.E, dtype=np.float64)
        V = np.asarray(self.V, dtype=np.float64)
        if E.shape != V.shape:
            raise ShapeError(f"E{E.shape} and V{V.shape} differ in shape")
        if E.size == 0:
            raise ValueError("empty moment vector")
        if not (np.all(np.isfinite(E)) and np.all(np.isfinite(V))):
            raise ValueError("moments must be finite")
        if np.any(V < 0):
            raise ValueError("variances must be non-negative")
        object.__setattr__(self, "E", E)
        object.__setattr__(self, "V", V)

    @property
    def sd(self) -> np.ndarray:
        return np.sqrt(self.V)

    def __len__(self):
        return self.E.shape[-1]


def lift(x) -> MomentVector:
    """A deterministic observation: mean ``x``, zero variance."""
    x = np.asarray(x, dtype=np.float64)
    return MomentVector(x, np.zeros_like(x))


def mp_dropout(m: MomentVector, p_star: float) -> MomentVector:
    if not 0.0 <= p_star <= 1.0:
        raise ValueError(f"dropout probability must lie in [0, 1], got {p_star}")
    keep = 1.0 - p_star
    # Var(XY) = V(X)V(Y) + V(X)E(Y)^2 + E(X)^2 V(Y) with Y ~ Bernoulli(keep)
    bern_var = p_star * keep
    V = m.V * bern_var + m.V * keep**2 + m.E**2 * bern_var
    return MomentVector(m.E * keep, V)


def mp_dense(m: MomentVector, W, b) -> MomentVector:
    W = np.asarray(W, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    if W.ndim != 2 or m.E.shape[-1] != W.shape[1] or b.shape != (W.shape[0],):
        raise ShapeError(f"cannot apply W{W.shape}, b{b.shape} to moments of width {m.E.shape[-1]}")
    return MomentVector(m.E @ W.T + b, m.V @ (W**2).T)


def mp_relu(m: MomentVector) -> MomentVector:
    """Moments of max(0, X) for X ~ N(E, V), elementwise."""
    E, V = m.E, m.V
    det = V < VAR_FLOOR
    sd = np.sqrt(np.where(det, 1.0, V))
    r = E / sd
    cdf = ndtr(r)
    pdf = _INV_SQRT_2PI * np.exp(-0.5 * r * r)
    E_out = E * cdf + sd * pdf
    V_out = (E * E + V) * cdf + E * sd * pdf - E_out**2

    on = r > SATURATION
    off = r < -SATURATION
    E_out = np.where(on, E, np.where(off, 0.0, E_out))
    V_out = np.where(on, V, np.where(off, 0.0, V_out))

    E_out = np.where(det, np.maximum(E, 0.0), E_out)
    V_out = np.where(det, 0.0, np.maximum(V_out, 0.0))
    return MomentVector(E_out, V_out)


def mp_forward(net: Network, x) -> MomentVector:
    """Fold the observation through every layer in one pass (no sampling)."""
    m = lift(as_input(net, x))
    for spec, params in net.iter_layers():
        if spec.kind is LayerKind.DROPOUT:
            m = mp_dropout(m, spec.p_star)
        elif spec.kind is LayerKind.DENSE:
            m = mp_dense(m, *params)
        else:
            m = mp_relu(m)
    return m


def mp_trace(net: Network, x) -> list[MomentVector]:
    """Moments at every layer boundary, input first."""
    out = [lift(as_input(net, x))]
    for spec, params in net.iter_layers():
        m = out[-1]
        if spec.kind is LayerKind.DROPOUT:
            out.append(mp_dropout(m, spec.p_star))
        elif spec.kind is LayerKind.DENSE:
            out.append(mp_dense(m, *params))
        else:
            out.append(mp_relu(m))
    return out
