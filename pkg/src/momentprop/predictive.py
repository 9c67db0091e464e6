"""Predictive distributions and test metrics for MC and moment-propagated outputs."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.special import logsumexp

from .mc import McEnsemble
from .moments import MomentVector

LOG_2PI = np.log(2.0 * np.pi)


@dataclass(frozen=True)
class PredictiveGaussian:
    """N(E_mp, V_mp + 1/tau): model variance plus observation noise."""

    E_mp: np.ndarray | float
    V_mp: np.ndarray | float
    tau: float

    def __post_init__(self):
        if not self.tau > 0:
            raise ValueError(f"tau must be positive, got {self.tau}")
        if np.any(np.asarray(self.V_mp) < 0):
            raise ValueError("model variance must be non-negative")

    @property
    def variance(self):
        return np.asarray(self.V_mp) + 1.0 / self.tau

    @classmethod
    def from_moments(cls, m: MomentVector, tau: float) -> "PredictiveGaussian":
        return cls(m.E, m.V, tau)


@dataclass(frozen=True)
class MetricRow:
    rmse: float
    nll: float
    runtime_seconds: float
    rmse_se: float = 0.0
    nll_se: float = 0.0
    runtime_se: float = 0.0


def _check_tau(tau):
    if not np.all(np.asarray(tau) > 0):
        raise ValueError(f"tau must be positive, got {tau}")


def mc_nll(e: McEnsemble | np.ndarray, y, tau: float):
    """-log of the equally weighted Gaussian mixture over MC outputs, via log-sum-exp.

    ``e`` holds ``T`` samples along axis 0; ``y`` broadcasts against one sample.
    Single-output ensembles ``(T, n, 1)`` are matched against targets ``(n,)``.
    """
    _check_tau(tau)
    mu = e.samples if isinstance(e, McEnsemble) else np.asarray(e, dtype=np.float64)
    y = np.asarray(y, dtype=np.float64)
    if mu.ndim >= 3 and mu.shape[-1] == 1 and mu.shape[1:-1] == y.shape:
        mu = mu[..., 0]
    log_comp = -0.5 * tau * (y - mu) ** 2
    lme = logsumexp(log_comp, axis=0) - np.log(mu.shape[0])
    return -(lme - 0.5 * LOG_2PI + 0.5 * np.log(tau))


def mp_nll(p: PredictiveGaussian, y):
    """Closed-form -log N(y; E_mp, V_mp + 1/tau)."""
    var = p.variance
    return 0.5 * (LOG_2PI + np.log(var) + (np.asarray(y) - p.E_mp) ** 2 / var)


def rmse(predictions, targets) -> float:
    pred = np.asarray(predictions, dtype=np.float64).ravel()
    y = np.asarray(targets, dtype=np.float64).ravel()
    if pred.shape != y.shape or pred.size == 0:
        raise ValueError(f"need equal, non-empty lengths, got {pred.size} and {y.size}")
    return float(np.sqrt(np.mean((pred - y) ** 2)))


def predictive_interval(m, k: float = 2.0):
    """``E +- k sd`` using the model variance only (observation noise excluded)."""
    if not k > 0:
        raise ValueError(f"k must be positive, got {k}")
    if isinstance(m, PredictiveGaussian):
        E, V = np.asarray(m.E_mp), np.asarray(m.V_mp)
    elif isinstance(m, MomentVector):
        E, V = m.E, m.V
    else:
        E, V = (np.asarray(v, dtype=np.float64) for v in m)
    half = k * np.sqrt(V)
    return E - half, E + half


def mean_and_se(values) -> tuple[float, float]:
    """Mean and standard error (sample sd / sqrt(n)) across splits."""
    v = np.asarray(values, dtype=np.float64)
    if v.size == 0:
        return float("nan"), float("nan")
    se = v.std(ddof=1) / np.sqrt(v.size) if v.size > 1 else 0.0
    return float(v.mean()), float(se)
