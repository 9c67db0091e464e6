"""scikit-learn style regressor wrapping training, MC dropout and moment propagation."""

from __future__ import annotations

import numpy as np
from sklearn.base import BaseEstimator, RegressorMixin
from sklearn.utils.validation import check_array, check_is_fitted, check_X_y

from .mc import mc_ensemble
from .moments import mp_forward
from .network import build_network, forward_deterministic, mlp_specs
from .predictive import PredictiveGaussian, mc_nll, mp_nll
from .trainer import Dataset, Scaler, TrainConfig, train

METHODS = ("mp", "mc", "deterministic")


class MCDropoutRegressor(RegressorMixin, BaseEstimator):
    """ReLU MLP trained with dropout, queried by MC sampling or a single moment pass.

    Features and target are standardized internally. ``tau`` is the noise
    precision on the standardized target scale; predictive variances and NLLs
    are reported in original target units.

    Parameters
    ----------
    hidden_layer_sizes : tuple of int
    dropout : float
        Drop probability applied ahead of every Dense layer that reads a hidden layer.
    tau : float
        Observation noise precision (standardized scale).
    input_dropout : bool
        Also drop raw input features.
    n_mc : int
        Number of stochastic passes for ``method="mc"``.
    """

    def __init__(self, hidden_layer_sizes=(50,), dropout=0.05, tau=1.0, input_dropout=False,
                 epochs=400, batch_size=128, learning_rate=1e-3, weight_decay=0.0,
                 n_mc=10_000, random_state=0):
        self.hidden_layer_sizes = hidden_layer_sizes
        self.dropout = dropout
        self.tau = tau
        self.input_dropout = input_dropout
        self.epochs = epochs
        self.batch_size = batch_size
        self.learning_rate = learning_rate
        self.weight_decay = weight_decay
        self.n_mc = n_mc
        self.random_state = random_state

    def fit(self, X, y):
        X, y = check_X_y(X, y, y_numeric=True)
        self.scaler_ = Scaler.fit(X, y)
        self.n_features_in_ = X.shape[1]
        specs = mlp_specs(X.shape[1], list(self.hidden_layer_sizes), 1, self.dropout, self.input_dropout)
        net = build_network(specs, seed=self.random_state)
        cfg = TrainConfig(epochs=self.epochs, batch_size=self.batch_size,
                          learning_rate=self.learning_rate, weight_decay=self.weight_decay,
                          seed=self.random_state)
        data = Dataset(self.scaler_.transform_X(X), self.scaler_.transform_y(y))
        self.network_ = train(net, data, cfg)
        return self

    def _scaled(self, X):
        check_is_fitted(self, "network_")
        X = check_array(X)
        if X.shape[1] != self.n_features_in_:
            raise ValueError(f"X has {X.shape[1]} features, expected {self.n_features_in_}")
        return self.scaler_.transform_X(X)

    def predict_moments(self, X, method="mp"):
        """Predictive mean and model (epistemic) variance, original units."""
        Xs = self._scaled(X)
        if method == "mp":
            m = mp_forward(self.network_, Xs)
            E, V = m.E[:, 0], m.V[:, 0]
        elif method == "mc":
            s = mc_ensemble(self.network_, Xs, self.n_mc, self.random_state).samples[..., 0]
            E, V = s.mean(axis=0), s.var(axis=0, ddof=1)
        elif method == "deterministic":
            E = forward_deterministic(self.network_, Xs)[:, 0]
            V = np.zeros_like(E)
        else:
            raise ValueError(f"method must be one of {METHODS}, got {method!r}")
        return self.scaler_.inverse_y(E), self.scaler_.inverse_var(V)

    def predict(self, X, return_std=False, method="mp"):
        E, V = self.predict_moments(X, method)
        return (E, np.sqrt(V)) if return_std else E

    def nll(self, X, y, method="mp"):
        """Mean test negative log-likelihood in original target units."""
        Xs = self._scaled(X)
        ys = self.scaler_.transform_y(np.asarray(y, dtype=np.float64).ravel())
        if method == "mp":
            m = mp_forward(self.network_, Xs)
            per_point = mp_nll(PredictiveGaussian(m.E[:, 0], m.V[:, 0], self.tau), ys)
        elif method == "mc":
            ens = mc_ensemble(self.network_, Xs, self.n_mc, self.random_state)
            per_point = mc_nll(ens, ys, self.tau)
        else:
            raise ValueError(f"method must be 'mp' or 'mc', got {method!r}")
        return float(np.mean(per_point) + np.log(self.scaler_.y_std))
