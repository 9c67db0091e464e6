"""Moment propagation for dropout networks, with an MC dropout reference.

One deterministic pass carries the mean and variance of every unit through
Dropout, Dense and ReLU layers, approximating what thousands of stochastic
MC dropout passes would estimate.
"""

from .estimator import MCDropoutRegressor
from .mc import McEnsemble, RngStream, empirical_moments, mc_ensemble, mc_forward
from .moments import MomentVector, lift, mp_dense, mp_dropout, mp_forward, mp_relu
from .network import (Dense, Dropout, Network, NetworkFormatError, ReLU, ShapeError, build_network,
                      forward_deterministic, load_network, mlp_specs, save_network)
from .predictive import PredictiveGaussian, mc_nll, mp_nll, predictive_interval, rmse
from .trainer import Dataset, TrainConfig, TrainingError, standardize, train

__version__ = "0.1.0"

__all__ = [
    "MCDropoutRegressor", "McEnsemble", "RngStream", "empirical_moments", "mc_ensemble", "mc_forward",
    "MomentVector", "lift", "mp_dense", "mp_dropout", "mp_forward", "mp_relu",
    "Dense", "Dropout", "Network", "NetworkFormatError", "ReLU", "ShapeError", "build_network",
    "forward_deterministic", "load_network", "mlp_specs", "save_network",
    "PredictiveGaussian", "mc_nll", "mp_nll", "predictive_interval", "rmse",
    "Dataset", "TrainConfig", "TrainingError", "standardize", "train",
]
