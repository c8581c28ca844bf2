"""scikit-learn compatible wrappers around the analysis fits.

``X`` is a single feature column (gate count, total time or gate interval)
and ``y`` the measured quantity, so the models drop into pipelines,
``clone`` and parameter searches like any other regressor.
"""

from __future__ import annotations

import numpy as np
from sklearn.base import BaseEstimator, RegressorMixin
from sklearn.utils.validation import check_array, check_is_fitted, check_X_y

from . import analysis


def _column(X) -> np.ndarray:
    X = check_array(X, ensure_2d=True)
    if X.shape[1] != 1:
        raise ValueError(f"expected a single feature column, got {X.shape[1]}")
    return X[:, 0]


class GateErrorRegressor(RegressorMixin, BaseEstimator):
    """Exponential fidelity decay ``(1 - eps0)(1 - eps_gate)^N`` over gate count."""

    def fit(self, X, y):
        X, y = check_X_y(X, y)
        self.result_ = analysis.fit_gate_error(_column(X), y)
        self.eps0_ = self.result_["eps0"]
        self.eps_gate_ = self.result_["eps_gate"]
        self.n_features_in_ = 1
        return self

    def predict(self, X):
        check_is_fitted(self, "result_")
        return analysis.gate_error_model(_column(X), self.eps0_, self.eps_gate_)


class CoherenceEnvelopeRegressor(RegressorMixin, BaseEstimator):
    """Stretched-exponential coherence envelope over total evolution time.

    Parameters
    ----------
    plateau : float or None
        Fixed fidelity plateau; ``None`` fits it.
    """

    def __init__(self, plateau=None):
        self.plateau = plateau

    def fit(self, X, y):
        X, y = check_X_y(X, y)
        self.result_ = analysis.fit_coherence_envelope(_column(X), y, plateau=self.plateau)
        self.t2_ = self.result_["t2"]
        self.p_ = self.result_["p"]
        self.plateau_ = self.result_["plateau"]
        self.n_features_in_ = 1
        return self

    def predict(self, X):
        check_is_fitted(self, "result_")
        return analysis.envelope_model(_column(X), self.t2_, self.p_, self.plateau_)


class PowerLawRegressor(RegressorMixin, BaseEstimator):
    """``y = prefactor * N^exponent`` fitted in log-log space."""

    def fit(self, X, y):
        X, y = check_X_y(X, y)
        self.result_ = analysis.fit_power_law(_column(X), y)
        self.exponent_ = self.result_["exponent"]
        self.prefactor_ = self.result_["prefactor"]
        self.n_features_in_ = 1
        return self

    def predict(self, X):
        check_is_fitted(self, "result_")
        return self.prefactor_ * _column(X) ** self.exponent_


class DipDetector(BaseEstimator):
    """Finds resonance dips in a fidelity-versus-interval scan and estimates the detuning."""

    def __init__(self, prominence=0.05, window=None):
        self.prominence = prominence
        self.window = window

    def fit(self, X, y):
        X, y = check_X_y(X, y)
        self.report_ = analysis.find_dips(_column(X), y, self.prominence, self.window)
        self.dip_positions_ = np.array(self.report_.dip_positions)
        self.estimated_detuning_khz_ = self.report_.estimated_detuning
        self.n_features_in_ = 1
        return self
