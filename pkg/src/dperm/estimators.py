"""Scikit-learn style wrappers around the private optimizers.

These adapt the functional API to fit/predict estimators. Calibration of
the domain scale D uses a non-private oracle solve on the training data,
matching the benchmark harness; the privacy guarantee therefore covers
the released coefficients given D, not the choice of D itself.
"""

from __future__ import annotations

import numpy as np
from sklearn.base import BaseEstimator, ClassifierMixin, RegressorMixin
from sklearn.utils.validation import check_array, check_is_fitted, check_X_y

from .data import CLASSIFICATION, Dataset, REGRESSION
from .losses import HuberLoss, LogisticLoss, empirical_risk
from .mechanisms import PrivacyBudget, RngStream
from .optimizers import baseline_private_sgd, opgd, rrpsgd, solve_oracle

__all__ = ["PrivateERMClassifier", "PrivateERMRegressor"]

_D_FLOOR = 1e-2


class _PrivateERMBase(BaseEstimator):
    def __init__(
        self,
        method: str = "opgd",
        epsilon: float = 1.0,
        delta: float = 1e-3,
        mu: float = 0.0,
        batch_size: int = 50,
        normalize: bool = True,
        seed: int = 0,
    ):
        self.method = method
        self.epsilon = epsilon
        self.delta = delta
        self.mu = mu
        self.batch_size = batch_size
        self.normalize = normalize
        self.seed = seed

    def _fit_dataset(self, S: Dataset, loss_cls) -> None:
        if self.method not in ("opgd", "rrpsgd", "baseline"):
            raise ValueError(f"unknown method {self.method!r}")
        budget = PrivacyBudget(self.epsilon, self.delta)
        # Fail before the oracle solve: the stochastic solvers would only
        # reject the budget after it.
        if self.method != "opgd" and budget.delta == 0.0:
            raise ValueError(f"method {self.method!r} requires delta > 0")
        probe = loss_cls(mu=self.mu, B=S.B, domain_radius=1.0)
        oracle = solve_oracle(probe, S, tol=1e-8)
        D = max(2.0 * float(np.linalg.norm(oracle.w)), _D_FLOOR)
        model = loss_cls(mu=self.mu, B=S.B, domain_radius=2.0 * D)
        rng = RngStream(seed=self.seed).child(f"estimator/{self.method}")
        if self.method == "opgd":
            sol = opgd(model, S, budget, D, rng)
        elif self.method == "rrpsgd":
            sol = rrpsgd(model, S, budget, rng)
        else:
            sol = baseline_private_sgd(model, S, budget, self.batch_size, D, rng)
        self.coef_ = sol.w_priv
        self.solution_ = sol
        self.model_ = model
        self.training_risk_ = empirical_risk(model, sol.w_priv, S)

    def _scale_rows(self, X: np.ndarray) -> tuple[np.ndarray, float]:
        norms = np.linalg.norm(X, axis=1)
        max_norm = float(norms.max()) if X.shape[0] else 0.0
        if self.normalize:
            if max_norm == 0.0:
                raise ValueError("cannot normalize an all-zero feature matrix")
            return X / max_norm, max_norm
        if max_norm > 1.0 + 1e-9:
            raise ValueError(
                "feature rows must satisfy ||x|| <= 1 when normalize=False; "
                f"max norm is {max_norm}"
            )
        return X, 1.0


class PrivateERMClassifier(ClassifierMixin, _PrivateERMBase):
    """Binary linear classifier trained with a differentially private solver.

    method selects the training algorithm: "opgd" (output-perturbed full
    gradient descent), "rrpsgd" (random-round private SGD), or "baseline"
    (mini-batch private SGD). normalize=True rescales features by the max
    row norm so the loss's certified constants hold.
    """

    def fit(self, X, y):
        X, y = check_X_y(X, y, dtype=np.float64, y_numeric=False)
        self.classes_ = np.unique(y)
        if self.classes_.shape[0] != 2:
            raise ValueError(
                f"exactly 2 classes required, got {self.classes_.shape[0]}"
            )
        y_signed = np.where(y == self.classes_[1], 1.0, -1.0)
        X_scaled, self.scale_ = self._scale_rows(X)
        S = Dataset(X=X_scaled, y=y_signed, B=1.0, task=CLASSIFICATION, name="fit")

        # The conventional sign convention, so that minimizing the loss
        # aligns margins with labels and predict() is meaningful.
        def build(mu, B, domain_radius):
            return LogisticLoss(
                printed_form=False, mu=mu, B=B, domain_radius=domain_radius
            )

        self._fit_dataset(S, build)
        self.n_features_in_ = X.shape[1]
        return self

    def decision_function(self, X):
        check_is_fitted(self, "coef_")
        X = check_array(X, dtype=np.float64)
        return (X / self.scale_) @ self.coef_

    def predict(self, X):
        scores = self.decision_function(X)
        return np.where(scores >= 0.0, self.classes_[1], self.classes_[0])


class PrivateERMRegressor(RegressorMixin, _PrivateERMBase):
    """Linear regressor trained with a differentially private solver.

    Uses the Huber loss (quadratic near zero, linear in the tails), whose
    gradient bound the privacy calibration needs. Labels are rescaled to
    [-1, 1] during fit and predictions mapped back.
    """

    def fit(self, X, y):
        X, y = check_X_y(X, y, dtype=np.float64, y_numeric=True)
        X_scaled, self.scale_ = self._scale_rows(X)
        y_max = float(np.max(np.abs(y))) if y.shape[0] else 0.0
        self.y_scale_ = y_max if y_max > 0.0 else 1.0
        S = Dataset(
            X=X_scaled,
            y=y / self.y_scale_,
            B=1.0,
            task=REGRESSION,
            name="fit",
            y_scale=self.y_scale_,
        )
        self._fit_dataset(S, HuberLoss)
        self.n_features_in_ = X.shape[1]
        return self

    def predict(self, X):
        check_is_fitted(self, "coef_")
        X = check_array(X, dtype=np.float64)
        return ((X / self.scale_) @ self.coef_) * self.y_scale_
