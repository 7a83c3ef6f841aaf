"""Smooth per-example losses with certified Lipschitz and smoothness constants.

Each loss has the linear-prediction form f(w, (x, y)) = phi(<w, x>, y), so
its gradient is phi'(<w, x>, y) * x. The full objective always adds the
ridge term (mu/2) ||w||^2. Certified constants are closed-form upper
bounds valid for ||x||_2 <= B and ||w||_2 <= domain_radius; tests verify
them against finite-difference oracles.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import ClassVar

import numpy as np
from scipy.special import expit

__all__ = [
    "Example",
    "LossModel",
    "LogisticLoss",
    "HuberLoss",
    "SquaredSigmoidLoss",
    "loss_value",
    "loss_grad",
    "certify_constants",
    "empirical_risk",
    "full_gradient",
    "KERNEL_NONE",
    "KERNEL_LOGISTIC_PRINTED",
    "KERNEL_LOGISTIC_CONVENTIONAL",
    "KERNEL_HUBER",
    "KERNEL_SQUARED_SIGMOID",
]

# Integer tags used to select the compiled stochastic-step kernel.
KERNEL_NONE = -1
KERNEL_LOGISTIC_PRINTED = 0
KERNEL_LOGISTIC_CONVENTIONAL = 1
KERNEL_HUBER = 2
KERNEL_SQUARED_SIGMOID = 3

# sup |d^2/dm^2 (expit(m) - y)^2| over y in [0, 1]:
# 2 * (max expit'^2 + max |expit''|) = 1/8 + 1/(3 sqrt(3)).
_SQ_SIGMOID_CURVATURE = 0.125 + 1.0 / (3.0 * math.sqrt(3.0))


@dataclass(frozen=True)
class Example:
    """One observation: feature vector x and scalar label y."""

    x: np.ndarray
    y: float


@dataclass(frozen=True)
class LossModel:
    """Base class binding a per-example loss to its certification context.

    mu is the ridge weight, B the feature norm bound the data module
    guarantees, and domain_radius the radius of the weight ball on which
    the Lipschitz certificate holds.
    """

    mu: float = 0.0
    B: float = 1.0
    domain_radius: float = 2.0

    kernel_code: ClassVar[int] = KERNEL_NONE

    def __post_init__(self) -> None:
        if not (math.isfinite(self.mu) and self.mu >= 0.0):
            raise ValueError(f"mu must be a nonnegative real, got {self.mu!r}")
        if not (math.isfinite(self.B) and self.B > 0.0):
            raise ValueError(f"B must be a positive real, got {self.B!r}")
        if not (math.isfinite(self.domain_radius) and self.domain_radius > 0.0):
            raise ValueError(
                f"domain_radius must be a positive real, got {self.domain_radius!r}"
            )

    # Subclass hooks, all vectorized over margins m_i = <w, x_i>.
    def base_values(self, margins: np.ndarray, y: np.ndarray) -> np.ndarray:
        raise NotImplementedError

    def base_coefs(self, margins: np.ndarray, y: np.ndarray) -> np.ndarray:
        raise NotImplementedError

    def base_constants(self) -> tuple[float, float]:
        """(L0, beta0) for the unregularized loss under the B bound."""
        raise NotImplementedError

    @property
    def kernel_param(self) -> float:
        return 0.0


@dataclass(frozen=True)
class LogisticLoss(LossModel):
    """Logistic loss.

    The default printed_form=True evaluates log(1 + exp(1 + y <w, x>));
    printed_form=False switches to the conventional log(1 + exp(-y <w, x>)).
    Both share the certified constants L0 = B and beta0 = B^2 / 4.
    """

    printed_form: bool = True

    def base_values(self, margins, y):
        t = 1.0 + y * margins if self.printed_form else -y * margins
        return np.logaddexp(0.0, t)

    def base_coefs(self, margins, y):
        if self.printed_form:
            return expit(1.0 + y * margins) * y
        return (expit(y * margins) - 1.0) * y

    def base_constants(self):
        return self.B, 0.25 * self.B * self.B

    @property
    def kernel_code(self) -> int:  # type: ignore[override]
        return KERNEL_LOGISTIC_PRINTED if self.printed_form else KERNEL_LOGISTIC_CONVENTIONAL


@dataclass(frozen=True)
class HuberLoss(LossModel):
    """Huber regression loss on the residual u = <w, x> - y.

    Quadratic u^2/2 for |u| <= threshold, linear threshold*(|u| - threshold/2)
    beyond. Continuously differentiable at the knot.
    """

    threshold: float = 1.0

    def __post_init__(self) -> None:
        super().__post_init__()
        if not (math.isfinite(self.threshold) and self.threshold > 0.0):
            raise ValueError(f"threshold must be a positive real, got {self.threshold!r}")

    def base_values(self, margins, y):
        u = margins - y
        a = np.abs(u)
        thr = self.threshold
        return np.where(a <= thr, 0.5 * u * u, thr * (a - 0.5 * thr))

    def base_coefs(self, margins, y):
        return np.clip(margins - y, -self.threshold, self.threshold)

    def base_constants(self):
        return self.threshold * self.B, self.B * self.B

    @property
    def kernel_code(self) -> int:  # type: ignore[override]
        return KERNEL_HUBER

    @property
    def kernel_param(self) -> float:
        return self.threshold


@dataclass(frozen=True)
class SquaredSigmoidLoss(LossModel):
    """Squared sigmoid-link regression loss (expit(<w, x>) - y)^2.

    Smooth but non-convex in w; the certificate assumes labels in [0, 1],
    which the sigmoid-link synthetic generator guarantees.
    """

    def base_values(self, margins, y):
        r = expit(margins) - y
        return r * r

    def base_coefs(self, margins, y):
        s = expit(margins)
        return 2.0 * (s - y) * s * (1.0 - s)

    def base_constants(self):
        return 0.5 * self.B, _SQ_SIGMOID_CURVATURE * self.B * self.B

    @property
    def kernel_code(self) -> int:  # type: ignore[override]
        return KERNEL_SQUARED_SIGMOID


def _check_dims(w: np.ndarray, d: int) -> np.ndarray:
    w = np.asarray(w, dtype=float)
    if w.ndim != 1 or w.shape[0] != d:
        raise ValueError(f"weight vector of length {d} expected, got shape {w.shape}")
    return w


def loss_value(model: LossModel, w: np.ndarray, xi: Example) -> float:
    """Regularized per-example loss f(w, xi) + (mu/2) ||w||^2."""
    x = np.asarray(xi.x, dtype=float)
    w = _check_dims(w, x.shape[0])
    margin = np.array([float(x @ w)])
    label = np.array([float(xi.y)])
    base = float(model.base_values(margin, label)[0])
    return base + 0.5 * model.mu * float(w @ w)


def loss_grad(model: LossModel, w: np.ndarray, xi: Example) -> np.ndarray:
    """Exact analytic gradient of :func:`loss_value` with respect to w."""
    x = np.asarray(xi.x, dtype=float)
    w = _check_dims(w, x.shape[0])
    margin = np.array([float(x @ w)])
    label = np.array([float(xi.y)])
    coef = float(model.base_coefs(margin, label)[0])
    return coef * x + model.mu * w


def certify_constants(model: LossModel) -> tuple[float, float]:
    """Certified (L, beta) for the regularized loss.

    L bounds ||grad f|| on the ball of radius domain_radius; beta bounds the
    smoothness constant everywhere.
    """
    L0, beta0 = model.base_constants()
    return L0 + model.mu * model.domain_radius, beta0 + model.mu


def empirical_risk(model: LossModel, w: np.ndarray, S) -> float:
    """Mean regularized loss over the dataset: F(w, S)."""
    X = np.asarray(S.X, dtype=float)
    y = np.asarray(S.y, dtype=float)
    if X.shape[0] == 0:
        raise ValueError("empirical risk over an empty dataset is undefined")
    w = _check_dims(w, X.shape[1])
    values = model.base_values(X @ w, y)
    return float(np.mean(values)) + 0.5 * model.mu * float(w @ w)


def full_gradient(model: LossModel, w: np.ndarray, S) -> np.ndarray:
    """Mean per-example gradient over the dataset, gradient of F(w, S)."""
    X = np.asarray(S.X, dtype=float)
    y = np.asarray(S.y, dtype=float)
    if X.shape[0] == 0:
        raise ValueError("gradient over an empty dataset is undefined")
    w = _check_dims(w, X.shape[1])
    coefs = model.base_coefs(X @ w, y)
    return (coefs @ X) / X.shape[0] + model.mu * w
