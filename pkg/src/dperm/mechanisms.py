"""Noise samplers and privacy-accounting arithmetic for private ERM.

All logarithms in noise formulas are natural logarithms. Every sampler
takes an explicit :class:`RngStream` so that concurrent trials can draw
from independent, individually reproducible substreams of one master
seed.
"""

from __future__ import annotations

import hashlib
import math
from dataclasses import dataclass

import numpy as np

__all__ = [
    "GAMMA_LAPLACE",
    "GAUSSIAN",
    "PrivacyBudget",
    "NoiseSpec",
    "RngStream",
    "sample_gamma_laplace",
    "sample_gaussian",
    "sample_gamma_laplace_bulk",
    "sample_gaussian_bulk",
    "draw_noise",
    "output_noise_spec",
    "lemma1_gaussian_sigma",
    "rrpsgd_noise_sigma",
    "amplified_budget",
    "composed_epsilon",
    "composed_budget",
]

GAMMA_LAPLACE = "gamma_laplace"
GAUSSIAN = "gaussian"

_U64 = 1 << 64


@dataclass(frozen=True)
class PrivacyBudget:
    """An (epsilon, delta) privacy budget; delta == 0 means pure epsilon-DP."""

    epsilon: float
    delta: float = 0.0

    def __post_init__(self) -> None:
        if not (math.isfinite(self.epsilon) and self.epsilon > 0.0):
            raise ValueError(f"epsilon must be a positive real, got {self.epsilon!r}")
        if not (0.0 <= self.delta < 1.0):
            raise ValueError(f"delta must lie in [0, 1), got {self.delta!r}")


@dataclass(frozen=True)
class NoiseSpec:
    """Distribution tag for one d-dimensional noise draw.

    kind GAMMA_LAPLACE denotes the density proportional to
    exp(-||z||_2 / scale); kind GAUSSIAN denotes i.i.d. coordinates with
    standard deviation `scale`. A scale of exactly 0 is the degenerate
    zero-noise spec produced when the calibrated sensitivity is 0; both
    samplers reject it, but :func:`draw_noise` maps it to a zero vector.
    """

    kind: str
    scale: float
    dimension: int

    def __post_init__(self) -> None:
        if self.kind not in (GAMMA_LAPLACE, GAUSSIAN):
            raise ValueError(f"unknown noise kind {self.kind!r}")
        if not (math.isfinite(self.scale) and self.scale >= 0.0):
            raise ValueError(f"scale must be a finite nonnegative real, got {self.scale!r}")
        if not (isinstance(self.dimension, (int, np.integer)) and self.dimension >= 1):
            raise ValueError(f"dimension must be a positive integer, got {self.dimension!r}")


@dataclass(frozen=True)
class RngStream:
    """Counter-based RNG address.

    The pair (seed, stream_id) selects a Philox stream through a 128-bit
    key, so identical pairs replay identical sample sequences and
    distinct stream ids are statistically independent.
    """

    seed: int
    stream_id: int = 0

    def __post_init__(self) -> None:
        for name, value in (("seed", self.seed), ("stream_id", self.stream_id)):
            if not (isinstance(value, (int, np.integer)) and 0 <= value < _U64):
                raise ValueError(f"{name} must be a 64-bit unsigned integer, got {value!r}")

    def generator(self) -> np.random.Generator:
        """A fresh generator positioned at the start of this stream."""
        return np.random.Generator(np.random.Philox(key=(int(self.stream_id) << 64) | int(self.seed)))

    def child(self, label: str) -> "RngStream":
        """Derive a named substream; the seed stays fixed, the id is hashed."""
        digest = hashlib.blake2b(
            f"{self.stream_id}/{label}".encode("utf-8"), digest_size=8
        ).digest()
        return RngStream(self.seed, int.from_bytes(digest, "little"))


def _check_dim_sigma(d: int, sigma: float) -> None:
    if not (isinstance(d, (int, np.integer)) and d >= 1):
        raise ValueError(f"dimension must be a positive integer, got {d!r}")
    if not (math.isfinite(sigma) and sigma > 0.0):
        raise ValueError(f"sigma must be a positive real, got {sigma!r}")


def sample_gamma_laplace(d: int, sigma: float, rng: RngStream) -> np.ndarray:
    """Draw z with density proportional to exp(-||z||_2 / sigma) in R^d.

    Polar decomposition of the density: the radius ||z|| follows a Gamma
    distribution with shape d and scale sigma, and the direction is
    uniform on the unit sphere. Second moment: E||z||^2 = d(d+1) sigma^2.
    """
    _check_dim_sigma(d, sigma)
    gen = rng.generator()
    radius = gen.gamma(shape=float(d), scale=sigma)
    direction = gen.standard_normal(d)
    norm = float(np.linalg.norm(direction))
    while norm == 0.0:  # probability-zero guard; keeps the draw well defined
        direction = gen.standard_normal(d)
        norm = float(np.linalg.norm(direction))
    return (radius / norm) * direction


def sample_gaussian(d: int, sigma: float, rng: RngStream) -> np.ndarray:
    """Draw d i.i.d. centered Gaussian coordinates with std sigma.

    Second moment: E||z||^2 = d sigma^2.
    """
    _check_dim_sigma(d, sigma)
    gen = rng.generator()
    return sigma * gen.standard_normal(d)


def sample_gamma_laplace_bulk(d: int, sigma: float, count: int, rng: RngStream) -> np.ndarray:
    """Draw `count` vectors from the L2-Laplace density as a (count, d) array.

    Vectorized counterpart of sample_gamma_laplace for Monte Carlo moment
    checks; the per-row distribution is identical, the stream layout is not.
    """
    _check_dim_sigma(d, sigma)
    if not (isinstance(count, (int, np.integer)) and count >= 1):
        raise ValueError(f"count must be a positive integer, got {count!r}")
    gen = rng.generator()
    radii = gen.gamma(shape=float(d), scale=sigma, size=count)
    directions = gen.standard_normal((count, d))
    norms = np.linalg.norm(directions, axis=1)
    for i in np.flatnonzero(norms == 0.0):  # probability-zero guard
        v = gen.standard_normal(d)
        while float(np.linalg.norm(v)) == 0.0:
            v = gen.standard_normal(d)
        directions[i] = v
        norms[i] = float(np.linalg.norm(v))
    return directions * (radii / norms)[:, None]


def sample_gaussian_bulk(d: int, sigma: float, count: int, rng: RngStream) -> np.ndarray:
    """Draw `count` spherical Gaussian vectors as a (count, d) array."""
    _check_dim_sigma(d, sigma)
    if not (isinstance(count, (int, np.integer)) and count >= 1):
        raise ValueError(f"count must be a positive integer, got {count!r}")
    return sigma * rng.generator().standard_normal((count, d))


def draw_noise(spec: NoiseSpec, rng: RngStream) -> np.ndarray:
    """Sample one vector according to `spec`; scale 0 yields exact zeros."""
    if spec.scale == 0.0:
        return np.zeros(spec.dimension)
    if spec.kind == GAMMA_LAPLACE:
        return sample_gamma_laplace(spec.dimension, spec.scale, rng)
    return sample_gaussian(spec.dimension, spec.scale, rng)


def output_noise_spec(budget: PrivacyBudget, sensitivity: float, d: int) -> NoiseSpec:
    """Noise spec for releasing one vector of L2 sensitivity `sensitivity`.

    delta == 0 selects the GAMMA_LAPLACE kind with scale sensitivity/epsilon;
    delta > 0 selects GAUSSIAN with scale
    sensitivity * sqrt(2 log(2/delta)) / epsilon. Zero sensitivity gives the
    degenerate zero-noise spec of the corresponding kind.
    """
    if not (isinstance(d, (int, np.integer)) and d >= 1):
        raise ValueError(f"dimension must be a positive integer, got {d!r}")
    if not (math.isfinite(sensitivity) and sensitivity >= 0.0):
        raise ValueError(f"sensitivity must be a nonnegative real, got {sensitivity!r}")
    if budget.delta == 0.0:
        return NoiseSpec(GAMMA_LAPLACE, sensitivity / budget.epsilon, int(d))
    scale = sensitivity * math.sqrt(2.0 * math.log(2.0 / budget.delta)) / budget.epsilon
    return NoiseSpec(GAUSSIAN, scale, int(d))


def lemma1_gaussian_sigma(budget: PrivacyBudget, l2_sensitivity: float) -> float:
    """Classical Gaussian-mechanism std: sqrt(2 ln(1.25/delta)) * sensitivity / epsilon.

    Exposed for generic Gaussian-mechanism use; the output-perturbation
    release binds to :func:`output_noise_spec` instead.
    """
    if budget.delta == 0.0:
        raise ValueError("the Gaussian mechanism requires delta > 0")
    if not (math.isfinite(l2_sensitivity) and l2_sensitivity > 0.0):
        raise ValueError(f"l2_sensitivity must be a positive real, got {l2_sensitivity!r}")
    return math.sqrt(2.0 * math.log(1.25 / budget.delta)) * l2_sensitivity / budget.epsilon


def rrpsgd_noise_sigma(L: float, n: int, budget: PrivacyBudget) -> float:
    """Per-coordinate noise std for the random-round private SGD steps.

    sigma_z^2 = 4 L^2 log(3n/delta) log(2/delta) / epsilon^2, matching the
    per-step density exp(-eps^2 ||z||^2 / (8 L^2 log(3n/delta) log(2/delta))).
    """
    if not (math.isfinite(L) and L > 0.0):
        raise ValueError(f"L must be a positive real, got {L!r}")
    if not (isinstance(n, (int, np.integer)) and n >= 1):
        raise ValueError(f"n must be a positive integer, got {n!r}")
    if budget.delta == 0.0:
        raise ValueError("per-step Gaussian noise requires delta > 0")
    variance = (
        4.0
        * L
        * L
        * math.log(3.0 * n / budget.delta)
        * math.log(2.0 / budget.delta)
        / (budget.epsilon * budget.epsilon)
    )
    return math.sqrt(variance)


def amplified_budget(budget: PrivacyBudget, alpha: float) -> PrivacyBudget:
    """Subsampling amplification: running on a uniform alpha fraction of the
    data turns an (epsilon, delta) mechanism into a (2 alpha epsilon,
    alpha delta) one."""
    if not (0.0 < alpha <= 1.0):
        raise ValueError(f"alpha must lie in (0, 1], got {alpha!r}")
    return PrivacyBudget(2.0 * alpha * budget.epsilon, alpha * budget.delta)


def composed_epsilon(per_step_epsilon: float, T: int, delta_prime: float) -> float:
    """Strong composition: total epsilon after T adaptive (eps, delta) steps.

    epsilon' = sqrt(2 T ln(1/delta')) eps + T eps (e^eps - 1); the composed
    delta is T delta + delta' (see :func:`composed_budget`).
    """
    if not (math.isfinite(per_step_epsilon) and per_step_epsilon > 0.0):
        raise ValueError(f"per_step_epsilon must be a positive real, got {per_step_epsilon!r}")
    if not (isinstance(T, (int, np.integer)) and T >= 1):
        raise ValueError(f"T must be a positive integer, got {T!r}")
    if not (0.0 < delta_prime < 1.0):
        raise ValueError(f"delta_prime must lie in (0, 1), got {delta_prime!r}")
    eps = float(per_step_epsilon)
    return math.sqrt(2.0 * T * math.log(1.0 / delta_prime)) * eps + T * eps * math.expm1(eps)


def composed_budget(per_step: PrivacyBudget, T: int, delta_prime: float) -> PrivacyBudget:
    """Total budget after T-fold strong composition of `per_step` releases."""
    return PrivacyBudget(
        composed_epsilon(per_step.epsilon, T, delta_prime),
        T * per_step.delta + delta_prime,
    )
