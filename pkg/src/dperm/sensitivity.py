"""Empirical verification of GD stability.

Runs full gradient descent in lockstep on a dataset and a neighbor
(differing in exactly one example), records the iterate distance at every
step, and checks it against the closed-form worst-case bounds. This is a
verification harness: the private optimizers use the closed-form bounds
directly and never trace.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .data import Dataset, CLASSIFICATION
from .losses import Example, LossModel, certify_constants, full_gradient
from .mechanisms import RngStream
from .optimizers import GdConfig, _validate_step_size, sensitivity_bound

__all__ = [
    "NeighborPair",
    "StabilityTrace",
    "make_neighbor",
    "trace_stability",
    "recursion_check",
    "sweep_pairs",
]

# Same relative slack the Dataset norm check uses.
_NORM_SLACK = 1.0 + 1e-9


@dataclass(frozen=True)
class NeighborPair:
    """Two equal-size datasets that differ in exactly one example."""

    S: Dataset
    S_prime: Dataset
    differing_index: int

    def __post_init__(self) -> None:
        if self.S.X.shape != self.S_prime.X.shape:
            raise ValueError("neighbor datasets must have identical shape")
        n = self.S.n
        if not (0 <= self.differing_index < n):
            raise ValueError(
                f"differing_index {self.differing_index} out of range for n={n}"
            )
        mask = np.any(self.S.X != self.S_prime.X, axis=1) | (self.S.y != self.S_prime.y)
        mask[self.differing_index] = False
        if np.any(mask):
            bad = int(np.flatnonzero(mask)[0])
            raise ValueError(
                f"datasets differ at index {bad}, outside differing_index "
                f"{self.differing_index}"
            )


@dataclass(frozen=True)
class StabilityTrace:
    """Per-step iterate distances from one lockstep GD run.

    deltas[t] = ||w_t - w_t'|| for t = 0..T; bound is the closed-form
    worst case for the instance's convexity class.
    """

    deltas: np.ndarray
    bound: float
    eta: float
    T: int

    def __post_init__(self) -> None:
        deltas = np.ascontiguousarray(np.asarray(self.deltas, dtype=float))
        if deltas.ndim != 1 or deltas.size != self.T + 1:
            raise ValueError("deltas must be a vector of length T + 1")
        if deltas[0] != 0.0:
            raise ValueError("deltas[0] must be 0: both runs share w0")
        if np.any(deltas < 0.0):
            raise ValueError("deltas must be nonnegative")
        deltas.setflags(write=False)
        object.__setattr__(self, "deltas", deltas)

    @property
    def max_delta(self) -> float:
        return float(self.deltas.max())


def _random_example(S: Dataset, gen: np.random.Generator) -> Example:
    """A feature vector with ||x|| <= B and a label matching the task."""
    d = S.d
    x = gen.standard_normal(d)
    norm = float(np.linalg.norm(x))
    while norm == 0.0:
        x = gen.standard_normal(d)
        norm = float(np.linalg.norm(x))
    # Radius B * U^(1/d) makes the point uniform in the B-ball.
    x *= S.B * float(gen.random()) ** (1.0 / d) / norm
    if S.task == CLASSIFICATION:
        y = float(gen.choice((-1.0, 1.0)))
    else:
        lo, hi = float(S.y.min()), float(S.y.max())
        y = float(gen.uniform(lo, hi)) if hi > lo else lo
    return Example(x=x, y=y)


def make_neighbor(
    S: Dataset,
    index: int,
    replacement: Example | None = None,
    rng: RngStream | None = None,
) -> NeighborPair:
    """Replace one example; replacement None draws a random one from rng."""
    if not (0 <= index < S.n):
        raise ValueError(f"index {index} out of range for n={S.n}")
    if replacement is None:
        if rng is None:
            raise ValueError("rng is required when replacement is not given")
        replacement = _random_example(S, rng.generator())
    x = np.asarray(replacement.x, dtype=float)
    if x.shape != (S.d,):
        raise ValueError(f"replacement features must have shape ({S.d},)")
    norm = float(np.linalg.norm(x))
    if norm > S.B * _NORM_SLACK:
        raise ValueError(
            f"replacement feature norm {norm} exceeds the bound B={S.B}"
        )
    X2 = S.X.copy()
    y2 = S.y.copy()
    X2[index] = x
    y2[index] = replacement.y
    S_prime = Dataset(
        X=X2,
        y=y2,
        B=S.B,
        task=S.task,
        name=f"{S.name}/neighbor@{index}",
        y_scale=S.y_scale,
        feature_names=S.feature_names,
        label_name=S.label_name,
    )
    return NeighborPair(S=S, S_prime=S_prime, differing_index=index)


def trace_stability(model: LossModel, pair: NeighborPair, cfg: GdConfig) -> StabilityTrace:
    """Run GD on both datasets in lockstep and record ||w_t - w_t'||."""
    _validate_step_size(model, cfg.eta)
    L, beta = certify_constants(model)
    n = pair.S.n
    w = cfg.w0.copy()
    w_p = cfg.w0.copy()
    deltas = np.empty(cfg.T + 1)
    deltas[0] = 0.0
    for t in range(cfg.T):
        w = w - cfg.eta * full_gradient(model, w, pair.S)
        w_p = w_p - cfg.eta * full_gradient(model, w_p, pair.S_prime)
        deltas[t + 1] = float(np.linalg.norm(w - w_p))
    bound = sensitivity_bound(model.mu, beta, L, n, cfg.eta, cfg.T)
    return StabilityTrace(deltas=deltas, bound=bound, eta=cfg.eta, T=cfg.T)


def recursion_check(
    trace: StabilityTrace, L: float, eta: float, n: int, slack: float = 1e-10
) -> bool:
    """Check the convex-case squared-distance recursion at every step.

    Requires delta_{t+1}^2 <= delta_t^2 + (4 eta L / n) delta_t
    + 8 eta^2 L^2 / n^2 + slack for all t.
    """
    d = trace.deltas
    lin = 4.0 * eta * L / n
    const = 8.0 * eta * eta * L * L / (n * n)
    for t in range(trace.T):
        if d[t + 1] ** 2 > d[t] ** 2 + lin * d[t] + const + slack:
            return False
    return True


def sweep_pairs(
    model: LossModel,
    S: Dataset,
    cfg: GdConfig,
    pairs: int,
    rng: RngStream,
) -> list[StabilityTrace]:
    """Trace `pairs` random neighbor pairs (random index, random example)."""
    if pairs < 0:
        raise ValueError(f"pairs must be nonnegative, got {pairs}")
    traces = []
    for k in range(pairs):
        child = rng.child(f"pair/{k}")
        gen = child.generator()
        index = int(gen.integers(0, S.n))
        pair = make_neighbor(S, index, replacement=_random_example(S, gen))
        traces.append(trace_stability(model, pair, cfg))
    return traces
