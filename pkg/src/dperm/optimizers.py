"""Private ERM optimizers.

Four solvers share this module: deterministic full gradient descent (also
the non-private oracle), output-perturbed full GD, random-round private
SGD, and the mini-batch private SGD comparator. The stochastic loops run
in compiled kernels that consume numpy Philox generators directly, so a
plain-numpy replay drawing the same substreams in bulk reproduces every
trajectory bit for bit.

Substream layout (fixed contract, relied on by verification tests):
  rng.child("round"): one integers(0, n^2) draw selecting R (random-round
    SGD only; skipped when rounds_override is given).
  rng.child("idx"): one integers(0, n) draw per sampled example, in step
    order (mini-batch steps draw their m indices consecutively).
  rng.child("noise"): one standard_normal() draw per perturbed coordinate,
    in step-major coordinate-minor order; skipped entirely when the
    injected noise scale is zero.
Output perturbation draws its single noise vector from `rng` itself.
"""

from __future__ import annotations

import math
import time
import warnings
from dataclasses import dataclass

import numpy as np
from numba import njit

from .losses import (
    KERNEL_NONE,
    LossModel,
    certify_constants,
    empirical_risk,
    full_gradient,
)
from .mechanisms import (
    NoiseSpec,
    PrivacyBudget,
    RngStream,
    amplified_budget,
    composed_budget,
    draw_noise,
    output_noise_spec,
    rrpsgd_noise_sigma,
)

__all__ = [
    "GdConfig",
    "PrivateSolution",
    "OracleResult",
    "RoundDistribution",
    "gd",
    "solve_oracle",
    "theoretical_T",
    "sensitivity_bound",
    "opgd",
    "round_distribution",
    "rrpsgd",
    "baseline_private_sgd",
]

# Relative slack when validating step sizes against certified constants.
_ETA_SLACK = 1.0 + 1e-9


@dataclass(frozen=True)
class GdConfig:
    """Step size, iteration count, and start point for full GD."""

    eta: float
    T: int
    w0: np.ndarray

    def __post_init__(self) -> None:
        if not (math.isfinite(self.eta) and self.eta > 0.0):
            raise ValueError(f"eta must be a positive real, got {self.eta!r}")
        if not (isinstance(self.T, (int, np.integer)) and self.T >= 0):
            raise ValueError(f"T must be a nonnegative integer, got {self.T!r}")
        w0 = np.ascontiguousarray(np.asarray(self.w0, dtype=float))
        if w0.ndim != 1:
            raise ValueError("w0 must be a 1-d vector")
        object.__setattr__(self, "w0", w0)


@dataclass(frozen=True)
class PrivateSolution:
    """Result of one private optimizer invocation.

    noise_spec is the output NoiseSpec for output perturbation, or the
    per-step noise std (float) for the stochastic algorithms. wall_time
    records process CPU seconds of the optimizer call. grad_evals counts
    per-example gradient evaluations.
    """

    w_priv: np.ndarray
    w_pre_noise: np.ndarray
    algorithm: str
    noise_spec: NoiseSpec | float | None
    iterations_run: int
    seed: RngStream
    wall_time: float
    grad_evals: int
    eta: float
    per_step_budget: PrivacyBudget | None = None
    total_budget: PrivacyBudget | None = None


@dataclass(frozen=True)
class OracleResult:
    """Non-private minimizer estimate with its achieved gradient norm."""

    w: np.ndarray
    grad_norm: float
    iterations: int
    converged: bool


@dataclass(frozen=True)
class RoundDistribution:
    """Distribution of the random round count over 1..n^2.

    probabilities[k] is Pr(R = k + 1), proportional to 2 eta_k - beta eta_k^2.
    """

    probabilities: np.ndarray

    def __post_init__(self) -> None:
        p = np.ascontiguousarray(np.asarray(self.probabilities, dtype=float))
        if p.ndim != 1 or p.size < 1:
            raise ValueError("probabilities must be a nonempty vector")
        if np.any(p < 0.0):
            raise ValueError("probabilities must be nonnegative")
        if abs(float(p.sum()) - 1.0) > 1e-12:
            raise ValueError("probabilities must sum to 1 within 1e-12")
        p.setflags(write=False)
        object.__setattr__(self, "probabilities", p)

    def sample(self, gen: np.random.Generator) -> int:
        """Draw a round count in 1..len(probabilities) by inverse CDF."""
        cdf = np.cumsum(self.probabilities)
        k = int(np.searchsorted(cdf, gen.random(), side="right"))
        return min(k, self.probabilities.size - 1) + 1


def _step_size_for(model: LossModel) -> float:
    _, beta = certify_constants(model)
    return 1.0 / (model.mu + beta) if model.mu > 0.0 else 1.0 / beta


def _validate_step_size(model: LossModel, eta: float) -> None:
    limit = _step_size_for(model)
    if eta > limit * _ETA_SLACK:
        branch = "1/(mu + beta)" if model.mu > 0.0 else "1/beta"
        raise ValueError(
            f"step size {eta} exceeds the {branch} limit {limit} required by the "
            "stability analysis"
        )


def gd(model: LossModel, S, cfg: GdConfig) -> np.ndarray:
    """Run exactly cfg.T full-gradient steps; deterministic."""
    _validate_step_size(model, cfg.eta)
    w = cfg.w0.copy()
    for _ in range(cfg.T):
        w -= cfg.eta * full_gradient(model, w, S)
    return w


def solve_oracle(
    model: LossModel,
    S,
    tol: float,
    max_iter: int = 200_000,
    w0: np.ndarray | None = None,
) -> OracleResult:
    """GD until ||grad F|| <= tol or an iteration cap; the w-hat oracle.

    Non-convergence within the cap emits a warning rather than raising:
    for mu = 0 the flat directions may make tight tolerances unreachable.
    """
    if not (math.isfinite(tol) and tol > 0.0):
        raise ValueError(f"tol must be a positive real, got {tol!r}")
    eta = _step_size_for(model)
    w = np.zeros(S.X.shape[1]) if w0 is None else np.asarray(w0, dtype=float).copy()
    g = full_gradient(model, w, S)
    norm = float(np.linalg.norm(g))
    iters = 0
    while norm > tol and iters < max_iter:
        w -= eta * g
        g = full_gradient(model, w, S)
        norm = float(np.linalg.norm(g))
        iters += 1
    converged = norm <= tol
    if not converged:
        warnings.warn(
            f"oracle stopped at gradient norm {norm:.3e} after {iters} iterations "
            f"(target {tol:.3e})",
            RuntimeWarning,
            stacklevel=2,
        )
    return OracleResult(w=w, grad_norm=norm, iterations=iters, converged=converged)


def theoretical_T(
    mu: float,
    beta: float,
    L: float,
    n: int,
    d: int,
    budget: PrivacyBudget,
    D: float,
) -> int:
    """Iteration count from the utility analysis, with Theta-constant 1.

    Strongly convex: T = ceil(((mu^2 + beta^2)/(mu beta)) * ln(arg));
    convex: T = ceil(arg^(1/3)). For pure epsilon-DP
    arg = mu^2 n^2 eps^2 D^2 / (L^2 d^2) (beta^2 replacing mu^2 when
    mu = 0); with delta > 0 the d^2 factor becomes d * ln(1/delta). The
    argument is clamped below at 1, so T >= 1 always.
    """
    for label, v in (("beta", beta), ("L", L), ("D", D)):
        if not (math.isfinite(v) and v > 0.0):
            raise ValueError(f"{label} must be a positive real, got {v!r}")
    if not (math.isfinite(mu) and mu >= 0.0):
        raise ValueError(f"mu must be a nonnegative real, got {mu!r}")
    if n < 1 or d < 1:
        raise ValueError("n and d must be positive integers")
    eps = budget.epsilon
    if budget.delta == 0.0:
        dim_factor = float(d) * float(d)
    else:
        dim_factor = float(d) * math.log(1.0 / budget.delta)
    if mu > 0.0:
        arg = (mu * mu * n * n * eps * eps * D * D) / (L * L * dim_factor)
        scale = (mu * mu + beta * beta) / (mu * beta)
        T = math.ceil(scale * math.log(max(arg, 1.0)))
    else:
        arg = (beta * beta * n * n * eps * eps * D * D) / (L * L * dim_factor)
        T = math.ceil(max(arg, 1.0) ** (1.0 / 3.0))
    return max(T, 1)


def sensitivity_bound(
    mu: float, beta: float, L: float, n: int, eta: float, T: int
) -> float:
    """Worst-case L2 distance between GD outputs on neighboring datasets.

    mu = 0: 3 L T eta / n. mu > 0: 5 L (1 + beta/mu) / (n beta), the
    T-independent strongly convex bound.
    """
    if mu > 0.0:
        return 5.0 * L * (1.0 + beta / mu) / (n * beta)
    return 3.0 * L * T * eta / n


def opgd(
    model: LossModel,
    S,
    budget: PrivacyBudget,
    D: float,
    rng: RngStream,
    T_override: int | None = None,
    sensitivity_override: float | None = None,
) -> PrivateSolution:
    """Output-perturbed full gradient descent.

    Runs T full-gradient steps from w0 = 0 with eta = 1/(mu + beta)
    (1/beta when mu = 0), then releases w_T + z where z is calibrated to
    the closed-form sensitivity bound. sensitivity_override is a test
    affordance (0 gives the exact zero-noise limit).
    """
    n, d = S.X.shape
    L, beta = certify_constants(model)
    mu = model.mu
    eta = _step_size_for(model)
    T = int(T_override) if T_override is not None else theoretical_T(
        mu, beta, L, n, d, budget, D
    )
    if T < 0:
        raise ValueError(f"T must be nonnegative, got {T}")
    t0 = time.process_time()
    w = np.zeros(d)
    for _ in range(T):
        w -= eta * full_gradient(model, w, S)
    if sensitivity_override is not None:
        sensitivity = float(sensitivity_override)
    else:
        sensitivity = sensitivity_bound(mu, beta, L, n, eta, T)
    spec = output_noise_spec(budget, sensitivity, d)
    z = draw_noise(spec, rng)
    w_priv = w + z
    wall = time.process_time() - t0
    return PrivateSolution(
        w_priv=w_priv,
        w_pre_noise=w,
        algorithm="opgd",
        noise_spec=spec,
        iterations_run=T,
        seed=rng,
        wall_time=wall,
        grad_evals=T * n,
        eta=eta,
        total_budget=budget,
    )


def round_distribution(eta_schedule: np.ndarray, beta: float) -> RoundDistribution:
    """Round-count distribution P(k+1) proportional to 2 eta_k - beta eta_k^2."""
    etas = np.asarray(eta_schedule, dtype=float)
    if etas.ndim != 1 or etas.size < 1:
        raise ValueError("eta_schedule must be a nonempty vector")
    if not (math.isfinite(beta) and beta > 0.0):
        raise ValueError(f"beta must be a positive real, got {beta!r}")
    if np.any(etas <= 0.0) or np.any(etas >= 2.0 / beta):
        raise ValueError("every step size must lie strictly inside (0, 2/beta)")
    weights = 2.0 * etas - beta * etas * etas
    return RoundDistribution(weights / weights.sum())


@njit(inline="always", cache=True)
def _expit_scalar(t):
    if t >= 0.0:
        return 1.0 / (1.0 + math.exp(-t))
    e = math.exp(t)
    return e / (1.0 + e)


@njit(inline="always", cache=True)
def _coef_scalar(code, param, m, y):
    # Tags match losses.KERNEL_*; callers never pass KERNEL_NONE here.
    if code == 0:  # logistic, printed argument 1 + y m
        return _expit_scalar(1.0 + y * m) * y
    if code == 1:  # logistic, conventional -y m argument
        return (_expit_scalar(y * m) - 1.0) * y
    if code == 2:  # huber: clipped residual
        u = m - y
        if u > param:
            return param
        if u < -param:
            return -param
        return u
    s = _expit_scalar(m)  # squared sigmoid link
    return 2.0 * (s - y) * s * (1.0 - s)


@njit(cache=True)
def _single_sample_kernel(X, y, w, eta, mu, sigma, steps, code, param, gen_idx, gen_noise):
    n, d = X.shape
    for _ in range(steps):
        i = int(gen_idx.integers(0, n))
        m = 0.0
        for j in range(d):
            m += X[i, j] * w[j]
        c = _coef_scalar(code, param, m, y[i])
        if sigma > 0.0:
            for j in range(d):
                w[j] -= eta * (c * X[i, j] + mu * w[j] + sigma * gen_noise.standard_normal())
        else:
            for j in range(d):
                w[j] -= eta * (c * X[i, j] + mu * w[j])
    return w


@njit(cache=True)
def _minibatch_kernel(X, y, w, eta, mu, sigma, steps, m, code, param, gen_idx, gen_noise):
    n, d = X.shape
    g = np.empty(d)
    inv = 1.0 / m
    for _ in range(steps):
        for j in range(d):
            g[j] = 0.0
        for _s in range(m):
            i = int(gen_idx.integers(0, n))
            mm = 0.0
            for j in range(d):
                mm += X[i, j] * w[j]
            c = _coef_scalar(code, param, mm, y[i])
            for j in range(d):
                g[j] += c * X[i, j]
        if sigma > 0.0:
            for j in range(d):
                w[j] -= eta * (g[j] * inv + mu * w[j] + sigma * gen_noise.standard_normal())
        else:
            for j in range(d):
                w[j] -= eta * (g[j] * inv + mu * w[j])
    return w


def _single_sample_fallback(model, X, y, w, eta, sigma, steps, gen_idx, gen_noise):
    # Plain-numpy path for losses without a compiled kernel tag. Consumes
    # the idx/noise substreams in the same bulk layout as the kernel.
    n, d = X.shape
    idx = gen_idx.integers(0, n, size=steps)
    Z = gen_noise.standard_normal((steps, d)) if sigma > 0.0 else None
    mu = model.mu
    m_buf = np.empty(1)
    y_buf = np.empty(1)
    for t in range(steps):
        i = int(idx[t])
        m_buf[0] = X[i] @ w
        y_buf[0] = y[i]
        c = float(model.base_coefs(m_buf, y_buf)[0])
        if Z is None:
            w -= eta * (c * X[i] + mu * w)
        else:
            w -= eta * (c * X[i] + mu * w + sigma * Z[t])
    return w


def _minibatch_fallback(model, X, y, w, eta, sigma, steps, m, gen_idx, gen_noise):
    n, d = X.shape
    idx = gen_idx.integers(0, n, size=steps * m).reshape(steps, m)
    Z = gen_noise.standard_normal((steps, d)) if sigma > 0.0 else None
    mu = model.mu
    for t in range(steps):
        rows = X[idx[t]]
        coefs = model.base_coefs(rows @ w, y[idx[t]])
        g = (coefs @ rows) / m
        if Z is None:
            w -= eta * (g + mu * w)
        else:
            w -= eta * (g + mu * w + sigma * Z[t])
    return w


def rrpsgd(
    model: LossModel,
    S,
    budget: PrivacyBudget,
    rng: RngStream,
    sigma_override: float | None = None,
    rounds_override: int | None = None,
) -> PrivateSolution:
    """Random-round private SGD.

    Draws the round count R uniformly from {1, ..., n^2} (the constant
    step schedule makes the round distribution exactly uniform), then runs
    R single-sample steps w <- w - eta (grad f(w, xi) + z_t) with fresh
    per-coordinate Gaussian noise of std sigma_z each step. eta is the
    constant min(1/beta, D_F / (sigma n)) with D_F = sqrt(2 F(w0, S)/beta)
    and sigma^2 = 4 L^2 + d sigma_z^2. Requires delta > 0.

    sigma_override replaces sigma_z in both the step size and the injected
    noise (0 gives the exact noise-free reduction); rounds_override fixes
    R without consuming the round substream. Both are test affordances.
    """
    if budget.delta == 0.0:
        raise ValueError("random-round private SGD requires delta > 0")
    n, d = S.X.shape
    L, beta = certify_constants(model)
    if sigma_override is not None:
        if sigma_override < 0.0:
            raise ValueError("sigma_override must be nonnegative")
        sigma_z = float(sigma_override)
    else:
        sigma_z = rrpsgd_noise_sigma(L, n, budget)
    t0 = time.process_time()
    w0 = np.zeros(d)
    f0 = empirical_risk(model, w0, S)
    d_f = math.sqrt(2.0 * max(f0, 0.0) / beta)
    sigma_total = math.sqrt(4.0 * L * L + d * sigma_z * sigma_z)
    eta = min(1.0 / beta, d_f / (sigma_total * n))
    n_sq = n * n
    if rounds_override is not None:
        if not rounds_override >= 1:
            raise ValueError(f"rounds_override must be >= 1, got {rounds_override!r}")
        R = int(rounds_override)
    else:
        R = 1 + int(rng.child("round").generator().integers(0, n_sq))
    gen_idx = rng.child("idx").generator()
    gen_noise = rng.child("noise").generator()
    w = w0.copy()
    if model.kernel_code != KERNEL_NONE:
        w = _single_sample_kernel(
            S.X, S.y, w, eta, model.mu, sigma_z, R,
            model.kernel_code, model.kernel_param, gen_idx, gen_noise,
        )
    else:
        w = _single_sample_fallback(model, S.X, S.y, w, eta, sigma_z, R, gen_idx, gen_noise)
    wall = time.process_time() - t0
    return PrivateSolution(
        w_priv=w,
        w_pre_noise=w,
        algorithm="rrpsgd",
        noise_spec=sigma_z,
        iterations_run=R,
        seed=rng,
        wall_time=wall,
        grad_evals=R,
        eta=eta,
        total_budget=budget,
    )


def baseline_private_sgd(
    model: LossModel,
    S,
    budget: PrivacyBudget,
    batch_size: int,
    D: float,
    rng: RngStream,
    T_override: int | None = None,
    sigma_override: float | None = None,
) -> PrivateSolution:
    """Mini-batch private SGD comparator.

    Runs T = ceil(n^2 / m) steps; each step averages the gradient over m
    uniformly sampled examples and perturbs it with per-coordinate
    Gaussian noise of the same std sigma_z the random-round algorithm
    uses. The constant step size is D / (sigma sqrt(T)) with
    sigma^2 = 4 L^2 + d sigma_z^2. Privacy is order-matching rather than
    exactly calibrated: the per-step budget is the subsampling
    amplification (ratio m/n) of the batch mechanism's Lemma-style budget,
    composed over T steps; both are recorded on the solution.
    """
    if budget.delta == 0.0:
        raise ValueError("the mini-batch baseline requires delta > 0")
    n, d = S.X.shape
    m = int(batch_size)
    if not (1 <= m <= n):
        raise ValueError(f"batch size must lie in [1, n], got {m}")
    if not (math.isfinite(D) and D > 0.0):
        raise ValueError(f"D must be a positive real, got {D!r}")
    L, beta = certify_constants(model)
    if sigma_override is not None:
        if sigma_override < 0.0:
            raise ValueError("sigma_override must be nonnegative")
        sigma_z = float(sigma_override)
    else:
        sigma_z = rrpsgd_noise_sigma(L, n, budget)
    T = int(T_override) if T_override is not None else math.ceil(n * n / m)
    if T < 1:
        raise ValueError(f"T must be >= 1, got {T}")
    sigma_total = math.sqrt(4.0 * L * L + d * sigma_z * sigma_z)
    eta = D / (sigma_total * math.sqrt(T))
    per_step = None
    total = None
    if sigma_z > 0.0:
        # Accounting for the recorded budgets: Gaussian mechanism on the
        # averaged batch gradient (sensitivity 2L/m), amplified by the
        # sampling ratio, strong-composed over T steps.
        alpha = m / n
        delta_step = budget.delta / (2.0 * T * alpha)
        eps_step = (
            math.sqrt(2.0 * math.log(1.25 / delta_step)) * (2.0 * L / m) / sigma_z
        )
        per_step = amplified_budget(PrivacyBudget(eps_step, delta_step), alpha)
        total = composed_budget(per_step, T, budget.delta / 2.0)
    t0 = time.process_time()
    gen_idx = rng.child("idx").generator()
    gen_noise = rng.child("noise").generator()
    w = np.zeros(d)
    if model.kernel_code != KERNEL_NONE:
        w = _minibatch_kernel(
            S.X, S.y, w, eta, model.mu, sigma_z, T, m,
            model.kernel_code, model.kernel_param, gen_idx, gen_noise,
        )
    else:
        w = _minibatch_fallback(model, S.X, S.y, w, eta, sigma_z, T, m, gen_idx, gen_noise)
    wall = time.process_time() - t0
    return PrivateSolution(
        w_priv=w,
        w_pre_noise=w,
        algorithm="baseline",
        noise_spec=sigma_z,
        iterations_run=T,
        seed=rng,
        wall_time=wall,
        grad_evals=T * m,
        eta=eta,
        per_step_budget=per_step,
        total_budget=total,
    )
