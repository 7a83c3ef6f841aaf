"""Differentially private empirical risk minimization.

Two private training algorithms over linear models with certified loss
constants: output-perturbed full gradient descent and random-round
private SGD, plus a mini-batch private SGD comparator, the noise
mechanisms and privacy accounting behind them, an empirical stability
verification harness, and a benchmark sweep harness.
"""

from .data import Dataset, SyntheticSpec, generate, load_csv, split, standardize
from .estimators import PrivateERMClassifier, PrivateERMRegressor
from .losses import (
    Example,
    HuberLoss,
    LogisticLoss,
    LossModel,
    SquaredSigmoidLoss,
    certify_constants,
    empirical_risk,
    full_gradient,
    loss_grad,
    loss_value,
)
from .mechanisms import (
    NoiseSpec,
    PrivacyBudget,
    RngStream,
    amplified_budget,
    composed_budget,
    draw_noise,
    lemma1_gaussian_sigma,
    output_noise_spec,
    rrpsgd_noise_sigma,
    sample_gamma_laplace,
    sample_gaussian,
)
from .optimizers import (
    GdConfig,
    OracleResult,
    PrivateSolution,
    baseline_private_sgd,
    gd,
    opgd,
    round_distribution,
    rrpsgd,
    sensitivity_bound,
    solve_oracle,
    theoretical_T,
)
from .sensitivity import (
    NeighborPair,
    StabilityTrace,
    make_neighbor,
    recursion_check,
    trace_stability,
)

__version__ = "0.1.0"

__all__ = [
    "__version__",
    "Dataset",
    "SyntheticSpec",
    "generate",
    "load_csv",
    "split",
    "standardize",
    "PrivateERMClassifier",
    "PrivateERMRegressor",
    "Example",
    "HuberLoss",
    "LogisticLoss",
    "LossModel",
    "SquaredSigmoidLoss",
    "certify_constants",
    "empirical_risk",
    "full_gradient",
    "loss_grad",
    "loss_value",
    "NoiseSpec",
    "PrivacyBudget",
    "RngStream",
    "amplified_budget",
    "composed_budget",
    "draw_noise",
    "lemma1_gaussian_sigma",
    "output_noise_spec",
    "rrpsgd_noise_sigma",
    "sample_gamma_laplace",
    "sample_gaussian",
    "GdConfig",
    "OracleResult",
    "PrivateSolution",
    "baseline_private_sgd",
    "gd",
    "opgd",
    "round_distribution",
    "rrpsgd",
    "sensitivity_bound",
    "solve_oracle",
    "theoretical_T",
    "NeighborPair",
    "StabilityTrace",
    "make_neighbor",
    "recursion_check",
    "trace_stability",
]
