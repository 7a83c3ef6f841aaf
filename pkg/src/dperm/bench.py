"""Benchmark harness.

Sweeps (dataset, mu, epsilon, method) cells, averages excess empirical
risk and optimizer CPU time over repeated trials, and renders the result
as CSV or an aligned text table. Every trial draws from an RngStream
derived from (seed, cell, trial index), so error statistics are
bit-identical across reruns; runtimes are measured, never asserted on.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, replace

import numpy as np

from .data import (
    CLASSIFICATION,
    Dataset,
    LOGISTIC_SEPARABLE,
    RIDGE_REGRESSION,
    SIGMOID_NONCONVEX,
    SyntheticSpec,
    generate,
    load_csv,
    standardize,
)
from .losses import (
    HuberLoss,
    LogisticLoss,
    LossModel,
    SquaredSigmoidLoss,
    certify_constants,
    empirical_risk,
    full_gradient,
)
from .mechanisms import PrivacyBudget, RngStream
from .optimizers import (
    GdConfig,
    baseline_private_sgd,
    gd,
    opgd,
    rrpsgd,
    solve_oracle,
)

__all__ = [
    "ExperimentConfig",
    "ExperimentRecord",
    "parse_config",
    "resolve_dataset",
    "run_experiment",
    "emit_table",
    "read_records",
    "error_columns",
    "scaling_study",
    "fit_loglog_slope",
]

METHODS = ("opgd", "rrpsgd", "baseline")
CSV_HEADER = "dataset,mu,epsilon,delta,method,mean_error,std_error,mean_runtime_s,trials"

# Smallest admissible domain scale; guards theoretical_T against a zero
# oracle norm on degenerate instances.
_D_FLOOR = 1e-2
_BALL_SLACK = 1.0 + 1e-9
_DEFAULT_BATCH = 50


@dataclass(frozen=True)
class ExperimentConfig:
    """One sweep: datasets x mus x epsilons x methods, `trials` runs each."""

    datasets: tuple[str, ...]
    epsilons: tuple[float, ...]
    mus: tuple[float, ...] = (0.0,)
    delta: float = 1e-3
    methods: tuple[str, ...] = METHODS
    trials: int = 5
    seed: int = 0
    oracle_tol: float = 1e-8
    batch_size: int = _DEFAULT_BATCH

    def __post_init__(self) -> None:
        if not self.datasets:
            raise ValueError("at least one dataset is required")
        if not self.epsilons:
            raise ValueError("at least one epsilon is required")
        if any(e <= 0.0 for e in self.epsilons):
            raise ValueError("epsilons must be positive")
        if any(m < 0.0 for m in self.mus):
            raise ValueError("mus must be nonnegative")
        if not (0.0 < self.delta < 1.0):
            raise ValueError(f"delta must lie in (0, 1), got {self.delta!r}")
        bad = [m for m in self.methods if m not in METHODS]
        if bad:
            raise ValueError(f"unknown methods {bad}; choose from {METHODS}")
        if self.trials < 1:
            raise ValueError("trials must be >= 1")
        if self.oracle_tol <= 0.0:
            raise ValueError("oracle_tol must be positive")
        if self.batch_size < 1:
            raise ValueError("batch_size must be >= 1")


@dataclass(frozen=True)
class ExperimentRecord:
    """Aggregated result of one (dataset, mu, epsilon, method) cell.

    mean_error averages F(w_priv, S) - F(w_hat, S) over trials. status is
    "ok", or a diagnostic tag when the cell failed or violated a soft
    invariant (recorded, never fatal). grad_norm_quantiles carries
    (p50, p90, p99) of ||grad F(w_priv)||^2 on non-convex cells.
    """

    dataset: str
    mu: float
    epsilon: float
    delta: float
    method: str
    mean_error: float
    std_error: float
    mean_runtime_s: float
    trials: int
    grad_norm_quantiles: tuple[float, float, float] | None = None
    grad_evals: int = 0
    status: str = "ok"


_CONFIG_DEFAULTS = {
    "mus": "0.0",
    "delta": "0.001",
    "methods": ",".join(METHODS),
    "trials": "5",
    "seed": "0",
    "oracle_tol": "1e-8",
    "batch_size": str(_DEFAULT_BATCH),
}


def parse_config(text: str) -> ExperimentConfig:
    """Parse flat `key = value` config text (# starts a comment)."""
    values: dict[str, str] = {}
    lines: dict[str, int] = {}
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ValueError(f"line {lineno}: expected `key = value`, got {raw!r}")
        key, _, val = line.partition("=")
        key = key.strip()
        val = val.strip()
        if key not in ("datasets", "epsilons", *_CONFIG_DEFAULTS):
            raise ValueError(f"line {lineno}: unknown key {key!r}")
        if not val:
            raise ValueError(f"line {lineno}: empty value for {key!r}")
        values[key] = val
        lines[key] = lineno

    def require(key: str) -> str:
        if key not in values:
            raise ValueError(f"missing required key {key!r}")
        return values[key]

    def get(key: str) -> str:
        return values.get(key, _CONFIG_DEFAULTS[key])

    def floats(key: str, raw: str) -> tuple[float, ...]:
        try:
            return tuple(float(tok) for tok in raw.split(","))
        except ValueError:
            raise ValueError(
                f"line {lines.get(key, '?')}: {key} must be comma-separated reals"
            ) from None

    def integer(key: str, raw: str) -> int:
        try:
            return int(raw)
        except ValueError:
            raise ValueError(
                f"line {lines.get(key, '?')}: {key} must be an integer"
            ) from None

    return ExperimentConfig(
        datasets=tuple(tok.strip() for tok in require("datasets").split(",")),
        epsilons=floats("epsilons", require("epsilons")),
        mus=floats("mus", get("mus")),
        delta=float(get("delta")),
        methods=tuple(tok.strip() for tok in get("methods").split(",")),
        trials=integer("trials", get("trials")),
        seed=integer("seed", get("seed")),
        oracle_tol=float(get("oracle_tol")),
        batch_size=integer("batch_size", get("batch_size")),
    )


def resolve_dataset(token: str) -> tuple[Dataset, str]:
    """Load a dataset token; returns (dataset, instance kind).

    Tokens: `synthetic:<kind>:<n>:<d>[:<noise>]` with kind in
    {ridge, logistic, sigmoid}, or `csv:<path>:<label>:<task>[:col1|col2]`
    for a CSV file with optional categorical columns. CSV data is
    standardized so the norm bound is 1.
    """
    parts = token.split(":")
    if parts[0] == "synthetic":
        if len(parts) not in (4, 5):
            raise ValueError(
                f"bad synthetic token {token!r}: expected synthetic:<kind>:<n>:<d>[:<noise>]"
            )
        kind = parts[1]
        if kind not in (RIDGE_REGRESSION, LOGISTIC_SEPARABLE, SIGMOID_NONCONVEX):
            raise ValueError(f"unknown synthetic kind {kind!r}")
        n, d = int(parts[2]), int(parts[3])
        noise = float(parts[4]) if len(parts) == 5 else 0.1
        spec = SyntheticSpec(kind=kind, n=n, d=d, noise_level=noise)
        return generate(spec), kind
    if parts[0] == "csv":
        if len(parts) not in (4, 5):
            raise ValueError(
                f"bad csv token {token!r}: expected csv:<path>:<label>:<task>[:col1|col2]"
            )
        path, label, task = parts[1], parts[2], parts[3]
        categorical = tuple(parts[4].split("|")) if len(parts) == 5 else ()
        S = standardize(load_csv(path, label, task, categorical=categorical))
        return S, f"csv-{task}"
    raise ValueError(f"unknown dataset token {token!r}: expected synthetic:... or csv:...")


def _loss_for(kind: str, mu: float, B: float, domain_radius: float) -> LossModel:
    if kind in (LOGISTIC_SEPARABLE, "csv-classification"):
        return LogisticLoss(mu=mu, B=B, domain_radius=domain_radius)
    if kind in (RIDGE_REGRESSION, "csv-regression"):
        return HuberLoss(mu=mu, B=B, domain_radius=domain_radius)
    if kind == SIGMOID_NONCONVEX:
        return SquaredSigmoidLoss(mu=mu, B=B, domain_radius=domain_radius)
    raise ValueError(f"no loss mapping for instance kind {kind!r}")


def _failed_record(cfg, dataset_name, mu, eps, method, msg) -> ExperimentRecord:
    return ExperimentRecord(
        dataset=dataset_name,
        mu=mu,
        epsilon=eps,
        delta=cfg.delta,
        method=method,
        mean_error=math.nan,
        std_error=math.nan,
        mean_runtime_s=math.nan,
        trials=cfg.trials,
        status=f"error: {msg}",
    )


def _run_cell(
    cfg: ExperimentConfig,
    S: Dataset,
    model: LossModel,
    f_hat: float,
    D: float,
    eps: float,
    method: str,
    nonconvex: bool,
) -> ExperimentRecord:
    budget = PrivacyBudget(eps, cfg.delta)
    L, _ = certify_constants(model)
    root = RngStream(seed=cfg.seed)
    errors = np.empty(cfg.trials)
    runtimes = np.empty(cfg.trials)
    grad_sq = np.empty(cfg.trials) if nonconvex else None
    grad_evals = 0
    status = "ok"
    for k in range(cfg.trials):
        label = f"{S.name}|mu={model.mu!r}|eps={eps!r}|{method}|trial={k}"
        rng = root.child(label)
        if method == "opgd":
            sol = opgd(model, S, budget, D, rng)
        elif method == "rrpsgd":
            sol = rrpsgd(model, S, budget, rng)
        else:
            sol = baseline_private_sgd(model, S, budget, cfg.batch_size, D, rng)
        errors[k] = empirical_risk(model, sol.w_priv, S) - f_hat
        runtimes[k] = sol.wall_time
        grad_evals = sol.grad_evals
        if grad_sq is not None:
            g = full_gradient(model, sol.w_priv, S)
            grad_sq[k] = float(g @ g)
        if (
            status == "ok"
            and model.mu > 0.0
            and float(np.linalg.norm(sol.w_priv)) > 2.0 * D * _BALL_SLACK
        ):
            # Lipschitz certificate only covers the 2D ball; flag escapes.
            status = "ball_exit"
    mean_error = float(np.mean(errors))
    if status == "ok" and not nonconvex and mean_error < -cfg.oracle_tol * L:
        status = "sub_oracle"
    quantiles = None
    if grad_sq is not None:
        p50, p90, p99 = np.quantile(grad_sq, (0.5, 0.9, 0.99))
        quantiles = (float(p50), float(p90), float(p99))
    return ExperimentRecord(
        dataset=S.name,
        mu=model.mu,
        epsilon=eps,
        delta=cfg.delta,
        method=method,
        mean_error=mean_error,
        std_error=float(np.std(errors)),
        mean_runtime_s=float(np.mean(runtimes)),
        trials=cfg.trials,
        grad_norm_quantiles=quantiles,
        grad_evals=grad_evals,
        status=status,
    )


def run_experiment(cfg: ExperimentConfig) -> list[ExperimentRecord]:
    """Run the full sweep; per-cell failures become records, not raises."""
    records: list[ExperimentRecord] = []
    for token in cfg.datasets:
        try:
            S, kind = resolve_dataset(token)
        except Exception as exc:  # noqa: BLE001 - recorded per contract
            for mu in cfg.mus:
                for eps in cfg.epsilons:
                    for method in cfg.methods:
                        records.append(_failed_record(cfg, token, mu, eps, method, exc))
            continue
        nonconvex = kind == SIGMOID_NONCONVEX
        for mu in cfg.mus:
            try:
                probe = _loss_for(kind, mu, S.B, 1.0)
                oracle = solve_oracle(probe, S, tol=cfg.oracle_tol)
                # The objective is radius-independent, so the oracle stands
                # after the Lipschitz ball is widened to cover trajectories.
                D = max(2.0 * float(np.linalg.norm(oracle.w)), _D_FLOOR)
                model = _loss_for(kind, mu, S.B, 2.0 * D)
                f_hat = empirical_risk(model, oracle.w, S)
            except Exception as exc:  # noqa: BLE001
                for eps in cfg.epsilons:
                    for method in cfg.methods:
                        records.append(_failed_record(cfg, S.name, mu, eps, method, exc))
                continue
            for eps in cfg.epsilons:
                for method in cfg.methods:
                    try:
                        records.append(
                            _run_cell(cfg, S, model, f_hat, D, eps, method, nonconvex)
                        )
                    except Exception as exc:  # noqa: BLE001
                        records.append(_failed_record(cfg, S.name, mu, eps, method, exc))
    return records


def _fmt(v: float) -> str:
    if isinstance(v, float) and math.isnan(v):
        return "nan"
    return repr(float(v))


def emit_table(
    records: list[ExperimentRecord],
    format: str = "csv",
    include_runtime: bool = True,
) -> str:
    """Render records as CSV (stable schema) or an aligned text grid."""
    if not records:
        raise ValueError("no records to emit")
    if format == "csv":
        rows = [CSV_HEADER]
        for r in records:
            rows.append(
                ",".join(
                    (
                        r.dataset,
                        _fmt(r.mu),
                        _fmt(r.epsilon),
                        _fmt(r.delta),
                        r.method,
                        _fmt(r.mean_error),
                        _fmt(r.std_error),
                        _fmt(r.mean_runtime_s),
                        str(r.trials),
                    )
                )
            )
        return "\n".join(rows) + "\n"
    if format != "text":
        raise ValueError(f"unknown format {format!r}")
    return _emit_text(records, include_runtime)


def _emit_text(records: list[ExperimentRecord], include_runtime: bool) -> str:
    methods = list(dict.fromkeys(r.method for r in records))
    by_row: dict[tuple[str, float, float], dict[str, ExperimentRecord]] = {}
    for r in records:
        by_row.setdefault((r.dataset, r.mu, r.epsilon), {})[r.method] = r

    def pick_winner(row: dict[str, ExperimentRecord], metric) -> tuple[str | None, bool]:
        finite = {m: metric(r) for m, r in row.items() if math.isfinite(metric(r))}
        if not finite:
            return None, False
        best = min(finite.values())
        winners = [m for m in methods if finite.get(m) == best]
        tie = len(winners) > 1
        # Ties resolve toward output perturbation; a "=" marks them.
        if tie and "opgd" in winners:
            return "opgd", True
        return winners[0], tie

    header = ["dataset", "mu", "eps"]
    for m in methods:
        header.append(f"err({m})")
        if include_runtime:
            header.append(f"time({m})")
    table = [header]
    for (dataset, mu, eps) in sorted(by_row, key=lambda k: (k[0], k[1], k[2])):
        row = by_row[(dataset, mu, eps)]
        err_w, err_tie = pick_winner(row, lambda r: r.mean_error)
        time_w, time_tie = pick_winner(row, lambda r: r.mean_runtime_s)
        cells = [dataset, f"{mu:g}", f"{eps:g}"]
        for m in methods:
            r = row.get(m)
            if r is None:
                cells.append("-")
                if include_runtime:
                    cells.append("-")
                continue
            mark = ("*" + ("=" if err_tie else "")) if m == err_w else ""
            cells.append(f"{r.mean_error:.6g}{mark}")
            if include_runtime:
                tmark = ("*" + ("=" if time_tie else "")) if m == time_w else ""
                cells.append(f"{r.mean_runtime_s:.4g}{tmark}")
        table.append(cells)
    widths = [max(len(row[i]) for row in table) for i in range(len(header))]
    lines = []
    for row in table:
        lines.append("  ".join(cell.ljust(widths[i]) for i, cell in enumerate(row)).rstrip())
    return "\n".join(lines) + "\n"


def read_records(csv_text: str) -> list[ExperimentRecord]:
    """Parse emit_table CSV output back into records (schema fields only)."""
    lines = [ln for ln in csv_text.splitlines() if ln]
    if not lines or lines[0] != CSV_HEADER:
        raise ValueError("unrecognized results CSV header")
    out = []
    for ln in lines[1:]:
        parts = ln.split(",")
        if len(parts) != 9:
            raise ValueError(f"bad results row: {ln!r}")
        out.append(
            ExperimentRecord(
                dataset=parts[0],
                mu=float(parts[1]),
                epsilon=float(parts[2]),
                delta=float(parts[3]),
                method=parts[4],
                mean_error=float(parts[5]),
                std_error=float(parts[6]),
                mean_runtime_s=float(parts[7]),
                trials=int(parts[8]),
            )
        )
    return out


def error_columns(csv_text: str) -> str:
    """The results CSV minus the runtime column; the determinism surface."""
    out = []
    for ln in csv_text.splitlines():
        if not ln:
            continue
        parts = ln.split(",")
        if len(parts) != 9:
            raise ValueError(f"bad results row: {ln!r}")
        out.append(",".join(parts[:7] + parts[8:]))
    return "\n".join(out) + "\n"


def _mean_error_for(
    method: str,
    model: LossModel,
    S: Dataset,
    budget: PrivacyBudget,
    D: float,
    f_hat: float,
    trials: int,
    root: RngStream,
    gd_T: int,
    batch_size: int,
) -> float:
    errors = np.empty(trials)
    for k in range(trials):
        rng = root.child(f"{S.name}|{method}|eps={budget.epsilon!r}|trial={k}")
        if method == "gd":
            _, beta = certify_constants(model)
            eta = 1.0 / (model.mu + beta) if model.mu > 0.0 else 1.0 / beta
            w = gd(model, S, GdConfig(eta=eta, T=gd_T, w0=np.zeros(S.d)))
        elif method == "opgd":
            w = opgd(model, S, budget, D, rng).w_priv
        elif method == "rrpsgd":
            w = rrpsgd(model, S, budget, rng).w_priv
        elif method == "baseline":
            w = baseline_private_sgd(model, S, budget, batch_size, D, rng).w_priv
        else:
            raise ValueError(f"unknown method {method!r}")
        errors[k] = empirical_risk(model, w, S) - f_hat
    return float(np.mean(errors))


def scaling_study(
    base_spec: SyntheticSpec,
    axis: str,
    values: list,
    method: str,
    trials: int,
    mu: float = 0.1,
    epsilon: float = 1.0,
    delta: float = 0.0,
    oracle_tol: float = 1e-10,
    seed: int = 0,
    gd_T: int = 100,
    batch_size: int = _DEFAULT_BATCH,
) -> list[tuple[float, float]]:
    """Mean error along one axis (n, epsilon, or d), all else held fixed.

    The gd method runs a fixed iteration count so its error cannot depend
    on epsilon; it is the zero-noise control. Fit the log-log slope of the
    returned points with fit_loglog_slope.
    """
    if axis not in ("n", "epsilon", "d"):
        raise ValueError(f"axis must be n, epsilon, or d, got {axis!r}")
    if not values:
        raise ValueError("values must be nonempty")
    points: list[tuple[float, float]] = []
    for v in values:
        spec = base_spec
        eps = epsilon
        if axis == "n":
            spec = replace(base_spec, n=int(v))
        elif axis == "d":
            spec = replace(base_spec, d=int(v))
        else:
            eps = float(v)
        S = generate(spec)
        probe = _loss_for(spec.kind, mu, S.B, 1.0)
        oracle = solve_oracle(probe, S, tol=oracle_tol)
        D = max(2.0 * float(np.linalg.norm(oracle.w)), _D_FLOOR)
        model = _loss_for(spec.kind, mu, S.B, 2.0 * D)
        f_hat = empirical_risk(model, oracle.w, S)
        budget = PrivacyBudget(eps, delta)
        root = RngStream(seed=seed)
        mean_err = _mean_error_for(
            method, model, S, budget, D, f_hat, trials, root, gd_T, batch_size
        )
        points.append((float(v), mean_err))
    return points


def fit_loglog_slope(points: list[tuple[float, float]]) -> float:
    """Least-squares slope of log(mean_error) against log(value)."""
    xs = np.log([p[0] for p in points])
    ys = np.log([max(p[1], 1e-300) for p in points])
    slope, _ = np.polyfit(xs, ys, 1)
    return float(slope)
