"""Command-line entry point.

Subcommands: bench (experiment sweep), train (one private model),
sensitivity-check (empirical stability verification), mechanism-check
(Monte Carlo noise-moment verification).

Exit codes: 0 success, 1 usage or config error, 2 partial bench failure,
3 property falsified. The environment variable DP_ERM_SEED supplies the
default seed; --seed overrides it.
"""

from __future__ import annotations

import argparse
import os
import sys
from dataclasses import replace
from pathlib import Path

import numpy as np

from .bench import emit_table, error_columns, parse_config, run_experiment
from .data import CLASSIFICATION, Dataset, generate, load_csv, standardize, SyntheticSpec
from .data import LOGISTIC_SEPARABLE, RIDGE_REGRESSION, SIGMOID_NONCONVEX
from .losses import HuberLoss, LogisticLoss, certify_constants
from .mechanisms import (
    GAMMA_LAPLACE,
    GAUSSIAN,
    NoiseSpec,
    PrivacyBudget,
    RngStream,
    sample_gamma_laplace_bulk,
    sample_gaussian_bulk,
)
from .optimizers import (
    GdConfig,
    baseline_private_sgd,
    opgd,
    rrpsgd,
    solve_oracle,
)
from .sensitivity import recursion_check, sweep_pairs

__all__ = ["main", "write_model", "read_model"]

_SENSITIVITY_HEADER = "n,mu,eta,T,max_delta,bound,ok"


class _Parser(argparse.ArgumentParser):
    # Usage errors must exit 1, not argparse's default 2.
    def error(self, message: str):
        self.exit(1, f"{self.prog}: error: {message}\n")


def _default_seed() -> int:
    raw = os.environ.get("DP_ERM_SEED", "0")
    try:
        return int(raw)
    except ValueError:
        raise ValueError(f"DP_ERM_SEED must be an integer, got {raw!r}") from None


def _build_parser() -> _Parser:
    parser = _Parser(prog="dperm", description=__doc__.splitlines()[0])
    sub = parser.add_subparsers(dest="subcommand", required=True, parser_class=_Parser)

    p_bench = sub.add_parser("bench", help="run an experiment sweep from a config file")
    p_bench.add_argument("config", help="flat key=value config file")
    p_bench.add_argument("--out", default=".", help="output directory")
    p_bench.add_argument("--seed", type=int, default=None, help="override config seed")
    p_bench.add_argument("--trials", type=int, default=None, help="override config trials")
    p_bench.add_argument(
        "--no-runtime",
        action="store_true",
        help="omit runtime columns so output bytes are seed-deterministic",
    )

    p_train = sub.add_parser("train", help="train one private model")
    src = p_train.add_mutually_exclusive_group(required=True)
    src.add_argument("--csv", help="CSV dataset path")
    src.add_argument(
        "--synthetic",
        help="synthetic instance <kind>:<n>:<d>[:<noise>], kind in "
        f"{{{RIDGE_REGRESSION},{LOGISTIC_SEPARABLE},{SIGMOID_NONCONVEX}}}",
    )
    p_train.add_argument("--label", default="label", help="CSV label column name")
    p_train.add_argument(
        "--task",
        choices=("classification", "regression"),
        default="classification",
        help="CSV task kind",
    )
    p_train.add_argument(
        "--categorical", default="", help="comma-separated categorical CSV columns"
    )
    p_train.add_argument(
        "--method", required=True, choices=("opgd", "rrpsgd", "baseline")
    )
    p_train.add_argument("--epsilon", type=float, required=True)
    p_train.add_argument("--delta", type=float, default=0.0)
    p_train.add_argument("--mu", type=float, default=0.0)
    p_train.add_argument(
        "--loss", choices=("logistic", "huber"), default=None,
        help="defaults to logistic for classification, huber for regression",
    )
    p_train.add_argument("--huber-threshold", type=float, default=1.0)
    p_train.add_argument("--batch-size", type=int, default=50)
    p_train.add_argument("--out", required=True, help="model CSV output path")
    p_train.add_argument("--seed", type=int, default=None)

    p_sens = sub.add_parser(
        "sensitivity-check", help="trace GD stability on random neighbor pairs"
    )
    p_sens.add_argument("--pairs", type=int, default=100)
    p_sens.add_argument("--n", type=int, default=100)
    p_sens.add_argument("--d", type=int, default=5)
    p_sens.add_argument("--mu", type=float, default=0.0)
    p_sens.add_argument("--T", type=int, default=50)
    p_sens.add_argument("--seed", type=int, default=None)
    p_sens.add_argument("--out", default=None, help="CSV output path (default stdout)")

    p_mech = sub.add_parser(
        "mechanism-check", help="Monte Carlo second-moment check of both samplers"
    )
    p_mech.add_argument("--samples", type=int, default=1_000_000)
    p_mech.add_argument("--d", type=int, default=2)
    p_mech.add_argument("--sigma", type=float, default=1.0)
    p_mech.add_argument("--rel-tol", type=float, default=0.02)
    p_mech.add_argument("--seed", type=int, default=None)
    return parser


def write_model(path, w: np.ndarray, meta: dict[str, str]) -> None:
    """Write weights as one-column CSV prefixed with # metadata comments."""
    lines = [f"# {k} = {v}" for k, v in meta.items()]
    lines.extend(repr(float(v)) for v in w)
    Path(path).write_text("\n".join(lines) + "\n", encoding="utf-8")


def read_model(path) -> tuple[np.ndarray, dict[str, str]]:
    """Parse a model file back into (weights, metadata dict)."""
    meta: dict[str, str] = {}
    values: list[float] = []
    for raw in Path(path).read_text(encoding="utf-8").splitlines():
        line = raw.strip()
        if not line:
            continue
        if line.startswith("#"):
            key, _, val = line.lstrip("#").partition("=")
            meta[key.strip()] = val.strip()
        else:
            values.append(float(line))
    return np.array(values), meta


def _cmd_bench(args) -> int:
    try:
        text = Path(args.config).read_text(encoding="utf-8")
    except OSError as exc:
        print(f"dperm bench: cannot read config: {exc}", file=sys.stderr)
        return 1
    try:
        cfg = parse_config(text)
        if args.seed is not None:
            cfg = replace(cfg, seed=args.seed)
        if args.trials is not None:
            cfg = replace(cfg, trials=args.trials)
    except ValueError as exc:
        print(f"dperm bench: config error: {exc}", file=sys.stderr)
        return 1
    records = run_experiment(cfg)
    csv_text = emit_table(records, "csv")
    if args.no_runtime:
        csv_text = error_columns(csv_text)
    text_table = emit_table(records, "text", include_runtime=not args.no_runtime)
    out_dir = Path(args.out)
    out_dir.mkdir(parents=True, exist_ok=True)
    (out_dir / "results.csv").write_text(csv_text, encoding="utf-8")
    (out_dir / "results.txt").write_text(text_table, encoding="utf-8")
    print(text_table, end="")
    failed = [r for r in records if r.status.startswith("error")]
    if failed:
        print(f"dperm bench: {len(failed)} cell(s) failed", file=sys.stderr)
        return 2
    return 0


def _train_dataset(args) -> tuple[Dataset, str]:
    if args.csv is not None:
        categorical = tuple(c for c in args.categorical.split(",") if c)
        S = standardize(load_csv(args.csv, args.label, args.task, categorical=categorical))
        return S, args.task
    parts = args.synthetic.split(":")
    if len(parts) not in (3, 4):
        raise ValueError(
            f"bad synthetic instance {args.synthetic!r}: expected <kind>:<n>:<d>[:<noise>]"
        )
    kind = parts[0]
    spec = SyntheticSpec(
        kind=kind,
        n=int(parts[1]),
        d=int(parts[2]),
        noise_level=float(parts[3]) if len(parts) == 4 else 0.1,
    )
    S = generate(spec)
    task = "classification" if S.task == CLASSIFICATION else "regression"
    return S, task


def _cmd_train(args) -> int:
    seed = args.seed if args.seed is not None else _default_seed()
    if args.method == "rrpsgd" and args.delta == 0.0:
        print(
            "dperm train: rrpsgd requires delta > 0 (its per-step Gaussian "
            "noise has no pure-epsilon calibration)",
            file=sys.stderr,
        )
        return 1
    if args.method == "baseline" and args.delta == 0.0:
        print("dperm train: baseline requires delta > 0", file=sys.stderr)
        return 1
    try:
        S, task = _train_dataset(args)
        loss_name = args.loss or ("logistic" if task == "classification" else "huber")
        budget = PrivacyBudget(args.epsilon, args.delta)

        def build(radius: float):
            if loss_name == "logistic":
                return LogisticLoss(mu=args.mu, B=S.B, domain_radius=radius)
            return HuberLoss(
                threshold=args.huber_threshold, mu=args.mu, B=S.B, domain_radius=radius
            )

        oracle = solve_oracle(build(1.0), S, tol=1e-8)
        D = max(2.0 * float(np.linalg.norm(oracle.w)), 1e-2)
        model = build(2.0 * D)
        rng = RngStream(seed=seed).child(f"train/{args.method}")
        if args.method == "opgd":
            sol = opgd(model, S, budget, D, rng)
        elif args.method == "rrpsgd":
            sol = rrpsgd(model, S, budget, rng)
        else:
            sol = baseline_private_sgd(model, S, budget, args.batch_size, D, rng)
    except (ValueError, OSError) as exc:
        print(f"dperm train: {exc}", file=sys.stderr)
        return 1
    if isinstance(sol.noise_spec, NoiseSpec):
        noise_kind, noise_sigma = sol.noise_spec.kind, sol.noise_spec.scale
    else:
        noise_kind, noise_sigma = GAUSSIAN, float(sol.noise_spec)
    meta = {
        "algorithm": sol.algorithm,
        "epsilon": repr(args.epsilon),
        "delta": repr(args.delta),
        "iterations": str(sol.iterations_run),
        "noise_kind": noise_kind,
        "noise_sigma": repr(noise_sigma),
        "seed": str(seed),
        "dataset": S.name,
        "loss": loss_name,
        "mu": repr(args.mu),
    }
    write_model(args.out, sol.w_priv, meta)
    print(f"wrote {args.out}: {sol.w_priv.size} weights, algorithm={sol.algorithm}")
    return 0


def _cmd_sensitivity_check(args) -> int:
    if args.pairs < 1:
        print("dperm sensitivity-check: --pairs must be >= 1", file=sys.stderr)
        return 1
    if args.n < 2 or args.d < 1 or args.T < 1:
        print("dperm sensitivity-check: need n >= 2, d >= 1, T >= 1", file=sys.stderr)
        return 1
    seed = args.seed if args.seed is not None else _default_seed()
    spec = SyntheticSpec(kind=LOGISTIC_SEPARABLE, n=args.n, d=args.d, noise_level=0.1, seed=seed)
    S = generate(spec)
    # Wide Lipschitz ball: the bound grows with L, the traces do not, so
    # this only makes the check harder to falsify spuriously.
    model = LogisticLoss(mu=args.mu, B=S.B, domain_radius=4.0)
    L, beta = certify_constants(model)
    eta = 1.0 / (args.mu + beta) if args.mu > 0.0 else 1.0 / beta
    cfg = GdConfig(eta=eta, T=args.T, w0=np.zeros(S.d))
    traces = sweep_pairs(model, S, cfg, args.pairs, RngStream(seed=seed).child("sweep"))
    rows = [_SENSITIVITY_HEADER]
    all_ok = True
    for tr in traces:
        ok = tr.max_delta <= tr.bound
        if args.mu == 0.0:
            ok = ok and recursion_check(tr, L, eta, S.n)
        all_ok = all_ok and ok
        rows.append(
            f"{S.n},{args.mu!r},{eta!r},{args.T},{tr.max_delta!r},{tr.bound!r},{ok}"
        )
    out_text = "\n".join(rows) + "\n"
    if args.out:
        Path(args.out).write_text(out_text, encoding="utf-8")
    else:
        print(out_text, end="")
    if not all_ok:
        print("dperm sensitivity-check: bound violated", file=sys.stderr)
        return 3
    return 0


def _cmd_mechanism_check(args) -> int:
    if args.samples < 1 or args.d < 1 or args.sigma <= 0.0 or args.rel_tol <= 0.0:
        print(
            "dperm mechanism-check: need samples >= 1, d >= 1, sigma > 0, rel-tol > 0",
            file=sys.stderr,
        )
        return 1
    seed = args.seed if args.seed is not None else _default_seed()
    root = RngStream(seed=seed)
    d, sigma = args.d, args.sigma
    checks = (
        (GAMMA_LAPLACE, sample_gamma_laplace_bulk, d * (d + 1) * sigma * sigma),
        (GAUSSIAN, sample_gaussian_bulk, d * sigma * sigma),
    )
    ok = True
    for name, sampler, expected in checks:
        Z = sampler(d, sigma, args.samples, root.child(name))
        observed = float(np.mean(np.einsum("ij,ij->i", Z, Z)))
        rel_err = abs(observed - expected) / expected
        line_ok = rel_err <= args.rel_tol
        ok = ok and line_ok
        print(
            f"{name}: observed E||z||^2 = {observed:.6g}, expected {expected:.6g}, "
            f"rel_err = {rel_err:.3e} [{'ok' if line_ok else 'FAIL'}]"
        )
    return 0 if ok else 3


def main(argv=None) -> int:
    parser = _build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code or 0)
    try:
        if args.subcommand == "bench":
            return _cmd_bench(args)
        if args.subcommand == "train":
            return _cmd_train(args)
        if args.subcommand == "sensitivity-check":
            return _cmd_sensitivity_check(args)
        return _cmd_mechanism_check(args)
    except ValueError as exc:
        print(f"dperm: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
