"""Dataset ingestion, norm-bound preprocessing, and synthetic generators.

The theory modules need a hard certificate ||x_i||_2 <= B on every row, so
preprocessing is global max-norm scaling rather than per-feature z-scoring.
Datasets are immutable once constructed; their arrays are marked read-only.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass, replace

import numpy as np
from scipy.special import expit

from .mechanisms import RngStream

__all__ = [
    "CLASSIFICATION",
    "REGRESSION",
    "RIDGE_REGRESSION",
    "LOGISTIC_SEPARABLE",
    "SIGMOID_NONCONVEX",
    "Dataset",
    "SyntheticSpec",
    "generate",
    "load_csv",
    "write_csv",
    "standardize",
    "split",
]

CLASSIFICATION = "classification"
REGRESSION = "regression"

RIDGE_REGRESSION = "ridge"
LOGISTIC_SEPARABLE = "logistic"
SIGMOID_NONCONVEX = "sigmoid"

_KINDS = (RIDGE_REGRESSION, LOGISTIC_SEPARABLE, SIGMOID_NONCONVEX)

# Link weight norm for the sigmoid family; spreads responses over (0, 1)
# so the squared-sigmoid landscape is genuinely non-convex.
_SIGMOID_LINK_NORM = 3.0

_NORM_SLACK = 1e-9


@dataclass(frozen=True)
class Dataset:
    """An immutable supervised dataset with a certified feature-norm bound.

    Every row of X satisfies ||x_i||_2 <= B. Classification labels are
    in {-1, +1}. For regression, y_scale records the factor original
    labels were divided by (1.0 if never rescaled).
    """

    X: np.ndarray
    y: np.ndarray
    B: float
    task: str
    name: str
    y_scale: float = 1.0
    feature_names: tuple[str, ...] | None = None
    label_name: str = "label"

    def __post_init__(self) -> None:
        X = np.ascontiguousarray(np.asarray(self.X, dtype=float))
        y = np.ascontiguousarray(np.asarray(self.y, dtype=float))
        if X.ndim != 2 or X.shape[0] < 1 or X.shape[1] < 1:
            raise ValueError(f"X must be a nonempty 2-d matrix, got shape {X.shape}")
        if y.shape != (X.shape[0],):
            raise ValueError(f"y must have shape ({X.shape[0]},), got {y.shape}")
        if self.task not in (CLASSIFICATION, REGRESSION):
            raise ValueError(f"unknown task {self.task!r}")
        if not (math.isfinite(self.B) and self.B > 0.0):
            raise ValueError(f"B must be a positive real, got {self.B!r}")
        norms = np.linalg.norm(X, axis=1)
        worst = float(norms.max())
        if worst > self.B * (1.0 + _NORM_SLACK):
            raise ValueError(
                f"row norm {worst} exceeds the certified bound B={self.B}"
            )
        if self.task == CLASSIFICATION and not np.all(np.isin(y, (-1.0, 1.0))):
            raise ValueError("classification labels must be -1 or +1")
        if self.feature_names is not None and len(self.feature_names) != X.shape[1]:
            raise ValueError("feature_names length must match the number of columns")
        X.setflags(write=False)
        y.setflags(write=False)
        object.__setattr__(self, "X", X)
        object.__setattr__(self, "y", y)

    @property
    def n(self) -> int:
        return self.X.shape[0]

    @property
    def d(self) -> int:
        return self.X.shape[1]


@dataclass(frozen=True)
class SyntheticSpec:
    """Recipe for a synthetic dataset; (seed, stream_id) addresses the draw."""

    kind: str
    n: int
    d: int
    noise_level: float = 0.0
    seed: int = 0
    stream_id: int = 0

    def __post_init__(self) -> None:
        if self.kind not in _KINDS:
            raise ValueError(f"kind must be one of {_KINDS}, got {self.kind!r}")
        if not (isinstance(self.n, (int, np.integer)) and self.n >= 1):
            raise ValueError(f"n must be a positive integer, got {self.n!r}")
        if not (isinstance(self.d, (int, np.integer)) and self.d >= 1):
            raise ValueError(f"d must be a positive integer, got {self.d!r}")
        if not (math.isfinite(self.noise_level) and self.noise_level >= 0.0):
            raise ValueError(f"noise_level must be nonnegative, got {self.noise_level!r}")


def _unit_rows(gen: np.random.Generator, n: int, d: int) -> np.ndarray:
    X = gen.standard_normal((n, d))
    norms = np.linalg.norm(X, axis=1, keepdims=True)
    norms[norms == 0.0] = 1.0  # probability-zero guard; a zero row stays zero
    return X / norms


def generate(spec: SyntheticSpec) -> Dataset:
    """Generate a synthetic dataset with rows on the unit sphere (B = 1).

    ridge: y = <w*, x> + Gaussian(noise_level), ||w*|| = 1.
    logistic: y = sign(<w*, x>), each label flipped with prob noise_level.
    sigmoid: y = expit(3 <w*, x> + Gaussian(noise_level)), labels in (0, 1).
    """
    gen = RngStream(spec.seed, spec.stream_id).generator()
    X = _unit_rows(gen, spec.n, spec.d)
    w_star = gen.standard_normal(spec.d)
    w_star /= np.linalg.norm(w_star)
    margins = X @ w_star
    if spec.kind == RIDGE_REGRESSION:
        y = margins + spec.noise_level * gen.standard_normal(spec.n)
        task = REGRESSION
    elif spec.kind == LOGISTIC_SEPARABLE:
        y = np.where(margins >= 0.0, 1.0, -1.0)
        flips = gen.random(spec.n) < spec.noise_level
        y = np.where(flips, -y, y)
        task = CLASSIFICATION
    else:
        link = _SIGMOID_LINK_NORM * margins + spec.noise_level * gen.standard_normal(spec.n)
        y = expit(link)
        task = REGRESSION
    name = f"{spec.kind}-n{spec.n}-d{spec.d}"
    return Dataset(X=X, y=y, B=1.0, task=task, name=name)


def standardize(S: Dataset) -> Dataset:
    """Scale features globally so max_i ||x_i||_2 = 1, certifying B = 1.

    Regression labels are scaled by 1/max|y_i| and the factor is recorded
    in y_scale so reported errors can be mapped back to original units.
    """
    norms = np.linalg.norm(S.X, axis=1)
    max_norm = float(norms.max())
    if max_norm == 0.0:
        raise ValueError("cannot standardize an all-zero feature matrix")
    X = S.X / max_norm
    y = S.y
    y_scale = S.y_scale
    if S.task == REGRESSION:
        max_abs = float(np.max(np.abs(S.y)))
        if max_abs > 0.0:
            y = S.y / max_abs
            y_scale = S.y_scale * max_abs
    return replace(S, X=X, y=y, B=1.0, y_scale=y_scale)


def split(S: Dataset, train_fraction: float, rng: RngStream) -> tuple[Dataset, Dataset]:
    """Disjoint random split into sizes (ceil(f n), n - ceil(f n))."""
    if S.n < 2:
        raise ValueError("splitting requires at least two examples")
    if not (0.0 < train_fraction < 1.0):
        raise ValueError(f"train_fraction must lie in (0, 1), got {train_fraction!r}")
    k = math.ceil(train_fraction * S.n)
    if k == 0 or k == S.n:
        raise ValueError(
            f"degenerate split: fraction {train_fraction} of {S.n} leaves an empty part"
        )
    perm = rng.generator().permutation(S.n)
    left, right = np.sort(perm[:k]), np.sort(perm[k:])

    def take(idx: np.ndarray, tag: str) -> Dataset:
        return replace(S, X=S.X[idx], y=S.y[idx], name=f"{S.name}/{tag}")

    return take(left, "train"), take(right, "test")


def _parse_float(cell: str, row: int, col: str) -> float:
    text = cell.strip()
    if text == "":
        raise ValueError(f"missing value at row {row}, column {col!r}")
    try:
        return float(text)
    except ValueError:
        raise ValueError(
            f"cannot parse {cell!r} as a number at row {row}, column {col!r}"
        ) from None


def _map_class_labels(cells: list[str]) -> np.ndarray:
    """Map binary labels (numeric or string levels) onto -1/+1."""
    try:
        y = np.asarray([float(c) for c in cells])
    except ValueError:
        levels = sorted(set(cells))
        if len(levels) == 2:
            arr = np.asarray(cells)
            return np.where(arr == levels[0], -1.0, 1.0)
    else:
        levels = sorted(set(y.tolist()))
        if set(levels) <= {-1.0, 1.0}:
            return y
        if set(levels) <= {0.0, 1.0}:
            return np.where(y == 0.0, -1.0, 1.0)
        if len(levels) == 2:
            return np.where(y == levels[0], -1.0, 1.0)
    raise ValueError(
        f"classification labels must be binary, got {len(levels)} distinct values"
    )


def load_csv(
    path: str,
    label_column: str | int,
    task: str,
    categorical: tuple[str, ...] = (),
    name: str | None = None,
) -> Dataset:
    """Load a UTF-8, comma-separated, header-first CSV file.

    Declared categorical columns are one-hot expanded into k binary
    columns (one per level, levels sorted) appended after the numeric
    columns. Missing values are a hard error, as is any non-numeric cell
    outside the declared categorical columns.
    """
    with open(path, newline="", encoding="utf-8") as fh:
        rows = list(csv.reader(fh))
    if not rows:
        raise ValueError(f"{path}: empty file")
    header = [h.strip() for h in rows[0]]
    if isinstance(label_column, int):
        if not (0 <= label_column < len(header)):
            raise ValueError(f"label column index {label_column} out of range")
        label_idx = label_column
    else:
        if label_column not in header:
            raise ValueError(f"label column {label_column!r} not found in header")
        label_idx = header.index(label_column)
    cat_set = set(categorical)
    unknown = cat_set - set(header)
    if unknown:
        raise ValueError(f"categorical columns not in header: {sorted(unknown)}")
    numeric_cols = [
        i for i, h in enumerate(header) if i != label_idx and h not in cat_set
    ]
    cat_cols = [i for i, h in enumerate(header) if i != label_idx and h in cat_set]

    body = rows[1:]
    if not body:
        raise ValueError(f"{path}: no data rows")
    numeric = np.empty((len(body), len(numeric_cols)))
    labels: list[float] = []
    label_text: list[str] = []
    cat_values: list[list[str]] = []
    for r, row in enumerate(body, start=2):  # 1-based with header on line 1
        if len(row) != len(header):
            raise ValueError(f"{path}: row {r} has {len(row)} cells, expected {len(header)}")
        for j, i in enumerate(numeric_cols):
            numeric[r - 2, j] = _parse_float(row[i], r, header[i])
        if task == CLASSIFICATION:
            cell = row[label_idx].strip()
            if cell == "":
                raise ValueError(
                    f"missing value at row {r}, column {header[label_idx]!r}"
                )
            label_text.append(cell)
        else:
            labels.append(_parse_float(row[label_idx], r, header[label_idx]))
        cells = []
        for i in cat_cols:
            cell = row[i].strip()
            if cell == "":
                raise ValueError(f"missing value at row {r}, column {header[i]!r}")
            cells.append(cell)
        cat_values.append(cells)

    blocks = [numeric]
    names = [header[i] for i in numeric_cols]
    for j, i in enumerate(cat_cols):
        levels = sorted({vals[j] for vals in cat_values})
        onehot = np.zeros((len(body), len(levels)))
        index = {lvl: k for k, lvl in enumerate(levels)}
        for r, vals in enumerate(cat_values):
            onehot[r, index[vals[j]]] = 1.0
        blocks.append(onehot)
        names.extend(f"{header[i]}={lvl}" for lvl in levels)

    X = np.hstack(blocks)
    if task == CLASSIFICATION:
        y = _map_class_labels(label_text)
    else:
        y = np.asarray(labels, dtype=float)
    norms = np.linalg.norm(X, axis=1)
    B = float(norms.max()) if float(norms.max()) > 0.0 else 1.0
    return Dataset(
        X=X,
        y=y,
        B=B,
        task=task,
        name=name if name is not None else path,
        feature_names=tuple(names),
        label_name=header[label_idx],
    )


def write_csv(S: Dataset, path: str) -> None:
    """Write a dataset as CSV with shortest round-trip decimals."""
    names = S.feature_names or tuple(f"f{i}" for i in range(S.d))
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        writer.writerow(list(names) + [S.label_name])
        for i in range(S.n):
            writer.writerow([repr(float(v)) for v in S.X[i]] + [repr(float(S.y[i]))])
