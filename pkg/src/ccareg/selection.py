"""Hyperparameter selection by k-fold and nested cross-validation.

Scoring follows the protocol used throughout the package: fit on the
training folds, then score the *plain* (unpenalized) Pearson correlation
of the first canonical pair on the held-out fold. Centering statistics
come from the training folds only, and validation rows never enter a fit,
so deleting them and refitting reproduces the coefficients bitwise.

The best grid point maximizes the mean validation correlation; exact ties
break toward stronger regularization (larger lambda1, then larger mu1).
"""

from __future__ import annotations

import csv
import json
from dataclasses import dataclass, field

import numpy as np

from ._threads import thread_map
from .data import fold_adjuster, matrix_values, regress_out, DataMatrix
from .errors import CCARegError, DomainError, NoFeasiblePoint, ShapeError
from .reduction import MethodSpec
from .solver import plain_correlation


@dataclass(frozen=True)
class HyperPoint:
    """One point of the hyperparameter grid."""

    lam1: float
    mu1: float = 0.0
    lam2: float = 0.0
    mu2: float = 0.0

    def as_tuple(self):
        return (self.lam1, self.mu1, self.lam2, self.mu2)


@dataclass(frozen=True)
class Grid:
    """Sorted value lists per hyperparameter; singleton [0] when unused."""

    lam1: tuple
    mu1: tuple = (0.0,)
    lam2: tuple = (0.0,)
    mu2: tuple = (0.0,)

    def __post_init__(self):
        for name in ("lam1", "mu1", "lam2", "mu2"):
            vals = tuple(float(v) for v in getattr(self, name))
            if not vals:
                raise DomainError(f"{name} grid is empty")
            if any(v < 0 for v in vals):
                raise DomainError(f"{name} grid has a negative value")
            if any(b < a for a, b in zip(vals, vals[1:])):
                raise DomainError(f"{name} grid must be sorted ascending")
            object.__setattr__(self, name, vals)

    def points(self) -> list[HyperPoint]:
        return [
            HyperPoint(l1, m1, l2, m2)
            for l1 in self.lam1
            for m1 in self.mu1
            for l2 in self.lam2
            for m2 in self.mu2
        ]


def kfold_split(n: int, k: int, seed: int) -> list[np.ndarray]:
    """Disjoint index folds from a seeded shuffle; sizes differ by <= 1."""
    if not 2 <= k <= n:
        raise DomainError(f"need 2 <= k <= n, got k={k}, n={n}")
    perm = np.random.default_rng(seed).permutation(n)
    return [np.sort(fold) for fold in np.array_split(perm, k)]


def _mean_se(scores: np.ndarray):
    """Row-wise mean and sd/sqrt(count) over non-null fold scores."""
    counts = np.sum(~np.isnan(scores), axis=1)
    with np.errstate(invalid="ignore"):
        mean = np.where(counts > 0, np.nanmean(scores, axis=1), np.nan)
        sd = np.where(counts > 1, np.nanstd(scores, axis=1, ddof=1), np.nan)
    se = np.where(counts > 0, sd / np.sqrt(np.maximum(counts, 1)), np.nan)
    return mean, se


def _pick_best(points: list[HyperPoint], mean_val: np.ndarray) -> int:
    best = -1
    for i, point in enumerate(points):
        if np.isnan(mean_val[i]):
            continue
        if best < 0:
            best = i
            continue
        cur, inc = mean_val[best], mean_val[i]
        if inc > cur or (
            inc == cur
            and (point.lam1, point.mu1)
            > (points[best].lam1, points[best].mu1)
        ):
            best = i
    if best < 0:
        raise NoFeasiblePoint("every grid point failed on every fold")
    return best


@dataclass(eq=False)
class CVResult:
    """Per-point, per-fold scores with aggregates and the selected point."""

    points: list[HyperPoint]
    train_scores: np.ndarray  # (n_points, k); NaN marks a failed cell
    val_scores: np.ndarray
    failures: dict
    fold_seed: int
    n_folds: int
    mean_train: np.ndarray = field(init=False)
    se_train: np.ndarray = field(init=False)
    mean_val: np.ndarray = field(init=False)
    se_val: np.ndarray = field(init=False)
    best_index: int = field(init=False)

    def __post_init__(self):
        self.mean_train, self.se_train = _mean_se(self.train_scores)
        self.mean_val, self.se_val = _mean_se(self.val_scores)
        self.best_index = _pick_best(self.points, self.mean_val)

    @property
    def best_point(self) -> HyperPoint:
        return self.points[self.best_index]

    def write_csv(self, fh) -> None:
        """Flat per-fold table: one row per (grid point, fold)."""
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(
            ["lambda1", "mu1", "lambda2", "mu2", "fold", "train_cor", "val_cor"]
        )
        for i, point in enumerate(self.points):
            for f in range(self.n_folds):
                writer.writerow([
                    repr(point.lam1), repr(point.mu1),
                    repr(point.lam2), repr(point.mu2), f,
                    _cell(self.train_scores[i, f]),
                    _cell(self.val_scores[i, f]),
                ])

    def to_json_dict(self) -> dict:
        return {
            "fold_seed": self.fold_seed,
            "n_folds": self.n_folds,
            "points": [list(p.as_tuple()) for p in self.points],
            "train_scores": _listify(self.train_scores),
            "val_scores": _listify(self.val_scores),
            "mean_train": _listify(self.mean_train),
            "se_train": _listify(self.se_train),
            "mean_val": _listify(self.mean_val),
            "se_val": _listify(self.se_val),
            "best_index": self.best_index,
            "best_point": list(self.best_point.as_tuple()),
            "failures": {
                f"{i}:{f}": reason for (i, f), reason in sorted(self.failures.items())
            },
        }


def _cell(v: float) -> str:
    return "" if np.isnan(v) else repr(float(v))


def _listify(arr: np.ndarray):
    return [
        [None if np.isnan(v) else float(v) for v in row]
        if arr.ndim == 2 else (None if np.isnan(row) else float(row))
        for row in arr
    ]


def _fold_data(xv, yv, zv, train_idx, val_idx, adjust):
    """Training/validation slices with train-only centering (and optional
    train-only covariate adjustment)."""
    xtr, ytr = xv[train_idx], yv[train_idx]
    xva, yva = xv[val_idx], yv[val_idx]
    if zv is not None and adjust == "fold":
        ztr, zva = zv[train_idx], zv[val_idx]
        adj_x = fold_adjuster(ztr, xtr)
        adj_y = fold_adjuster(ztr, ytr)
        xtr, xva = adj_x(ztr, xtr), adj_x(zva, xva)
        ytr, yva = adj_y(ztr, ytr), adj_y(zva, yva)
    x_mean = xtr.mean(axis=0)
    y_mean = ytr.mean(axis=0)
    return (xtr - x_mean, ytr - y_mean, xva - x_mean, yva - y_mean)


def cross_validate(x, y, method: MethodSpec, grid: Grid, k: int, seed: int,
                   threads: int = 1, covariates=None,
                   adjust: str = "pre") -> CVResult:
    """Grid search scored by k-fold cross-validation.

    ``adjust`` controls covariate handling: "pre" residualizes once on the
    full data before splitting (the default pipeline); "fold" refits the
    adjustment on each training fold, the strictly leakage-free variant.
    A failed fit at a (point, fold) cell records a null score with its
    reason; only a grid with no feasible point at all raises.
    """
    xv = matrix_values(x)
    yv = matrix_values(y)
    if xv.shape[0] != yv.shape[0]:
        raise ShapeError(f"row counts differ: {xv.shape[0]} vs {yv.shape[0]}")
    if adjust not in ("pre", "fold"):
        raise DomainError(f"unknown adjust mode {adjust!r}")
    zv = matrix_values(covariates) if covariates is not None else None
    if zv is not None and adjust == "pre":
        xv = regress_out(DataMatrix(xv, [f"x{j}" for j in range(xv.shape[1])]),
                         DataMatrix(zv, [f"z{j}" for j in range(zv.shape[1])])).values
        yv = regress_out(DataMatrix(yv, [f"y{j}" for j in range(yv.shape[1])]),
                         DataMatrix(zv, [f"z{j}" for j in range(zv.shape[1])])).values
        zv = None
    folds = kfold_split(xv.shape[0], k, seed)
    all_idx = np.arange(xv.shape[0])
    prepared = []
    for fold in folds:
        train_idx = np.setdiff1d(all_idx, fold)
        prepared.append(_fold_data(xv, yv, zv, train_idx, fold, adjust))
    points = grid.points()

    def run_cell(cell):
        i, f = cell
        xtr, ytr, xva, yva = prepared[f]
        point = points[i]
        try:
            fit = method.fit(xtr, ytr, point.lam1, point.mu1,
                             point.lam2, point.mu2, r=1)
            train = plain_correlation(xtr, ytr, fit.alpha[:, 0], fit.beta[:, 0])
            val = plain_correlation(xva, yva, fit.alpha[:, 0], fit.beta[:, 0])
            return (train, val, None)
        except CCARegError as exc:
            return (np.nan, np.nan, str(exc))

    cells = [(i, f) for i in range(len(points)) for f in range(k)]
    outcomes = thread_map(run_cell, cells, threads)
    train_scores = np.full((len(points), k), np.nan)
    val_scores = np.full((len(points), k), np.nan)
    failures = {}
    for (i, f), (train, val, err) in zip(cells, outcomes):
        train_scores[i, f] = train
        val_scores[i, f] = val
        if err is not None:
            failures[(i, f)] = err
    return CVResult(points, train_scores, val_scores, failures, seed, k)


@dataclass(eq=False)
class NCVResult:
    """Outer-fold tuning and test scores from nested cross-validation."""

    outer_best: list[HyperPoint]
    inner_val: np.ndarray   # best mean validation score per outer fold
    test_scores: np.ndarray  # held-out score of the refit model
    seed: int
    outer_k: int
    inner_k: int

    @property
    def mean_inner_val(self) -> float:
        return float(np.mean(self.inner_val))

    @property
    def se_inner_val(self) -> float:
        return float(np.std(self.inner_val, ddof=1) / np.sqrt(self.outer_k))

    @property
    def mean_test(self) -> float:
        return float(np.mean(self.test_scores))

    @property
    def se_test(self) -> float:
        return float(np.std(self.test_scores, ddof=1) / np.sqrt(self.outer_k))

    def write_csv(self, fh) -> None:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(
            ["outer_fold", "lambda1", "mu1", "lambda2", "mu2",
             "inner_val_cor", "test_cor"]
        )
        for i, point in enumerate(self.outer_best):
            writer.writerow([
                i, repr(point.lam1), repr(point.mu1),
                repr(point.lam2), repr(point.mu2),
                repr(float(self.inner_val[i])),
                repr(float(self.test_scores[i])),
            ])

    def to_json_dict(self) -> dict:
        return {
            "seed": self.seed,
            "outer_k": self.outer_k,
            "inner_k": self.inner_k,
            "outer_best": [list(p.as_tuple()) for p in self.outer_best],
            "inner_val": [float(v) for v in self.inner_val],
            "test_scores": [float(v) for v in self.test_scores],
            "mean_inner_val": self.mean_inner_val,
            "se_inner_val": self.se_inner_val,
            "mean_test": self.mean_test,
            "se_test": self.se_test,
        }


def nested_cross_validate(x, y, method: MethodSpec, grid: Grid,
                          outer_k: int, inner_k: int, seed: int,
                          threads: int = 1, covariates=None,
                          adjust: str = "pre") -> NCVResult:
    """Tune on inner folds, then score once per held-out outer fold.

    Each outer fold is excluded entirely from its inner grid search and
    from the refit at the selected point, giving an honest generalization
    estimate of the tuned model. Reported with 1-SE bands over the outer
    folds. Deterministic: inner fold seeds derive from the outer seed.
    """
    xv = matrix_values(x)
    yv = matrix_values(y)
    if xv.shape[0] != yv.shape[0]:
        raise ShapeError(f"row counts differ: {xv.shape[0]} vs {yv.shape[0]}")
    n = xv.shape[0]
    if outer_k * 2 > n:
        raise DomainError(
            f"need outer_k * 2 <= n, got outer_k={outer_k}, n={n}"
        )
    zv = matrix_values(covariates) if covariates is not None else None
    if zv is not None and adjust == "pre":
        xv = regress_out(DataMatrix(xv, [f"x{j}" for j in range(xv.shape[1])]),
                         DataMatrix(zv, [f"z{j}" for j in range(zv.shape[1])])).values
        yv = regress_out(DataMatrix(yv, [f"y{j}" for j in range(yv.shape[1])]),
                         DataMatrix(zv, [f"z{j}" for j in range(zv.shape[1])])).values
        zv = None
    outer_folds = kfold_split(n, outer_k, seed)
    inner_seeds = np.random.SeedSequence(seed).generate_state(outer_k)
    all_idx = np.arange(n)
    best_points = []
    inner_val = np.empty(outer_k)
    test_scores = np.empty(outer_k)
    for i, fold in enumerate(outer_folds):
        rest = np.setdiff1d(all_idx, fold)
        cv = cross_validate(xv[rest], yv[rest], method, grid, inner_k,
                            int(inner_seeds[i]), threads=threads,
                            covariates=None if zv is None else zv[rest],
                            adjust=adjust)
        point = cv.best_point
        best_points.append(point)
        inner_val[i] = cv.mean_val[cv.best_index]
        xtr, ytr, xte, yte = _fold_data(xv, yv, zv, rest, fold, adjust)
        fit = method.fit(xtr, ytr, point.lam1, point.mu1,
                         point.lam2, point.mu2, r=1)
        test_scores[i] = plain_correlation(
            xte, yte, fit.alpha[:, 0], fit.beta[:, 0])
    return NCVResult(best_points, inner_val, test_scores, seed,
                     outer_k, inner_k)
