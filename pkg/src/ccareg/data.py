"""Observation matrices: ingestion, centering, covariate adjustment, screening.

Conventions used throughout the package:

* all covariances are scaled by ``1/n`` (not ``1/(n-1)``) -- this shifts
  penalty grids relative to libraries that use the unbiased convention,
  so it is worth keeping in mind when porting hyperparameters;
* fitting routines require column-centered data and refuse anything else;
* Cohen's d uses the ``1/(n-1)`` standard deviation, matching the
  one-sample t statistic it summarizes.
"""

from __future__ import annotations

import csv
import warnings
from dataclasses import dataclass, field

import numpy as np

from .errors import (
    DomainError,
    EmptyInput,
    ParseError,
    ShapeError,
    SingularDesign,
    StateError,
)

CENTER_RTOL = 1e-10


@dataclass(frozen=True, eq=False)
class DataMatrix:
    """An n-by-m observation matrix with column names and centering state.

    The underlying array is copied on construction and marked read-only, so
    instances are safe to share across threads.
    """

    values: np.ndarray
    column_names: list[str]
    centered: bool = False
    source: str | None = None

    def __post_init__(self):
        arr = np.array(self.values, dtype=float, order="C")
        if arr.ndim != 2:
            raise ShapeError(f"expected a 2-d array, got ndim={arr.ndim}")
        n, m = arr.shape
        if n < 2:
            raise ShapeError(f"need at least 2 rows, got {n}")
        if m < 1:
            raise ShapeError("need at least 1 column")
        if not np.isfinite(arr).all():
            bad = np.argwhere(~np.isfinite(arr))[0]
            raise DomainError(
                f"non-finite entry at row {bad[0]}, column {bad[1]}"
            )
        names = list(self.column_names)
        if len(names) != m:
            raise ShapeError(
                f"{len(names)} column names for {m} columns"
            )
        if self.centered:
            scale = np.maximum(np.abs(arr).max(axis=0), 1.0)
            mean = arr.mean(axis=0)
            if (np.abs(mean) > CENTER_RTOL * scale).any():
                j = int(np.argmax(np.abs(mean) / scale))
                raise StateError(
                    f"matrix flagged centered but column {names[j]!r} has "
                    f"mean {mean[j]:.3e}"
                )
        arr.setflags(write=False)
        object.__setattr__(self, "values", arr)
        object.__setattr__(self, "column_names", names)

    @property
    def n(self) -> int:
        return self.values.shape[0]

    @property
    def m(self) -> int:
        return self.values.shape[1]


def matrix_values(x) -> np.ndarray:
    """Return the underlying float array of a DataMatrix or array-like."""
    if isinstance(x, DataMatrix):
        return x.values
    arr = np.asarray(x, dtype=float)
    if arr.ndim != 2:
        raise ShapeError(f"expected a 2-d array, got ndim={arr.ndim}")
    return arr


def centered_values(x, name: str = "x") -> np.ndarray:
    """Like :func:`matrix_values` but insists DataMatrix inputs are centered.

    Raw arrays are passed through and assumed centered by the caller; this
    is how internal reduction steps avoid round-tripping through DataMatrix.
    """
    if isinstance(x, DataMatrix) and not x.centered:
        raise StateError(f"{name} must be column-centered first")
    return matrix_values(x)


def column_names_of(x, prefix: str = "x") -> list[str]:
    if isinstance(x, DataMatrix):
        return list(x.column_names)
    m = matrix_values(x).shape[1]
    return [f"{prefix}{j + 1}" for j in range(m)]


@dataclass(frozen=True, eq=False)
class CovarianceBlock:
    """A sample covariance block with the 1/n scale convention."""

    matrix: np.ndarray
    scale_convention: str = field(default="1/n")

    def __post_init__(self):
        arr = np.array(self.matrix, dtype=float)
        if arr.ndim != 2:
            raise ShapeError("covariance block must be 2-d")
        arr.setflags(write=False)
        object.__setattr__(self, "matrix", arr)
        if self.scale_convention != "1/n":
            raise DomainError("only the 1/n scale convention is supported")


def load_csv(path, has_header: bool = True) -> DataMatrix:
    """Read a numeric CSV into a DataMatrix (centered flag off).

    RFC-4180-style quoting, UTF-8, '.' decimal separator. Fully blank
    records (e.g. a trailing newline) are ignored. Any non-finite cell
    (NaN/inf) is rejected with its coordinates; record indices in error
    messages are 1-based and count the header row.
    """
    with open(path, newline="", encoding="utf-8") as fh:
        records = [
            (i + 1, row)
            for i, row in enumerate(csv.reader(fh))
            if any(cell.strip() for cell in row)
        ]
    if not records:
        raise EmptyInput(f"{path}: no data")
    if has_header:
        names = [cell.strip() for cell in records[0][1]]
        body = records[1:]
        if not body:
            raise EmptyInput(f"{path}: header only, no data rows")
    else:
        names = None
        body = records
    width = len(body[0][1])
    values = np.empty((len(body), width))
    for i, (lineno, row) in enumerate(body):
        if len(row) != width:
            raise ParseError(
                f"{path}: record {lineno} has {len(row)} fields, "
                f"expected {width}"
            )
        for j, cell in enumerate(row):
            try:
                v = float(cell)
            except ValueError:
                raise ParseError(
                    f"{path}: non-numeric cell {cell!r} at record "
                    f"{lineno}, column {j + 1}"
                ) from None
            if not np.isfinite(v):
                raise ParseError(
                    f"{path}: non-finite cell {cell!r} at record "
                    f"{lineno}, column {j + 1}"
                )
            values[i, j] = v
    if names is None:
        names = [f"col{j + 1}" for j in range(width)]
    elif len(names) != width:
        raise ParseError(
            f"{path}: header names {len(names)} fields, data has {width}"
        )
    return DataMatrix(values, names, centered=False, source=str(path))


def center_columns(x: DataMatrix) -> DataMatrix:
    """Subtract each column's mean. Idempotent."""
    vals = matrix_values(x)
    out = vals - vals.mean(axis=0)
    return DataMatrix(out, column_names_of(x), centered=True,
                      source=getattr(x, "source", None))


def sample_covariance(x, y) -> CovarianceBlock:
    """Cross-covariance block (1/n) X'Y of two centered matrices.

    When ``x is y`` the result is symmetrized exactly, making the
    self-covariance block symmetric positive semi-definite.
    """
    for obj, name in ((x, "x"), (y, "y")):
        if isinstance(obj, DataMatrix) and not obj.centered:
            raise StateError(f"{name} must be centered before covariance")
    xv = matrix_values(x)
    yv = matrix_values(y)
    if xv.shape[0] != yv.shape[0]:
        raise ShapeError(
            f"row counts differ: {xv.shape[0]} vs {yv.shape[0]}"
        )
    block = xv.T @ yv / xv.shape[0]
    if x is y:
        block = (block + block.T) / 2.0
    return CovarianceBlock(block)


def regress_out(x: DataMatrix, covariates: DataMatrix) -> DataMatrix:
    """Residualize each column of x on [intercept | covariates].

    The intercept makes this subsume mean adjustment; a constant covariate
    column is therefore collinear and rejected. Residual columns have zero
    mean and are orthogonal to every covariate column.
    """
    xv = matrix_values(x)
    zv = matrix_values(covariates)
    if xv.shape[0] != zv.shape[0]:
        raise ShapeError(
            f"row counts differ: {xv.shape[0]} vs {zv.shape[0]}"
        )
    design = np.column_stack([np.ones(xv.shape[0]), zv])
    coef, _, rank, _ = np.linalg.lstsq(design, xv, rcond=None)
    if rank < design.shape[1]:
        raise SingularDesign(
            f"covariate design (with intercept) has rank {rank} < "
            f"{design.shape[1]} columns"
        )
    resid = xv - design @ coef
    # kill the tiny residual means so the centered invariant holds exactly
    resid = resid - resid.mean(axis=0)
    return DataMatrix(resid, column_names_of(x), centered=True,
                      source=getattr(x, "source", None))


def fold_adjuster(z_train: np.ndarray, m_train: np.ndarray):
    """Train-only covariate adjustment for cross-validation folds.

    Fits regression coefficients of ``m_train`` on [intercept | z_train]
    and returns ``apply(z, m)`` residualizing new rows with those
    coefficients, so validation rows never influence the fit.
    """
    z_tr = np.asarray(z_train, dtype=float)
    design = np.column_stack([np.ones(z_tr.shape[0]), z_tr])
    coef, _, rank, _ = np.linalg.lstsq(design, np.asarray(m_train, float),
                                       rcond=None)
    if rank < design.shape[1]:
        raise SingularDesign(
            f"covariate design (with intercept) has rank {rank} < "
            f"{design.shape[1]} columns on the training fold"
        )

    def apply(z_new: np.ndarray, m_new: np.ndarray) -> np.ndarray:
        d = np.column_stack([np.ones(np.asarray(z_new).shape[0]),
                             np.asarray(z_new, float)])
        return np.asarray(m_new, float) - d @ coef

    return apply


def cohens_d(x) -> np.ndarray:
    """Per-column mean / sample sd (1/(n-1)), the one-sample effect size.

    Must be called on the uncentered matrix; a zero-variance column is
    reported as a signed infinity with a warning, never silently zero.
    """
    if isinstance(x, DataMatrix) and x.centered:
        raise StateError("cohens_d requires the uncentered matrix")
    vals = matrix_values(x)
    if vals.shape[0] < 2:
        raise ShapeError("cohens_d needs at least 2 rows")
    mean = vals.mean(axis=0)
    sd = vals.std(axis=0, ddof=1)
    zero = sd == 0.0
    with np.errstate(divide="ignore", invalid="ignore"):
        d = mean / sd
    if zero.any():
        names = column_names_of(x)
        flagged = [names[j] for j in np.flatnonzero(zero)[:5]]
        warnings.warn(
            f"zero-variance column(s) {flagged}: effect size reported as "
            f"signed infinity",
            stacklevel=2,
        )
        d[zero] = np.copysign(np.inf, mean[zero])
    return d
