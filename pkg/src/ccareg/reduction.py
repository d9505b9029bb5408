"""Reductions that solve wide penalized CCA problems in small coordinates.

The ridge-penalized problem is invariant under orthogonal transformations
of the feature space, so a thin factorization X = R V' (R n-by-k, V with
orthonormal columns) lets the whole optimization happen on R; the optimal
coefficients in the discarded complement of V are zero, and the original
coefficients come back as alpha = V alpha_R.

The partial (and, through a change of basis, group and general) penalties
are not orthogonally invariant, so the reduction first makes the
unpenalized block orthogonal to the penalized one by regressing it out --
a non-orthogonal but penalty-preserving transform -- and then applies the
ridge reduction to the penalized block alone.

Nothing in this module allocates a p-by-p array when p exceeds n; each
fit records the dimension of the system it actually factored in
``FittedCCA.solver_dim``.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import scipy.linalg

from .data import centered_values, column_names_of
from .errors import (
    CapacityError,
    CCARegError,
    DomainError,
    IdentifiabilityError,
    ShapeError,
    UnsupportedPenalty,
)
from .penalties import (
    GroupStructure,
    PenaltyFactorization,
    PenaltySpec,
    build_penalty_matrix,
    extended_blocks,
    factor_general_penalty,
    factor_group_penalty,
)
from .solver import (
    FittedCCA,
    apply_sign_convention,
    covariance_triple,
    solve_direct,
)

# dense covariance solves above this budget are refused; the kernel paths
# exist precisely so this never needs raising
DIRECT_BUDGET_BYTES = 2 * 1024**3


def _xy(x, y):
    xv = centered_values(x, "x")
    yv = centered_values(y, "y")
    if xv.shape[0] != yv.shape[0]:
        raise ShapeError(f"row counts differ: {xv.shape[0]} vs {yv.shape[0]}")
    return xv, yv


def fit_direct(x, y, kx=None, ky=None, r: int = 1,
               budget_bytes: int = DIRECT_BUDGET_BYTES,
               method_tag: str = "direct",
               hyperparameters: dict | None = None) -> FittedCCA:
    """Covariance-space solve; refuses when the p-by-p block is too large.

    This is the reference path the reductions are checked against, and the
    one that is structurally unreachable at very high dimension.
    """
    xv, yv = _xy(x, y)
    p, q = xv.shape[1], yv.shape[1]
    need = 8 * max(p * p, q * q)
    if need > budget_bytes:
        raise CapacityError(
            f"direct solve needs a {p}x{p} covariance "
            f"(~{need / 1024**3:.1f} GiB > budget "
            f"{budget_bytes / 1024**3:.1f} GiB); use a kernel-path fitter"
        )
    sxx, syy, sxy = covariance_triple(xv, yv)
    return solve_direct(sxx, syy, sxy, kx, ky, r,
                        x_names=column_names_of(x, "x"),
                        y_names=column_names_of(y, "y"),
                        method_tag=method_tag,
                        hyperparameters=hyperparameters)


def rcca_kernel_fit(x, y, lam1: float, ky=None, r: int = 1) -> FittedCCA:
    """Ridge-penalized CCA via the thin-SVD reduction X = R V'.

    Solves the n-dimensional problem on R and maps coefficients back with
    V; correlations and variates agree with the direct solution whenever
    the latter exists. Needs lam1 > 0 when p >= n, otherwise the reduced
    self-covariance is singular.
    """
    xv, yv = _xy(x, y)
    if lam1 < 0:
        raise DomainError("lambda1 must be nonnegative")
    n = xv.shape[0]
    u, s, vt = scipy.linalg.svd(xv, full_matrices=False)
    k = s.size  # min(n, p)
    rmat = u * s
    srr = np.diag(s * s / n)  # R'R/n, exact by construction
    sry = rmat.T @ yv / n
    syy = yv.T @ yv / n
    inner = solve_direct(srr, syy, sry, lam1 * np.eye(k), ky, r)
    alpha = vt.T @ inner.alpha
    beta = inner.beta
    apply_sign_convention(alpha, beta)
    return FittedCCA(alpha, beta, inner.correlations,
                     method_tag="rcca-kernel",
                     hyperparameters={"lambda1": float(lam1)},
                     x_names=column_names_of(x, "x"),
                     y_names=column_names_of(y, "y"),
                     solver_dim=k)


def prcca_kernel_fit(x1, x2, y, lam1: float, ky=None, r: int = 1) -> FittedCCA:
    """Partially penalized CCA, penalizing the x1 block only.

    Orthogonalizes x1 against the unpenalized block x2 (B = regression of
    x1 on x2, a penalty-preserving shear), reduces the residual block by
    thin SVD, and solves a small partial problem on [R1 | x2]. Coefficients
    are returned stacked as [x1 block; x2 block]. Requires x2 tall and
    full rank (p2 < n) for identifiability.
    """
    x1v = centered_values(x1, "x1")
    yv = centered_values(y, "y")
    x2v = centered_values(x2, "x2") if x2 is not None \
        else np.zeros((x1v.shape[0], 0))
    if x1v.shape[0] != yv.shape[0] or x2v.shape[0] != yv.shape[0]:
        raise ShapeError("x1, x2 and y must have the same number of rows")
    if lam1 < 0:
        raise DomainError("lambda1 must be nonnegative")
    n, p1 = x1v.shape
    p2 = x2v.shape[1]
    if p2 == 0:
        inner = rcca_kernel_fit(x1v, yv, lam1, ky, r)
        return FittedCCA(inner.alpha, inner.beta, inner.correlations,
                         method_tag="prcca-kernel",
                         hyperparameters={"lambda1": float(lam1),
                                          "unpenalized": 0},
                         x_names=column_names_of(x1, "x"),
                         y_names=column_names_of(y, "y"),
                         solver_dim=inner.solver_dim)
    if p2 >= n:
        raise IdentifiabilityError(
            f"unpenalized block has {p2} columns but only {n} rows; it "
            f"must be tall (p2 < n) -- shrink the unpenalized set"
        )
    bmat, _, rank, _ = np.linalg.lstsq(x2v, x1v, rcond=None)
    if rank < p2:
        raise IdentifiabilityError(
            f"unpenalized block has rank {rank} < {p2}; drop collinear "
            f"columns from the unpenalized set"
        )
    x1t = x1v - x2v @ bmat  # orthogonal to x2 by construction
    u, s, v1t = scipy.linalg.svd(x1t, full_matrices=False)
    k1 = s.size  # min(n, p1)
    rmat = np.hstack([u * s, x2v])
    dim = k1 + p2
    srr = rmat.T @ rmat / n
    sry = rmat.T @ yv / n
    syy = yv.T @ yv / n
    kx = np.zeros((dim, dim))
    kx[:k1, :k1] = lam1 * np.eye(k1)
    inner = solve_direct(srr, syy, sry, kx, ky, r)
    gamma1 = inner.alpha[:k1]
    gamma2 = inner.alpha[k1:]
    alpha1 = v1t.T @ gamma1
    alpha2 = gamma2 - bmat @ alpha1
    alpha = np.vstack([alpha1, alpha2])
    beta = inner.beta
    apply_sign_convention(alpha, beta)
    names = column_names_of(x1, "x") + column_names_of(x2, "u")
    return FittedCCA(alpha, beta, inner.correlations,
                     method_tag="prcca-kernel",
                     hyperparameters={"lambda1": float(lam1),
                                      "unpenalized": int(p2)},
                     x_names=names,
                     y_names=column_names_of(y, "y"),
                     solver_dim=dim)


def fit_partial(x, y, unpenalized, lam1: float, ky=None, r: int = 1) -> FittedCCA:
    """Partial penalty on x with the unpenalized features given by index.

    Thin wrapper over :func:`prcca_kernel_fit` that splits the columns and
    scatters the coefficients back into the original feature order.
    """
    xv = centered_values(x, "x")
    p = xv.shape[1]
    unpen = np.unique(np.asarray(unpenalized, dtype=int))
    if unpen.size and (unpen.min() < 0 or unpen.max() >= p):
        raise ShapeError(f"unpenalized index out of range for p={p}")
    pen = np.setdiff1d(np.arange(p), unpen)
    inner = prcca_kernel_fit(xv[:, pen], xv[:, unpen], y, lam1, ky, r)
    alpha = np.empty((p, inner.alpha.shape[1]))
    alpha[pen] = inner.alpha[:pen.size]
    alpha[unpen] = inner.alpha[pen.size:]
    beta = inner.beta.copy()
    apply_sign_convention(alpha, beta)
    return FittedCCA(alpha, beta, inner.correlations,
                     method_tag="prcca-kernel",
                     hyperparameters={"lambda1": float(lam1),
                                      "unpenalized": int(unpen.size)},
                     x_names=column_names_of(x, "x"),
                     y_names=column_names_of(y, "y"),
                     solver_dim=inner.solver_dim)


@dataclass(eq=False)
class ReductionPlan:
    """A change of basis from a general penalty to ridge/partial form.

    ``transformed`` carries the data in the scaled eigenbasis, with the
    penalized coordinates first; ``recover`` maps reduced coefficients
    back so that X @ recover(gamma) == transformed @ gamma exactly.
    """

    kind: str
    transformed: np.ndarray
    n_unpenalized: int
    recovery: np.ndarray | None = None  # dense m-by-m map, when available
    _recover_fn: object = None

    def recover(self, gamma: np.ndarray) -> np.ndarray:
        if self._recover_fn is not None:
            return self._recover_fn(gamma)
        return self.recovery @ np.asarray(gamma, dtype=float)


def general_reduce(x, kx: PenaltyFactorization) -> ReductionPlan:
    """Rotate + rescale a general-penalty problem into ridge/partial form.

    Given K = U diag(d) U', the data becomes X U scaled by d^{-1/2} on the
    positive coordinates; the residual penalty is a pure ridge at 1 when
    all d > 0, else a partial penalty whose unpenalized count equals the
    zero multiplicity of d (those coordinates are moved last).
    """
    xv = centered_values(x, "x")
    d = kx.d
    pos = d >= kx.zero_tol
    scale = np.ones_like(d)
    scale[pos] = np.sqrt(d[pos])
    # stable partition: penalized coordinates first, zero-eigenvalue last
    perm = np.argsort(~pos, kind="stable")
    transformed = (kx.project(xv) / scale)[:, perm]

    def recover(gamma: np.ndarray) -> np.ndarray:
        gamma = np.asarray(gamma, dtype=float)
        g = np.empty_like(gamma)
        g[perm] = gamma
        return kx.recover(g / scale[:, None])

    return ReductionPlan(kind="general-eigen",
                         transformed=transformed,
                         n_unpenalized=int((~pos).sum()),
                         _recover_fn=recover)


def _fit_reduced(plan: ReductionPlan, y, ky, r: int) -> tuple:
    """Solve the residual ridge/partial problem of a ReductionPlan."""
    m = plan.transformed.shape[1]
    u = plan.n_unpenalized
    if u == 0:
        inner = rcca_kernel_fit(plan.transformed, y, 1.0, ky, r)
    else:
        inner = prcca_kernel_fit(plan.transformed[:, :m - u],
                                 plan.transformed[:, m - u:], y, 1.0, ky, r)
    return plan.recover(inner.alpha), inner


def general_fit(x, y, kx_matrix, ky=None, r: int = 1) -> FittedCCA:
    """CCA under an arbitrary PSD penalty matrix on the x side.

    Factors the penalty (one eigendecomposition of the p-by-p matrix the
    caller already holds), reduces to ridge/partial form, and solves in n
    dimensions.
    """
    fact = factor_general_penalty(kx_matrix)
    xv = centered_values(x, "x")
    if fact.m != xv.shape[1]:
        raise ShapeError(
            f"penalty matrix is {fact.m} wide, data has {xv.shape[1]} columns"
        )
    plan = general_reduce(xv, fact)
    if plan.n_unpenalized >= xv.shape[0]:
        raise IdentifiabilityError(
            f"penalty has {plan.n_unpenalized} zero eigenvalues but only "
            f"{xv.shape[0]} rows; the unpenalized subspace is too large"
        )
    alpha, inner = _fit_reduced(plan, y, ky, r)
    beta = inner.beta.copy()
    apply_sign_convention(alpha, beta)
    return FittedCCA(alpha, beta, inner.correlations,
                     method_tag="general-eigen",
                     hyperparameters={"zero_multiplicity": plan.n_unpenalized},
                     x_names=column_names_of(x, "x"),
                     y_names=column_names_of(y, "y"),
                     solver_dim=inner.solver_dim)


def grcca_fit(x, y, groups: GroupStructure, lam1: float, mu1: float,
              ky=None, r: int = 1, path: str = "auto") -> FittedCCA:
    """Group-penalized CCA via either of two equivalent reductions.

    eigen path:  blockwise analytic factorization of the group penalty
                 (unit vector + Helmert complement per group), then the
                 general reduction;
    extend path: append one scaled group-mean column per group and solve a
                 ridge (mu1 > 0) or partial (mu1 == 0, mean columns free)
                 problem on the width p+K extension.

    Both recover original-space coefficients and agree to solver accuracy.
    """
    xv, yv = _xy(x, y)
    n, p = xv.shape
    if groups.total != p:
        raise ShapeError(
            f"group structure covers {groups.total} features, data has {p}"
        )
    if lam1 <= 0:
        raise UnsupportedPenalty(
            "group penalty requires lambda1 > 0; the lambda1 = 0 reduction "
            "is not supported"
        )
    if mu1 < 0:
        raise DomainError("mu1 must be nonnegative")
    if path == "auto":
        path = "extend" if p + groups.n_groups < 4 * (n + groups.n_groups) else "eigen"
    if path not in ("eigen", "extend"):
        raise DomainError(f"unknown grcca path {path!r}")

    if path == "eigen":
        fact = factor_group_penalty(PenaltySpec.group(lam1, mu1, groups))
        plan = general_reduce(xv, fact)
        if plan.n_unpenalized >= n:
            raise IdentifiabilityError(
                f"mu1 = 0 leaves {groups.n_groups} unpenalized group means "
                f"but only {n} rows"
            )
        alpha, inner = _fit_reduced(plan, yv, ky, r)
        tag = "grcca-eigen"
    else:
        b = mu1 if mu1 > 0 else 1.0
        ext, layout = extended_blocks(xv, groups, lam1, b)
        if mu1 > 0:
            inner = rcca_kernel_fit(ext, yv, 1.0, ky, r)
            ext_coef = inner.alpha
        else:
            if groups.n_groups >= n:
                raise IdentifiabilityError(
                    f"mu1 = 0 leaves {groups.n_groups} unpenalized group "
                    f"means but only {n} rows"
                )
            dev_idx = np.concatenate([dev for _, dev, _ in layout])
            mean_idx = np.array([mc for _, _, mc in layout])
            inner = prcca_kernel_fit(ext[:, dev_idx], ext[:, mean_idx],
                                     yv, 1.0, ky, r)
            ext_coef = np.empty_like(inner.alpha)
            ext_coef[dev_idx] = inner.alpha[:dev_idx.size]
            ext_coef[mean_idx] = inner.alpha[dev_idx.size:]
        # invert the extension: per group, alpha_k combines the centered
        # deviation coordinates and the shared mean coordinate
        alpha = np.empty((p, ext_coef.shape[1]))
        for idx, dev_cols, mean_col in layout:
            g = ext_coef[dev_cols]
            delta = ext_coef[mean_col]
            alpha[idx] = (g - g.mean(axis=0)) / np.sqrt(lam1) \
                + delta / np.sqrt(idx.size * b)
        tag = "grcca-extend"

    beta = inner.beta.copy()
    apply_sign_convention(alpha, beta)
    return FittedCCA(alpha, beta, inner.correlations,
                     method_tag=tag,
                     hyperparameters={"lambda1": float(lam1),
                                      "mu1": float(mu1)},
                     x_names=column_names_of(x, "x"),
                     y_names=column_names_of(y, "y"),
                     solver_dim=inner.solver_dim)


@dataclass(eq=False)
class MethodSpec:
    """A fitting method with fixed structure; hyperparameters vary per call.

    ``method`` is one of rcca / prcca / grcca / general. For the general
    method the stored base matrix is scaled by lambda1 at fit time, so
    hyperparameter grids apply uniformly across methods.
    """

    method: str
    groups_x: GroupStructure | None = None
    unpenalized_x: np.ndarray | None = None
    penalty_x: np.ndarray | None = None
    groups_y: GroupStructure | None = None
    grcca_path: str = "auto"

    def __post_init__(self):
        if self.method not in ("rcca", "prcca", "grcca", "general"):
            raise DomainError(f"unknown method {self.method!r}")
        if self.method == "prcca" and self.unpenalized_x is None:
            raise DomainError("prcca needs the unpenalized feature set")
        if self.method == "grcca" and self.groups_x is None:
            raise DomainError("grcca needs an x-side group structure")
        if self.method == "general" and self.penalty_x is None:
            raise DomainError("general needs an x-side penalty matrix")

    def y_penalty(self, q: int, lam2: float, mu2: float):
        if mu2 != 0.0 and self.groups_y is None:
            raise DomainError("mu2 requires a y-side group structure")
        if self.groups_y is not None and (lam2 != 0.0 or mu2 != 0.0):
            return build_penalty_matrix(
                PenaltySpec.group(lam2, mu2, self.groups_y), q)
        if lam2 != 0.0:
            return lam2 * np.eye(q)
        return None

    def fit(self, x, y, lam1: float, mu1: float = 0.0, lam2: float = 0.0,
            mu2: float = 0.0, r: int = 1) -> FittedCCA:
        yv = centered_values(y, "y")
        ky = self.y_penalty(yv.shape[1], lam2, mu2)
        if self.method != "grcca" and mu1 != 0.0:
            raise DomainError(f"mu1 only applies to grcca, not {self.method}")
        if self.method == "rcca":
            fit = rcca_kernel_fit(x, y, lam1, ky, r)
        elif self.method == "prcca":
            fit = fit_partial(x, y, self.unpenalized_x, lam1, ky, r)
        elif self.method == "grcca":
            fit = grcca_fit(x, y, self.groups_x, lam1, mu1, ky, r,
                            path=self.grcca_path)
        else:
            fit = general_fit(x, y, lam1 * self.penalty_x, ky, r)
            fit.hyperparameters["lambda1"] = float(lam1)
        fit.hyperparameters.update(
            {"lambda2": float(lam2), "mu2": float(mu2), "method": self.method}
        )
        return fit


@dataclass(eq=False)
class CoefficientPath:
    """Coefficients of the first canonical pair along a penalty sweep."""

    grid: list[tuple[float, float]]
    fits: list[FittedCCA | None]
    errors: list[str | None]
    feature_names: list[str]
    group_labels: list[str]

    def rows(self):
        """Long-format rows (lambda, mu, feature, group, coefficient)."""
        out = []
        for (lam, mu), fit in zip(self.grid, self.fits):
            if fit is None:
                continue
            coef = fit.alpha[:, 0]
            for j, name in enumerate(self.feature_names):
                out.append((lam, mu, name, self.group_labels[j],
                            float(coef[j])))
        return out

    def alpha_at(self, i: int) -> np.ndarray:
        fit = self.fits[i]
        if fit is None:
            raise CCARegError(
                f"grid point {self.grid[i]} failed: {self.errors[i]}"
            )
        return fit.alpha[:, 0]


def _sorted_grid(values, what: str) -> list[float]:
    vals = [float(v) for v in np.atleast_1d(values)]
    if not vals:
        raise DomainError(f"{what} grid is empty")
    if any(b < a for a, b in zip(vals, vals[1:])):
        raise DomainError(f"{what} grid must be sorted ascending")
    return vals


def coefficient_path(x, y, kind: str, lam_grid, mu=0.0,
                     groups: GroupStructure | None = None,
                     unpenalized=None, ky=None, r: int = 1,
                     path: str = "auto") -> CoefficientPath:
    """Fit one model per grid point and align signs along the sweep.

    ``mu`` may be a scalar or (for grcca) its own sorted grid; points are
    visited lambda-major. Consecutive fits are sign-flipped to maximize
    the cosine with the previous point so paths are continuous. A failed
    point is recorded with its reason, not fatal.
    """
    lam_vals = _sorted_grid(lam_grid, "lambda")
    mu_vals = _sorted_grid(mu, "mu")
    if kind not in ("rcca", "prcca", "grcca"):
        raise DomainError(f"unknown path kind {kind!r}")
    if kind != "grcca" and mu_vals != [0.0]:
        raise DomainError("mu sweeps only apply to grcca")
    spec = MethodSpec(
        kind,
        groups_x=groups if kind == "grcca" else None,
        unpenalized_x=unpenalized if kind == "prcca" else None,
        grcca_path=path,
    )
    names = column_names_of(x, "x")
    labels = [groups.label_of(j) for j in range(len(names))] if groups \
        else [""] * len(names)
    grid = [(lam, m) for lam in lam_vals for m in mu_vals]
    fits: list[FittedCCA | None] = []
    errors: list[str | None] = []
    prev: FittedCCA | None = None
    for lam, m in grid:
        try:
            fit = spec.fit(x, y, lam, m, r=r)
        except CCARegError as exc:
            fits.append(None)
            errors.append(str(exc))
            continue
        if prev is not None:
            for c in range(fit.alpha.shape[1]):
                if prev.alpha[:, c] @ fit.alpha[:, c] < 0:
                    fit.alpha[:, c] *= -1.0
                    fit.beta[:, c] *= -1.0
        fits.append(fit)
        errors.append(None)
        prev = fit
    return CoefficientPath(grid, fits, errors, names, labels)
