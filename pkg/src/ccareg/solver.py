"""Direct covariance-space solver for penalized CCA and score evaluation.

The penalized problem maximizes

    a' Sxy b / sqrt(a' (Sxx + Kx) a) / sqrt(b' (Syy + Ky) b)

over coefficient vectors a, b, with later pairs orthogonal to earlier ones
under the penalized metrics. The solution is read off the SVD of

    (Sxx + Kx)^{-1/2}  Sxy  (Syy + Ky)^{-1/2},

whose singular values are the attained (penalty-modified) correlations.
Inverse square roots come from a symmetric eigendecomposition with an
explicit positive-definiteness check, so singular inputs fail loudly
instead of being silently pseudo-inverted.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field

import numpy as np
import scipy.linalg

from .data import CovarianceBlock, centered_values, matrix_values
from .errors import (
    DegenerateDirection,
    DegenerateVariate,
    DomainError,
    NumericalConsistencyError,
    ShapeError,
    SingularCovariance,
)

# min eigenvalue must exceed PD_RTOL * trace / m for a covariance to count
# as positive definite
PD_RTOL = 1e-10

# roundoff slack before a correlation > 1 is treated as a real error
CORR_SLACK = 1e-8


def _as_square(mat, name: str) -> np.ndarray:
    if isinstance(mat, CovarianceBlock):
        mat = mat.matrix
    arr = np.asarray(mat, dtype=float)
    if arr.ndim != 2 or arr.shape[0] != arr.shape[1]:
        raise ShapeError(f"{name} must be a square matrix, got {arr.shape}")
    return arr


def inverse_sqrt_pd(mat: np.ndarray, side: str) -> np.ndarray:
    """M^{-1/2} of a symmetric positive definite matrix.

    Raises SingularCovariance naming the side and the offending minimum
    eigenvalue when M fails the relative PD threshold.
    """
    sym = (mat + mat.T) / 2.0
    w, v = np.linalg.eigh(sym)
    floor = PD_RTOL * max(float(np.trace(sym)), 0.0) / sym.shape[0]
    if w[0] <= floor:
        raise SingularCovariance(side, w[0])
    return (v / np.sqrt(w)) @ v.T


def apply_sign_convention(alpha: np.ndarray, beta: np.ndarray) -> None:
    """Flip (alpha_i, beta_i) pairs so alpha's max-|entry| is positive.

    Ties break toward the lowest index; flipping both vectors of a pair
    leaves the attained correlation unchanged. In-place.
    """
    for i in range(alpha.shape[1]):
        j = int(np.argmax(np.abs(alpha[:, i])))
        if alpha[j, i] < 0:
            alpha[:, i] *= -1.0
            beta[:, i] *= -1.0


@dataclass(eq=False)
class FittedCCA:
    """Canonical coefficients, correlations, and how they were computed.

    Invariants: each coefficient column has unit norm under its penalized
    metric, distinct columns are orthogonal under that metric, and the
    correlations are nonincreasing values in [0, 1]. ``solver_dim``
    records the x-side dimension of the system actually factored, which
    is how the reduction paths prove they never touched a p-by-p matrix.
    """

    alpha: np.ndarray
    beta: np.ndarray
    correlations: np.ndarray
    method_tag: str = "direct"
    hyperparameters: dict = field(default_factory=dict)
    x_names: list[str] | None = None
    y_names: list[str] | None = None
    solver_dim: int = 0

    @property
    def n_components(self) -> int:
        return self.alpha.shape[1]

    def to_dict(self) -> dict:
        return {
            "method": self.method_tag,
            "hyperparameters": self.hyperparameters,
            "components": self.n_components,
            "correlations": [float(v) for v in self.correlations],
            "x_features": self.x_names,
            "y_features": self.y_names,
            "alpha": [[float(v) for v in col] for col in self.alpha.T],
            "beta": [[float(v) for v in col] for col in self.beta.T],
            "solver_dim": int(self.solver_dim),
        }

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), sort_keys=True, indent=2) + "\n"

    @classmethod
    def from_dict(cls, doc: dict) -> "FittedCCA":
        return cls(
            alpha=np.array(doc["alpha"], dtype=float).T,
            beta=np.array(doc["beta"], dtype=float).T,
            correlations=np.array(doc["correlations"], dtype=float),
            method_tag=doc.get("method", "direct"),
            hyperparameters=doc.get("hyperparameters", {}),
            x_names=doc.get("x_features"),
            y_names=doc.get("y_features"),
            solver_dim=int(doc.get("solver_dim", 0)),
        )


def solve_direct(sxx, syy, sxy, kx=None, ky=None, r: int = 1,
                 x_names=None, y_names=None, method_tag: str = "direct",
                 hyperparameters: dict | None = None) -> FittedCCA:
    """Solve penalized CCA from covariance blocks by whitening + SVD.

    ``kx``/``ky`` are penalty matrices (None means zero). Requires the
    penalized self-covariances to be positive definite and r <= min(p, q).
    """
    sxx = _as_square(sxx, "sxx")
    syy = _as_square(syy, "syy")
    sxy_arr = sxy.matrix if isinstance(sxy, CovarianceBlock) else np.asarray(sxy, float)
    p, q = sxx.shape[0], syy.shape[0]
    if sxy_arr.shape != (p, q):
        raise ShapeError(
            f"sxy must be {p}x{q} to match sxx and syy, got {sxy_arr.shape}"
        )
    if not 1 <= r <= min(p, q):
        raise DomainError(f"need 1 <= r <= min(p, q) = {min(p, q)}, got {r}")
    mx = sxx if kx is None else sxx + _as_square(kx, "kx")
    my = syy if ky is None else syy + _as_square(ky, "ky")
    isx = inverse_sqrt_pd(mx, "X")
    isy = inverse_sqrt_pd(my, "Y")
    u, s, vt = scipy.linalg.svd(isx @ sxy_arr @ isy, full_matrices=False)
    if s.size and s[0] > 1.0 + CORR_SLACK:
        raise NumericalConsistencyError(
            f"leading correlation {s[0]!r} exceeds 1 beyond roundoff"
        )
    correlations = np.clip(s[:r], 0.0, 1.0)
    alpha = isx @ u[:, :r]
    beta = isy @ vt[:r].T
    apply_sign_convention(alpha, beta)
    return FittedCCA(alpha, beta, correlations, method_tag,
                     hyperparameters or {}, x_names, y_names, solver_dim=p)


def modified_correlation(alpha, beta, sxx, syy, sxy, kx=None, ky=None) -> float:
    """The penalized objective at given coefficient vectors."""
    alpha = np.asarray(alpha, dtype=float).reshape(-1)
    beta = np.asarray(beta, dtype=float).reshape(-1)
    sxx = _as_square(sxx, "sxx")
    syy = _as_square(syy, "syy")
    sxy_arr = sxy.matrix if isinstance(sxy, CovarianceBlock) else np.asarray(sxy, float)
    mx = sxx if kx is None else sxx + _as_square(kx, "kx")
    my = syy if ky is None else syy + _as_square(ky, "ky")
    den_x = float(alpha @ mx @ alpha)
    den_y = float(beta @ my @ beta)
    if den_x <= 0.0 or den_y <= 0.0:
        raise DegenerateDirection(
            f"zero norm under the penalized metric (x: {den_x:.3e}, "
            f"y: {den_y:.3e})"
        )
    return float(alpha @ sxy_arr @ beta) / np.sqrt(den_x) / np.sqrt(den_y)


def plain_correlation(x, y, alpha, beta) -> float:
    """Pearson correlation of the variates X alpha and Y beta.

    Centering happens on the evaluation set itself, which is what makes
    this the right held-out score: it is invariant to how the training
    centering shifted the columns.
    """
    xv = matrix_values(x)
    yv = matrix_values(y)
    if xv.shape[0] != yv.shape[0]:
        raise ShapeError(
            f"row counts differ: {xv.shape[0]} vs {yv.shape[0]}"
        )
    u = xv @ np.asarray(alpha, dtype=float).reshape(-1)
    v = yv @ np.asarray(beta, dtype=float).reshape(-1)
    u = u - u.mean()
    v = v - v.mean()
    nu = float(np.linalg.norm(u))
    nv = float(np.linalg.norm(v))
    if nu == 0.0 or nv == 0.0:
        raise DegenerateVariate(
            "a variate is constant on the evaluation set"
        )
    return float(u @ v) / (nu * nv)


def covariance_triple(x, y):
    """(Sxx, Syy, Sxy) with the 1/n convention from centered arrays."""
    xv = centered_values(x, "x")
    yv = centered_values(y, "y")
    if xv.shape[0] != yv.shape[0]:
        raise ShapeError(
            f"row counts differ: {xv.shape[0]} vs {yv.shape[0]}"
        )
    n = xv.shape[0]
    sxx = xv.T @ xv / n
    syy = yv.T @ yv / n
    sxy = xv.T @ yv / n
    return (sxx + sxx.T) / 2.0, (syy + syy.T) / 2.0, sxy
