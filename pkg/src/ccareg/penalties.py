"""Penalty matrices for the regularized CCA family and their factorizations.

Penalty kinds
-------------
none      zero matrix (classical CCA)
ridge     lam * I
partial   lam * diag(indicator of the penalized set)
group     lam * (I - C) + mu * C,  C block-diagonal of 11'/p_k per group
general   an arbitrary symmetric PSD matrix

The group penalty bounds within-group variation of the coefficients
(through ``lam``) and between-group variation of the group means
(through ``mu``); ``lam == mu`` collapses it to a plain ridge.

The group factorization is assembled analytically per block from the unit
vector and a Helmert-contrast complement -- O(p^2) worst case with exact
eigenvalue multiplicities, never a numerical eigensolver. The blocks are
kept as blocks, so projecting data onto the basis never materializes a
p-by-p array.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass, field

import numpy as np

from .errors import DomainError, ParseError, ShapeError, StateError, UnsupportedPenalty
from .data import DataMatrix, centered_values, column_names_of


@dataclass(frozen=True, eq=False)
class GroupStructure:
    """A partition of feature indices into named, non-empty groups."""

    assignments: np.ndarray  # feature index -> group index, 0-based
    names: tuple[str, ...]

    def __post_init__(self):
        a = np.asarray(self.assignments, dtype=int).copy()
        if a.ndim != 1 or a.size == 0:
            raise ShapeError("assignments must be a non-empty 1-d sequence")
        k = len(self.names)
        if k == 0:
            raise ShapeError("need at least one group")
        if a.min() < 0 or a.max() >= k:
            raise ShapeError("group index out of range")
        counts = np.bincount(a, minlength=k)
        if (counts == 0).any():
            empty = self.names[int(np.argmin(counts))]
            raise ShapeError(f"group {empty!r} has no features")
        if len(set(self.names)) != k:
            raise ShapeError("group names must be unique")
        a.setflags(write=False)
        object.__setattr__(self, "assignments", a)
        object.__setattr__(self, "names", tuple(self.names))

    @classmethod
    def from_labels(cls, labels) -> "GroupStructure":
        """Build from per-feature labels; groups ordered by first appearance."""
        order: dict = {}
        for lab in labels:
            if lab not in order:
                order[lab] = len(order)
        a = np.array([order[lab] for lab in labels], dtype=int)
        return cls(a, tuple(str(lab) for lab in order))

    @classmethod
    def from_sizes(cls, sizes, names=None) -> "GroupStructure":
        """Contiguous blocks of the given sizes."""
        sizes = [int(s) for s in sizes]
        if any(s <= 0 for s in sizes):
            raise ShapeError("group sizes must be positive")
        if names is None:
            names = [f"g{k + 1}" for k in range(len(sizes))]
        a = np.repeat(np.arange(len(sizes)), sizes)
        return cls(a, tuple(names))

    @property
    def n_groups(self) -> int:
        return len(self.names)

    @property
    def total(self) -> int:
        return self.assignments.size

    @property
    def sizes(self) -> np.ndarray:
        return np.bincount(self.assignments, minlength=self.n_groups)

    def indices(self, k: int) -> np.ndarray:
        return np.flatnonzero(self.assignments == k)

    def label_of(self, j: int) -> str:
        return self.names[int(self.assignments[j])]


def load_group_map(path, feature_names) -> GroupStructure:
    """Read a two-column ``feature,group`` CSV and align it to the data.

    A header row reading ``feature,group`` (any case) is skipped. Every
    feature name in the data must be mapped exactly once.
    """
    mapping: dict[str, str] = {}
    with open(path, newline="", encoding="utf-8") as fh:
        for i, row in enumerate(csv.reader(fh)):
            if not any(cell.strip() for cell in row):
                continue
            if len(row) != 2:
                raise ParseError(
                    f"{path}: record {i + 1} has {len(row)} fields, expected 2"
                )
            feat, grp = row[0].strip(), row[1].strip()
            if i == 0 and feat.lower() == "feature" and grp.lower() == "group":
                continue
            if feat in mapping:
                raise ParseError(f"{path}: feature {feat!r} mapped twice")
            mapping[feat] = grp
    missing = [f for f in feature_names if f not in mapping]
    if missing:
        raise ShapeError(
            f"{path}: no group for feature(s) {missing[:5]}"
            + ("..." if len(missing) > 5 else "")
        )
    return GroupStructure.from_labels([mapping[f] for f in feature_names])


@dataclass(frozen=True)
class PenaltySpec:
    """Declarative description of a penalty on one side of the problem."""

    kind: str
    lam: float = 0.0
    mu: float = 0.0
    penalized: np.ndarray | None = None
    groups: GroupStructure | None = None
    matrix: np.ndarray | None = None

    def __post_init__(self):
        if self.kind not in ("none", "ridge", "partial", "group", "general"):
            raise DomainError(f"unknown penalty kind {self.kind!r}")
        if self.lam < 0 or self.mu < 0:
            raise DomainError("penalty factors must be nonnegative")
        if self.kind == "partial":
            if self.penalized is None:
                raise DomainError("partial penalty needs a penalized set")
            idx = np.unique(np.asarray(self.penalized, dtype=int))
            if idx.size and idx.min() < 0:
                raise ShapeError("penalized indices must be nonnegative")
            idx.setflags(write=False)
            object.__setattr__(self, "penalized", idx)
        if self.kind == "group" and self.groups is None:
            raise DomainError("group penalty needs a GroupStructure")
        if self.kind == "general":
            if self.matrix is None:
                raise DomainError("general penalty needs a matrix")
            m = np.array(self.matrix, dtype=float)
            if m.ndim != 2 or m.shape[0] != m.shape[1]:
                raise ShapeError("general penalty matrix must be square")
            scale = max(np.abs(m).max(), 1.0)
            if np.abs(m - m.T).max() > 1e-10 * scale:
                raise DomainError("general penalty matrix must be symmetric")
            m = (m + m.T) / 2.0
            w = np.linalg.eigvalsh(m)
            if w.min() < -1e-10 * max(np.trace(m), 1.0):
                raise DomainError(
                    f"general penalty matrix is not PSD "
                    f"(min eigenvalue {w.min():.3e})"
                )
            m.setflags(write=False)
            object.__setattr__(self, "matrix", m)

    @classmethod
    def none(cls):
        return cls("none")

    @classmethod
    def ridge(cls, lam):
        return cls("ridge", lam=float(lam))

    @classmethod
    def partial(cls, lam, penalized):
        return cls("partial", lam=float(lam), penalized=penalized)

    @classmethod
    def group(cls, lam, mu, groups):
        return cls("group", lam=float(lam), mu=float(mu), groups=groups)

    @classmethod
    def general(cls, matrix):
        return cls("general", matrix=matrix)


def build_penalty_matrix(spec: PenaltySpec, m: int) -> np.ndarray:
    """Materialize the m-by-m penalty matrix for a spec. Dense; small m only."""
    if spec.kind == "none":
        return np.zeros((m, m))
    if spec.kind == "ridge":
        return spec.lam * np.eye(m)
    if spec.kind == "partial":
        if spec.penalized.size and spec.penalized.max() >= m:
            raise ShapeError(
                f"penalized index {spec.penalized.max()} out of range for m={m}"
            )
        diag = np.zeros(m)
        diag[spec.penalized] = spec.lam
        return np.diag(diag)
    if spec.kind == "group":
        gs = spec.groups
        if gs.total != m:
            raise ShapeError(
                f"group structure covers {gs.total} features, data has {m}"
            )
        out = spec.lam * np.eye(m)
        for k in range(gs.n_groups):
            idx = gs.indices(k)
            out[np.ix_(idx, idx)] += (spec.mu - spec.lam) / idx.size
        return out
    # general
    if spec.matrix.shape[0] != m:
        raise ShapeError(
            f"penalty matrix is {spec.matrix.shape[0]}x{spec.matrix.shape[1]}, "
            f"data has {m} features"
        )
    return np.array(spec.matrix)


def helmert_complement(m: int) -> np.ndarray:
    """An m-by-(m-1) orthonormal basis of the complement of the ones vector.

    Column j has 1/sqrt(j(j+1)) on its first j entries and -j/sqrt(j(j+1))
    at entry j; closed form, no eigensolver, O(m^2).
    """
    if m < 2:
        raise DomainError(f"helmert_complement needs m >= 2, got {m}")
    out = np.zeros((m, m - 1))
    for j in range(1, m):
        s = 1.0 / np.sqrt(j * (j + 1.0))
        out[:j, j - 1] = s
        out[j, j - 1] = -j * s
    return out


@dataclass(eq=False)
class PenaltyFactorization:
    """Orthogonal factorization U diag(d) U' of a penalty matrix.

    The basis is stored either blockwise (group penalties: one dense block
    per group plus its feature indices and column offset), densely (general
    penalties), or implicitly as the identity (ridge/partial). Projection
    and recovery therefore cost O(sum p_k^2) for group penalties and never
    allocate a p-by-p array.
    """

    d: np.ndarray
    zero_tol: float
    blocks: list[tuple[np.ndarray, np.ndarray, int]] | None = None
    dense: np.ndarray | None = None

    def __post_init__(self):
        self.d = np.asarray(self.d, dtype=float)

    @property
    def m(self) -> int:
        return self.d.size

    @property
    def zero_multiplicity(self) -> int:
        return int((self.d < self.zero_tol).sum())

    def project(self, x: np.ndarray) -> np.ndarray:
        """Coordinates of the rows of x in the basis: x @ U."""
        x = np.asarray(x, dtype=float)
        if x.shape[1] != self.m:
            raise ShapeError(
                f"data has {x.shape[1]} columns, basis expects {self.m}"
            )
        if self.dense is not None:
            return x @ self.dense
        if self.blocks is None:
            return x.copy()
        out = np.empty_like(x)
        for rows, u_blk, off in self.blocks:
            out[:, off:off + u_blk.shape[1]] = x[:, rows] @ u_blk
        return out

    def recover(self, gamma: np.ndarray) -> np.ndarray:
        """Map basis-space coefficients back: U @ gamma."""
        gamma = np.asarray(gamma, dtype=float)
        if gamma.shape[0] != self.m:
            raise ShapeError(
                f"coefficients have {gamma.shape[0]} rows, basis expects {self.m}"
            )
        if self.dense is not None:
            return self.dense @ gamma
        if self.blocks is None:
            return gamma.copy()
        out = np.empty_like(gamma)
        for rows, u_blk, off in self.blocks:
            out[rows] = u_blk @ gamma[off:off + u_blk.shape[1]]
        return out

    def basis_matrix(self) -> np.ndarray:
        """Dense U; intended for tests and small m."""
        if self.dense is not None:
            return np.array(self.dense)
        if self.blocks is None:
            return np.eye(self.m)
        out = np.zeros((self.m, self.m))
        for rows, u_blk, off in self.blocks:
            out[rows, off:off + u_blk.shape[1]] = u_blk
        return out

    def reconstruct(self) -> np.ndarray:
        """Dense U diag(d) U'; intended for tests and small m."""
        u = self.basis_matrix()
        return (u * self.d) @ u.T


def factor_group_penalty(spec: PenaltySpec) -> PenaltyFactorization:
    """Analytic eigendecomposition of a group penalty.

    Per group of size p_k the basis is [1/sqrt(p_k) | Helmert complement]
    with eigenvalues [mu, lam, ..., lam]; the zero multiplicity is K when
    mu == 0. The lam == 0 case (no within-group homogeneity) is rejected
    as its reduction is not supported.
    """
    if spec.kind != "group":
        raise DomainError(f"expected a group penalty, got {spec.kind!r}")
    if spec.lam <= 0:
        raise UnsupportedPenalty(
            "group penalty requires lam > 0 (within-group homogeneity); "
            "lam = 0 is not supported"
        )
    gs = spec.groups
    d = np.empty(gs.total)
    blocks = []
    off = 0
    for k in range(gs.n_groups):
        idx = gs.indices(k)
        pk = idx.size
        cols = [np.full((pk, 1), 1.0 / np.sqrt(pk))]
        if pk >= 2:
            cols.append(helmert_complement(pk))
        u_blk = np.hstack(cols)
        blocks.append((idx, u_blk, off))
        d[off] = spec.mu
        d[off + 1:off + pk] = spec.lam
        off += pk
    tol = 1e-12 * (1.0 + spec.lam + spec.mu)
    return PenaltyFactorization(d=d, zero_tol=tol, blocks=blocks)


def factor_general_penalty(matrix: np.ndarray) -> PenaltyFactorization:
    """Numerical eigendecomposition of a general PSD penalty matrix."""
    spec = PenaltySpec.general(matrix)  # validates symmetry / PSD
    w, v = np.linalg.eigh(spec.matrix)
    w = np.clip(w, 0.0, None)
    tol = 1e-12 * (1.0 + float(w.max(initial=0.0)))
    return PenaltyFactorization(d=w, zero_tol=tol, dense=v)


def factor_penalty(spec: PenaltySpec, m: int) -> PenaltyFactorization:
    """Factor any penalty spec into U diag(d) U'."""
    if spec.kind == "none":
        return PenaltyFactorization(d=np.zeros(m), zero_tol=1e-12)
    if spec.kind == "ridge":
        tol = 1e-12 * (1.0 + spec.lam)
        return PenaltyFactorization(d=np.full(m, spec.lam), zero_tol=tol)
    if spec.kind == "partial":
        diag = np.diag(build_penalty_matrix(spec, m)).copy()
        tol = 1e-12 * (1.0 + spec.lam)
        return PenaltyFactorization(d=diag, zero_tol=tol)
    if spec.kind == "group":
        if spec.groups.total != m:
            raise ShapeError(
                f"group structure covers {spec.groups.total} features, "
                f"data has {m}"
            )
        return factor_group_penalty(spec)
    if spec.matrix.shape[0] != m:
        raise ShapeError(
            f"penalty matrix is {spec.matrix.shape[0]} wide, data has {m}"
        )
    return factor_general_penalty(spec.matrix)


def extended_blocks(x: np.ndarray, groups: GroupStructure, a: float, b: float):
    """Group-extension transform used by the group-penalty reduction.

    Per group k the output holds sqrt(1/a) * (X_k - rowmean) followed by
    one column sqrt(p_k / b) * rowmean, group-major. Returns the extended
    array plus per-group bookkeeping (feature indices, deviation column
    positions, mean column position).
    """
    if a <= 0 or b <= 0:
        raise DomainError("extension scales must be positive")
    x = np.asarray(x, dtype=float)
    n, p = x.shape
    if groups.total != p:
        raise ShapeError(
            f"group structure covers {groups.total} features, data has {p}"
        )
    k_groups = groups.n_groups
    ext = np.empty((n, p + k_groups))
    layout = []
    off = 0
    for k in range(k_groups):
        idx = groups.indices(k)
        pk = idx.size
        blk = x[:, idx]
        rowmean = blk.mean(axis=1)
        ext[:, off:off + pk] = (blk - rowmean[:, None]) / np.sqrt(a)
        ext[:, off + pk] = np.sqrt(pk / b) * rowmean
        layout.append((idx, np.arange(off, off + pk), off + pk))
        off += pk + 1
    return ext, layout


def extend_features(x: DataMatrix, groups: GroupStructure,
                    a: float, b: float) -> DataMatrix:
    """Public wrapper of :func:`extended_blocks` returning a DataMatrix.

    Column names keep the original feature names for the deviation columns
    and add one ``<group>.mean`` column per group.
    """
    vals = centered_values(x, "x")
    ext, layout = extended_blocks(vals, groups, a, b)
    base = column_names_of(x)
    names = [""] * ext.shape[1]
    for k, (idx, dev_cols, mean_col) in enumerate(layout):
        for i, j in zip(idx, dev_cols):
            names[j] = base[i]
        names[mean_col] = f"{groups.names[k]}.mean"
    return DataMatrix(ext, names, centered=True,
                      source=getattr(x, "source", None))
