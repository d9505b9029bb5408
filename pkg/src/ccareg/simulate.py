"""Group-structured Gaussian data generator and the method-comparison study.

The generator draws (Y, Xc) jointly Gaussian with identity marginals and a
constant cross block sigma_xy^2, then fills each of the K equally sized
feature groups with its centroid plus isotropic noise:

    (Y, Xc) ~ N(0, [[I_q, 11' s2], [11' s2, I_K]]),   s2 = sigma_xy^2
    X_k | Xc_k ~ N(1 Xc_k, sigma_x^2 I)

Sampling uses a counter-based generator (Philox) keyed by (seed, stream):
stream 2r draws replicate r's training set and stream 2r+1 its test set,
so replicates are reproducible independently of execution order. Within a
stream the draw order is fixed: the n-by-(q+K) joint block first, then the
n-by-p feature noise.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass, replace

import numpy as np

from ._threads import thread_map
from .data import DataMatrix
from .errors import CCARegError, DomainError, InvalidCovariance
from .penalties import GroupStructure
from .reduction import MethodSpec
from .solver import plain_correlation

METHODS = ("rcca", "prcca", "grcca-mu0", "grcca-sparse")


def default_lambda_grid() -> tuple:
    return tuple(10.0 ** e for e in range(-5, 6))


def default_mu_grid() -> tuple:
    return tuple(10.0 ** e for e in range(-4, 2))


@dataclass(frozen=True)
class SimulationConfig:
    n: int = 10
    p: int = 15
    q: int = 3
    n_groups: int = 5
    sigma_x: float = 1.0
    sigma_xy: float = 0.5
    seed: int = 0
    replicates: int = 1000

    def __post_init__(self):
        if self.n < 2:
            raise DomainError("need n >= 2")
        if self.p < 1 or self.q < 1 or self.n_groups < 1:
            raise DomainError("p, q and the group count must be positive")
        if self.p % self.n_groups != 0:
            raise DomainError(
                f"group count {self.n_groups} must divide p={self.p} "
                f"(equal group sizes)"
            )
        if self.sigma_x < 0:
            raise DomainError("sigma_x must be nonnegative")
        if not 0.0 <= self.sigma_xy < 1.0:
            raise DomainError("sigma_xy must lie in [0, 1)")
        if self.seed < 0:
            raise DomainError("seed must be nonnegative")
        if self.replicates < 1:
            raise DomainError("need at least one replicate")

    @property
    def group_size(self) -> int:
        return self.p // self.n_groups

    def joint_covariance(self) -> np.ndarray:
        """Covariance of the stacked (Y, Xc) vector."""
        q, k = self.q, self.n_groups
        sigma = np.eye(q + k)
        sigma[:q, q:] = self.sigma_xy ** 2
        sigma[q:, :q] = self.sigma_xy ** 2
        return sigma

    def group_structure(self) -> GroupStructure:
        return GroupStructure.from_sizes(
            [self.group_size] * self.n_groups,
            [f"g{k + 1}" for k in range(self.n_groups)],
        )


def _rng(config: SimulationConfig, stream: int) -> np.random.Generator:
    key = np.array([config.seed, stream], dtype=np.uint64)
    return np.random.Generator(np.random.Philox(key=key))


def generate(config: SimulationConfig, stream: int = 0,
             with_centroids: bool = False):
    """Draw one (x, y) dataset; optionally also return the centroid draws."""
    sigma = config.joint_covariance()
    eigs = np.linalg.eigvalsh(sigma)
    if eigs[0] <= 0.0:
        raise InvalidCovariance(eigs[0])
    chol = np.linalg.cholesky(sigma)
    rng = _rng(config, stream)
    joint = rng.standard_normal((config.n, config.q + config.n_groups)) @ chol.T
    yv = joint[:, :config.q]
    centroids = joint[:, config.q:]
    noise = rng.standard_normal((config.n, config.p))
    xv = np.repeat(centroids, config.group_size, axis=1) \
        + config.sigma_x * noise
    x_names = [f"x{j + 1}" for j in range(config.p)]
    y_names = [f"y{j + 1}" for j in range(config.q)]
    x = DataMatrix(xv, x_names, centered=False, source="simulated")
    y = DataMatrix(yv, y_names, centered=False, source="simulated")
    if with_centroids:
        return x, y, centroids
    return x, y


def _method_specs(config: SimulationConfig) -> dict[str, MethodSpec]:
    groups = config.group_structure()
    # the unpenalized features are the first feature of each group
    unpen = np.arange(config.n_groups) * config.group_size
    return {
        "rcca": MethodSpec("rcca"),
        "prcca": MethodSpec("prcca", unpenalized_x=unpen),
        "grcca-mu0": MethodSpec("grcca", groups_x=groups),
        "grcca-sparse": MethodSpec("grcca", groups_x=groups),
    }


def _method_grid(method: str, lam_grid, mu_grid) -> list[tuple[float, float]]:
    if method == "grcca-sparse":
        return [(lam, mu) for lam in lam_grid for mu in mu_grid]
    return [(lam, 0.0) for lam in lam_grid]


@dataclass(eq=False)
class ExperimentResult:
    """Train/test correlations per replicate, method, and grid point."""

    config: SimulationConfig
    methods: tuple
    lam_grid: tuple
    mu_grid: tuple
    rows: list  # (replicate, method, lam, mu, train_cor, test_cor)
    errors: list  # (replicate, method, lam, mu, reason)

    def summary(self) -> list:
        """(method, lam, mu, mean_train, se_train, mean_test, se_test)."""
        acc: dict[tuple, list] = {}
        for rep, method, lam, mu, train, test in self.rows:
            acc.setdefault((method, lam, mu), []).append((train, test))
        out = []
        for method in self.methods:
            for lam, mu in _method_grid(method, self.lam_grid, self.mu_grid):
                pairs = np.array(acc.get((method, lam, mu), []), dtype=float)
                if pairs.size == 0:
                    out.append((method, lam, mu, np.nan, np.nan, np.nan, np.nan))
                    continue
                stats = []
                for col in (0, 1):
                    vals = pairs[:, col]
                    vals = vals[~np.isnan(vals)]
                    if vals.size == 0:
                        stats += [np.nan, np.nan]
                    else:
                        se = (np.std(vals, ddof=1) / np.sqrt(vals.size)
                              if vals.size > 1 else np.nan)
                        stats += [float(np.mean(vals)), se]
                out.append((method, lam, mu, *stats))
        return out

    def best_points(self) -> dict[str, tuple[float, float]]:
        """Per method, the grid point maximizing the mean test correlation."""
        best: dict[str, tuple] = {}
        for method, lam, mu, _, _, mean_test, _ in self.summary():
            if np.isnan(mean_test):
                continue
            cur = best.get(method)
            if cur is None or mean_test > cur[0]:
                best[method] = (mean_test, lam, mu)
        return {m: (lam, mu) for m, (_, lam, mu) in best.items()}

    def coefficient_snapshot(self) -> list:
        """(method, lam, mu, feature, group, coefficient) at each method's
        best point, fitted on the replicate-0 training set."""
        specs = _method_specs(self.config)
        groups = self.config.group_structure()
        x, y = generate(self.config, stream=0)
        xc = x.values - x.values.mean(axis=0)
        yc = y.values - y.values.mean(axis=0)
        rows = []
        for method in self.methods:
            point = self.best_points().get(method)
            if point is None:
                continue
            lam, mu = point
            fit = specs[method].fit(xc, yc, lam, mu, r=1)
            for j, name in enumerate(x.column_names):
                rows.append((method, lam, mu, name, groups.label_of(j),
                             float(fit.alpha[j, 0])))
        return rows

    def write_rows_csv(self, fh) -> None:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(
            ["replicate", "method", "lambda1", "mu1", "train_cor", "test_cor"]
        )
        for rep, method, lam, mu, train, test in self.rows:
            writer.writerow([
                rep, method, repr(lam), repr(mu),
                "" if np.isnan(train) else repr(float(train)),
                "" if np.isnan(test) else repr(float(test)),
            ])

    def write_summary_csv(self, fh) -> None:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(
            ["method", "lambda1", "mu1",
             "mean_train", "se_train", "mean_test", "se_test"]
        )
        for method, lam, mu, mt, st, me, se in self.summary():
            writer.writerow([
                method, repr(lam), repr(mu),
                "" if np.isnan(mt) else repr(float(mt)),
                "" if np.isnan(st) else repr(float(st)),
                "" if np.isnan(me) else repr(float(me)),
                "" if np.isnan(se) else repr(float(se)),
            ])

    def write_snapshot_csv(self, fh) -> None:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(
            ["method", "lambda1", "mu1", "feature", "group", "coefficient"]
        )
        for method, lam, mu, feature, group, coef in self.coefficient_snapshot():
            writer.writerow([method, repr(lam), repr(mu), feature, group,
                             repr(coef)])


def run_experiment(config: SimulationConfig, methods=METHODS,
                   lam_grid=None, mu_grid=None, threads: int = 1,
                   test_n: int | None = None) -> ExperimentResult:
    """Fit every method over its grid on fresh train/test pairs.

    Per replicate, an independent training and test set are drawn (test
    size defaults to n), each method is fitted on the centered training
    set at every grid point, and the first-pair correlation is evaluated
    on both sets. Failures are recorded per cell, never fatal.
    """
    methods = tuple(methods)
    unknown = [m for m in methods if m not in METHODS]
    if unknown:
        raise DomainError(f"unknown method(s) {unknown}; choose from {METHODS}")
    lam_grid = tuple(float(v) for v in (lam_grid or default_lambda_grid()))
    mu_grid = tuple(float(v) for v in (mu_grid or default_mu_grid()))
    specs = _method_specs(config)
    test_config = config if test_n is None else replace(config, n=test_n)

    def one_replicate(rep: int):
        x_train, y_train = generate(config, stream=2 * rep)
        x_test, y_test = generate(test_config, stream=2 * rep + 1)
        xc = x_train.values - x_train.values.mean(axis=0)
        yc = y_train.values - y_train.values.mean(axis=0)
        rows, errors = [], []
        for method in methods:
            spec = specs[method]
            for lam, mu in _method_grid(method, lam_grid, mu_grid):
                try:
                    fit = spec.fit(xc, yc, lam, mu, r=1)
                    a, b = fit.alpha[:, 0], fit.beta[:, 0]
                    train = plain_correlation(xc, yc, a, b)
                    test = plain_correlation(x_test.values, y_test.values, a, b)
                    rows.append((rep, method, lam, mu, train, test))
                except CCARegError as exc:
                    rows.append((rep, method, lam, mu, np.nan, np.nan))
                    errors.append((rep, method, lam, mu, str(exc)))
        return rows, errors

    outcomes = thread_map(one_replicate, range(config.replicates), threads)
    rows, errors = [], []
    for rep_rows, rep_errors in outcomes:
        rows.extend(rep_rows)
        errors.extend(rep_errors)
    return ExperimentResult(config, methods, lam_grid, mu_grid, rows, errors)
