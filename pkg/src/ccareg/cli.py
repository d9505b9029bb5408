"""Command-line surface: fit, cv, ncv, paths, simulate, screen, replay.

Every run resolves its flags into a plain config dict, writes its outputs
plus a ``manifest.json`` echoing that config and the package version, and
can be replayed bitwise from the manifest (``ccareg replay``). Thread
count is an execution detail, not configuration: outputs are identical
for any ``--threads``, so it is deliberately absent from the manifest.

Exit codes: 0 success, 2 usage or input errors, 3 numerical infeasibility
(for example a singular regularized covariance, with the remedy named in
the message).
"""

from __future__ import annotations

import argparse
import csv
import json
import math
import sys
from pathlib import Path

import numpy as np

from . import __version__
from ._threads import default_threads
from .data import (
    DataMatrix,
    center_columns,
    cohens_d,
    load_csv,
    regress_out,
)
from .errors import (
    CapacityError,
    CCARegError,
    DegenerateDirection,
    DegenerateVariate,
    DomainError,
    IdentifiabilityError,
    InvalidCovariance,
    NoFeasiblePoint,
    NumericalConsistencyError,
    SingularCovariance,
    SingularDesign,
)
from .penalties import load_group_map
from .reduction import MethodSpec, coefficient_path
from .selection import Grid, cross_validate, nested_cross_validate
from .simulate import (
    METHODS,
    SimulationConfig,
    default_lambda_grid,
    default_mu_grid,
    generate,
    run_experiment,
)
from . import report

USAGE_ERRORS = CCARegError
NUMERICAL_ERRORS = (
    SingularCovariance,
    IdentifiabilityError,
    InvalidCovariance,
    NoFeasiblePoint,
    SingularDesign,
    CapacityError,
    DegenerateDirection,
    DegenerateVariate,
    NumericalConsistencyError,
)


def parse_grid(text: str) -> list[float]:
    """Grid flag syntax: ``start:stop:log10`` (one point per decade,
    endpoints included) or a comma-separated value list."""
    text = text.strip()
    if ":" in text:
        parts = text.split(":")
        if len(parts) != 3 or parts[2] != "log10":
            raise DomainError(
                f"bad grid spec {text!r}; use start:stop:log10 or a "
                f"comma-separated list"
            )
        lo = math.log10(float(parts[0]))
        hi = math.log10(float(parts[1]))
        if hi < lo:
            raise DomainError("grid start must not exceed stop")
        steps = int(round(hi - lo))
        return [float(v) for v in np.logspace(lo, hi, steps + 1)]
    vals = sorted(float(v) for v in text.split(",") if v.strip())
    if not vals:
        raise DomainError(f"empty grid spec {text!r}")
    return vals


def _write_json(path: Path, doc: dict) -> None:
    path.write_text(json.dumps(doc, sort_keys=True, indent=2) + "\n",
                    encoding="utf-8")


def _write_manifest(out_dir: Path, command: str, config: dict,
                    outputs: list[str]) -> None:
    _write_json(out_dir / "manifest.json", {
        "tool": "ccareg",
        "version": __version__,
        "command": command,
        "config": config,
        "outputs": sorted(outputs),
    })


def _write_data_csv(path: Path, dm: DataMatrix) -> None:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(dm.column_names)
        for row in dm.values:
            writer.writerow([repr(float(v)) for v in row])


def _load_pair(config):
    x = load_csv(config["x"], config.get("has_header", True))
    y = load_csv(config["y"], config.get("has_header", True))
    return x, y


def _adjust_pair(config, x, y):
    if config.get("adjust"):
        z = load_csv(config["adjust"], config.get("has_header", True))
        x = regress_out(x, z)
        y = regress_out(y, z)
    return x, y


def _indices_from_tokens(tokens, names) -> np.ndarray:
    idx = []
    lookup = {name: j for j, name in enumerate(names)}
    for tok in tokens:
        tok = str(tok).strip()
        if tok in lookup:
            idx.append(lookup[tok])
            continue
        try:
            j = int(tok)
        except ValueError:
            raise DomainError(
                f"unknown feature {tok!r} in the unpenalized set"
            ) from None
        if not 0 <= j < len(names):
            raise DomainError(f"feature index {j} out of range")
        idx.append(j)
    return np.unique(np.array(idx, dtype=int))


def _resolve_method(config, x_raw: DataMatrix):
    """Build the MethodSpec; screening runs on the raw, uncentered data."""
    method = config["method"]
    groups = None
    if config.get("groups_x"):
        groups = load_group_map(config["groups_x"], x_raw.column_names)
    unpen = None
    if method == "prcca":
        if config.get("unpenalized_x"):
            unpen = _indices_from_tokens(config["unpenalized_x"],
                                         x_raw.column_names)
        elif config.get("cohens_d_threshold") is not None:
            d = cohens_d(x_raw)
            unpen = np.flatnonzero(d > float(config["cohens_d_threshold"]))
            if unpen.size == 0:
                raise DomainError(
                    "no feature exceeds the effect-size threshold; nothing "
                    "to leave unpenalized"
                )
        else:
            raise DomainError(
                "prcca needs --unpenalized-x or --cohens-d-threshold"
            )
    penalty_x = None
    if method == "general":
        if not config.get("penalty_x"):
            raise DomainError("general needs --penalty-x (a PSD matrix CSV)")
        penalty_x = load_csv(config["penalty_x"], has_header=False).values
    spec = MethodSpec(method, groups_x=groups, unpenalized_x=unpen,
                      penalty_x=penalty_x,
                      grcca_path=config.get("path", "auto"))
    return spec, groups


def _group_labels(groups, names):
    if groups is None:
        return None
    return [groups.label_of(j) for j in range(len(names))]


def _fit_summary_text(fit, group_labels) -> str:
    hp = fit.hyperparameters
    lines = [
        f"method: {hp.get('method', fit.method_tag)} ({fit.method_tag})",
        f"lambda1: {hp.get('lambda1')}",
        f"mu1: {hp.get('mu1', 0.0)}",
        f"lambda2: {hp.get('lambda2', 0.0)}",
        f"mu2: {hp.get('mu2', 0.0)}",
        f"components: {fit.n_components}",
        "correlations: " + " ".join(f"{v:.6f}" for v in fit.correlations),
        "",
        "top |coefficient| features (first pair):",
    ]
    coefs = fit.alpha[:, 0]
    names = fit.x_names or [f"x{j + 1}" for j in range(coefs.size)]
    order = np.argsort(-np.abs(coefs), kind="stable")[:10]
    for rank, j in enumerate(order, start=1):
        grp = group_labels[j] if group_labels else ""
        lines.append(f"  {rank:2d}  {names[j]}  {grp}  {coefs[j]:+.6f}")
    if group_labels:
        lines.append("")
        lines.append("per-group mean coefficient (first pair):")
        seen = []
        for lab in group_labels:
            if lab not in seen:
                seen.append(lab)
        for lab in seen:
            idx = [j for j, g in enumerate(group_labels) if g == lab]
            lines.append(f"  {lab}  {coefs[idx].mean():+.6f}")
    return "\n".join(lines) + "\n"


def run_fit(config: dict, out_dir: Path, threads: int) -> list[str]:
    x_raw, y_raw = _load_pair(config)
    spec, groups = _resolve_method(config, x_raw)
    x_raw, y_raw = _adjust_pair(config, x_raw, y_raw)
    x = center_columns(x_raw)
    y = center_columns(y_raw)
    fit = spec.fit(x, y,
                   float(config["lambda1"]),
                   float(config.get("mu1", 0.0)),
                   float(config.get("lambda2", 0.0)),
                   float(config.get("mu2", 0.0)),
                   r=int(config.get("ncomp", 1)))
    labels = _group_labels(groups, x.column_names)
    outputs = ["model.json", "summary.txt"]
    _write_json(out_dir / "model.json", fit.to_dict())
    (out_dir / "summary.txt").write_text(_fit_summary_text(fit, labels),
                                         encoding="utf-8")
    if config.get("figures", True):
        report.save_figure(report.coefficients_figure(fit, labels),
                           out_dir / "coefficients.png")
        outputs.append("coefficients.png")
    return outputs


def _grid_from_config(config) -> Grid:
    return Grid(
        lam1=tuple(config["grid_lambda1"]),
        mu1=tuple(config.get("grid_mu1") or (0.0,)),
        lam2=tuple(config.get("grid_lambda2") or (0.0,)),
        mu2=tuple(config.get("grid_mu2") or (0.0,)),
    )


def run_cv(config: dict, out_dir: Path, threads: int) -> list[str]:
    x_raw, y_raw = _load_pair(config)
    spec, groups = _resolve_method(config, x_raw)
    adjust_mode = config.get("adjust_mode", "pre")
    covariates = None
    if config.get("adjust") and adjust_mode == "fold":
        covariates = load_csv(config["adjust"],
                              config.get("has_header", True)).values
    else:
        x_raw, y_raw = _adjust_pair(config, x_raw, y_raw)
    grid = _grid_from_config(config)
    cv = cross_validate(x_raw.values, y_raw.values, spec, grid,
                        int(config["folds"]), int(config["seed"]),
                        threads=threads, covariates=covariates,
                        adjust=adjust_mode)
    outputs = ["cv_curves.csv", "cv_result.json", "model.json"]
    with open(out_dir / "cv_curves.csv", "w", newline="",
              encoding="utf-8") as fh:
        cv.write_csv(fh)
    _write_json(out_dir / "cv_result.json", cv.to_json_dict())
    best = cv.best_point
    x = center_columns(x_raw)
    y = center_columns(y_raw)
    fit = spec.fit(x, y, best.lam1, best.mu1, best.lam2, best.mu2, r=1)
    _write_json(out_dir / "model.json", fit.to_dict())
    if config.get("figures", True):
        report.save_figure(report.cv_curves_figure(cv),
                           out_dir / "cv_curves.png")
        outputs.append("cv_curves.png")
    return outputs


def run_ncv(config: dict, out_dir: Path, threads: int) -> list[str]:
    x_raw, y_raw = _load_pair(config)
    spec, groups = _resolve_method(config, x_raw)
    adjust_mode = config.get("adjust_mode", "pre")
    covariates = None
    if config.get("adjust") and adjust_mode == "fold":
        covariates = load_csv(config["adjust"],
                              config.get("has_header", True)).values
    else:
        x_raw, y_raw = _adjust_pair(config, x_raw, y_raw)
    grid = _grid_from_config(config)
    ncv = nested_cross_validate(
        x_raw.values, y_raw.values, spec, grid,
        int(config["outer_folds"]), int(config["inner_folds"]),
        int(config["seed"]), threads=threads, covariates=covariates,
        adjust=adjust_mode)
    outputs = ["ncv_scores.csv", "ncv_result.json"]
    with open(out_dir / "ncv_scores.csv", "w", newline="",
              encoding="utf-8") as fh:
        ncv.write_csv(fh)
    _write_json(out_dir / "ncv_result.json", ncv.to_json_dict())
    if config.get("figures", True):
        report.save_figure(report.ncv_figure(ncv),
                           out_dir / "ncv_scores.png")
        outputs.append("ncv_scores.png")
    return outputs


def run_paths(config: dict, out_dir: Path, threads: int) -> list[str]:
    x_raw, y_raw = _load_pair(config)
    spec, groups = _resolve_method(config, x_raw)
    x_raw, y_raw = _adjust_pair(config, x_raw, y_raw)
    x = center_columns(x_raw)
    y = center_columns(y_raw)
    mu_vals = config.get("grid_mu1") or [0.0]
    path = coefficient_path(
        x, y, config["method"], config["grid_lambda1"], mu=mu_vals,
        groups=groups if config["method"] == "grcca" else None,
        unpenalized=spec.unpenalized_x, path=config.get("path", "auto"))
    outputs = ["coefficient_path.csv"]
    with open(out_dir / "coefficient_path.csv", "w", newline="",
              encoding="utf-8") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(["lambda", "mu", "feature", "group", "coefficient"])
        for lam, mu, feature, group, coef in path.rows():
            writer.writerow([repr(lam), repr(mu), feature, group, repr(coef)])
    if config.get("figures", True):
        report.save_figure(report.coefficient_path_figure(path),
                           out_dir / "coefficient_paths.png")
        outputs.append("coefficient_paths.png")
    return outputs


def run_simulate(config: dict, out_dir: Path, threads: int) -> list[str]:
    sim = SimulationConfig(
        n=int(config["n"]), p=int(config["p"]), q=int(config["q"]),
        n_groups=int(config["groups"]),
        sigma_x=float(config["sigma_x"]),
        sigma_xy=float(config["sigma_xy"]),
        seed=int(config["seed"]),
        replicates=int(config["reps"]))
    result = run_experiment(
        sim, methods=tuple(config.get("methods") or METHODS),
        lam_grid=config.get("grid_lambda1") or default_lambda_grid(),
        mu_grid=config.get("grid_mu1") or default_mu_grid(),
        threads=threads,
        test_n=config.get("test_n"))
    outputs = ["experiment.csv", "summary.csv", "coefs.csv"]
    with open(out_dir / "experiment.csv", "w", newline="",
              encoding="utf-8") as fh:
        result.write_rows_csv(fh)
    with open(out_dir / "summary.csv", "w", newline="",
              encoding="utf-8") as fh:
        result.write_summary_csv(fh)
    with open(out_dir / "coefs.csv", "w", newline="",
              encoding="utf-8") as fh:
        result.write_snapshot_csv(fh)
    if config.get("dump_data"):
        x, y = generate(sim, stream=0)
        _write_data_csv(out_dir / "x.csv", x)
        _write_data_csv(out_dir / "y.csv", y)
        gs = sim.group_structure()
        with open(out_dir / "groups.csv", "w", newline="",
                  encoding="utf-8") as fh:
            writer = csv.writer(fh, lineterminator="\n")
            writer.writerow(["feature", "group"])
            for j, name in enumerate(x.column_names):
                writer.writerow([name, gs.label_of(j)])
        outputs += ["x.csv", "y.csv", "groups.csv"]
    if config.get("figures", True):
        report.save_figure(report.experiment_figure(result),
                           out_dir / "traintest.png")
        report.save_figure(
            report.snapshot_figure(result.coefficient_snapshot(),
                                   result.methods),
            out_dir / "coefs.png")
        outputs += ["traintest.png", "coefs.png"]
    return outputs


def run_screen(config: dict, out_dir: Path, threads: int) -> list[str]:
    x = load_csv(config["x"], config.get("has_header", True))
    threshold = float(config["threshold"])
    d = cohens_d(x)
    outputs = ["screening.csv"]
    with open(out_dir / "screening.csv", "w", newline="",
              encoding="utf-8") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(["feature", "cohens_d", "selected"])
        for name, value in zip(x.column_names, d):
            writer.writerow([name, repr(float(value)),
                             int(value > threshold)])
    if config.get("figures", True):
        report.save_figure(
            report.screening_figure(x.column_names, d, threshold),
            out_dir / "screening.png")
        outputs.append("screening.png")
    return outputs


RUNNERS = {
    "fit": run_fit,
    "cv": run_cv,
    "ncv": run_ncv,
    "paths": run_paths,
    "simulate": run_simulate,
    "screen": run_screen,
}


def _execute(command: str, config: dict, out_dir, threads: int) -> int:
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    outputs = RUNNERS[command](config, out_dir, threads)
    _write_manifest(out_dir, command, config, outputs)
    return 0


def _abspath(value):
    return str(Path(value).resolve()) if value else None


def _add_common(sub, with_y=True):
    sub.add_argument("--x", required=True, help="X observation CSV")
    if with_y:
        sub.add_argument("--y", required=True, help="Y observation CSV")
    sub.add_argument("--no-header", action="store_true",
                     help="input CSVs have no header row")
    sub.add_argument("--out", default=".", help="output directory")
    sub.add_argument("--threads", type=int, default=None,
                     help="worker threads (default CCAREG_THREADS or 1)")
    sub.add_argument("--no-figures", action="store_true",
                     help="skip figure rendering")


def _add_method(sub):
    sub.add_argument("--method", required=True,
                     choices=["rcca", "prcca", "grcca", "general"])
    sub.add_argument("--groups-x", help="feature,group CSV for grcca")
    sub.add_argument("--unpenalized-x",
                     help="comma list of feature names or indices (prcca)")
    sub.add_argument("--cohens-d-threshold", type=float,
                     help="screen the unpenalized set by effect size (prcca)")
    sub.add_argument("--penalty-x",
                     help="PSD penalty matrix CSV (general, no header)")
    sub.add_argument("--adjust", help="covariate CSV to regress out")
    sub.add_argument("--path", default="auto",
                     choices=["auto", "eigen", "extend"],
                     help="grcca reduction path")


def _method_config(args) -> dict:
    unpen = None
    if args.unpenalized_x:
        unpen = [tok.strip() for tok in args.unpenalized_x.split(",")]
    return {
        "x": _abspath(args.x),
        "y": _abspath(args.y),
        "has_header": not args.no_header,
        "method": args.method,
        "groups_x": _abspath(args.groups_x),
        "unpenalized_x": unpen,
        "cohens_d_threshold": args.cohens_d_threshold,
        "penalty_x": _abspath(args.penalty_x),
        "adjust": _abspath(args.adjust),
        "path": args.path,
        "figures": not args.no_figures,
    }


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="ccareg",
        description="Penalized canonical correlation analysis toolkit")
    parser.add_argument("--version", action="version",
                        version=f"ccareg {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)

    p_fit = sub.add_parser("fit", help="fit one model")
    _add_common(p_fit)
    _add_method(p_fit)
    p_fit.add_argument("--lambda1", type=float, required=True)
    p_fit.add_argument("--mu1", type=float, default=0.0)
    p_fit.add_argument("--lambda2", type=float, default=0.0)
    p_fit.add_argument("--mu2", type=float, default=0.0)
    p_fit.add_argument("--ncomp", type=int, default=1)

    p_cv = sub.add_parser("cv", help="k-fold cross-validated grid search")
    _add_common(p_cv)
    _add_method(p_cv)
    p_cv.add_argument("--grid-lambda1", required=True)
    p_cv.add_argument("--grid-mu1")
    p_cv.add_argument("--grid-lambda2")
    p_cv.add_argument("--grid-mu2")
    p_cv.add_argument("--folds", type=int, default=10)
    p_cv.add_argument("--seed", type=int, default=0)
    p_cv.add_argument("--adjust-mode", default="pre",
                      choices=["pre", "fold"])

    p_ncv = sub.add_parser("ncv", help="nested cross-validation")
    _add_common(p_ncv)
    _add_method(p_ncv)
    p_ncv.add_argument("--grid-lambda1", required=True)
    p_ncv.add_argument("--grid-mu1")
    p_ncv.add_argument("--grid-lambda2")
    p_ncv.add_argument("--grid-mu2")
    p_ncv.add_argument("--outer-folds", type=int, default=11)
    p_ncv.add_argument("--inner-folds", type=int, default=10)
    p_ncv.add_argument("--seed", type=int, default=0)
    p_ncv.add_argument("--adjust-mode", default="pre",
                       choices=["pre", "fold"])

    p_paths = sub.add_parser("paths", help="coefficient paths over a sweep")
    _add_common(p_paths)
    _add_method(p_paths)
    p_paths.add_argument("--grid-lambda1", required=True)
    p_paths.add_argument("--grid-mu1")

    p_sim = sub.add_parser("simulate",
                           help="group-structured comparison study")
    p_sim.add_argument("--n", type=int, default=10)
    p_sim.add_argument("--p", type=int, default=15)
    p_sim.add_argument("--q", type=int, default=3)
    p_sim.add_argument("--groups", type=int, default=5)
    p_sim.add_argument("--sigma-x", type=float, default=1.0)
    p_sim.add_argument("--sigma-xy", type=float, default=0.5)
    p_sim.add_argument("--reps", type=int, default=1000)
    p_sim.add_argument("--seed", type=int, default=0)
    p_sim.add_argument("--test-n", type=int, default=None)
    p_sim.add_argument("--methods",
                       help=f"comma list from {','.join(METHODS)}")
    p_sim.add_argument("--grid-lambda1")
    p_sim.add_argument("--grid-mu1")
    p_sim.add_argument("--dump-data", action="store_true",
                       help="also write the replicate-0 training set")
    p_sim.add_argument("--out", default=".")
    p_sim.add_argument("--threads", type=int, default=None)
    p_sim.add_argument("--no-figures", action="store_true")

    p_screen = sub.add_parser("screen",
                              help="effect-size screening of features")
    _add_common(p_screen, with_y=False)
    p_screen.add_argument("--threshold", type=float, default=0.3)

    p_replay = sub.add_parser("replay", help="re-run from a manifest")
    p_replay.add_argument("manifest")
    p_replay.add_argument("--out", default=None,
                          help="output directory (default: manifest's)")
    p_replay.add_argument("--threads", type=int, default=None)

    return parser


def _resolve_config(args) -> tuple[str, dict]:
    cmd = args.command
    if cmd == "fit":
        config = _method_config(args)
        config.update({
            "lambda1": args.lambda1, "mu1": args.mu1,
            "lambda2": args.lambda2, "mu2": args.mu2,
            "ncomp": args.ncomp,
        })
    elif cmd in ("cv", "ncv"):
        config = _method_config(args)
        config.update({
            "grid_lambda1": parse_grid(args.grid_lambda1),
            "grid_mu1": parse_grid(args.grid_mu1) if args.grid_mu1 else None,
            "grid_lambda2": parse_grid(args.grid_lambda2)
            if args.grid_lambda2 else None,
            "grid_mu2": parse_grid(args.grid_mu2) if args.grid_mu2 else None,
            "seed": args.seed,
            "adjust_mode": args.adjust_mode,
        })
        if cmd == "cv":
            config["folds"] = args.folds
        else:
            config["outer_folds"] = args.outer_folds
            config["inner_folds"] = args.inner_folds
    elif cmd == "paths":
        config = _method_config(args)
        config.update({
            "grid_lambda1": parse_grid(args.grid_lambda1),
            "grid_mu1": parse_grid(args.grid_mu1) if args.grid_mu1 else None,
        })
    elif cmd == "simulate":
        config = {
            "n": args.n, "p": args.p, "q": args.q, "groups": args.groups,
            "sigma_x": args.sigma_x, "sigma_xy": args.sigma_xy,
            "reps": args.reps, "seed": args.seed, "test_n": args.test_n,
            "methods": [m.strip() for m in args.methods.split(",")]
            if args.methods else None,
            "grid_lambda1": parse_grid(args.grid_lambda1)
            if args.grid_lambda1 else None,
            "grid_mu1": parse_grid(args.grid_mu1) if args.grid_mu1 else None,
            "dump_data": bool(args.dump_data),
            "figures": not args.no_figures,
        }
    elif cmd == "screen":
        config = {
            "x": _abspath(args.x),
            "has_header": not args.no_header,
            "threshold": args.threshold,
            "figures": not args.no_figures,
        }
    else:
        raise DomainError(f"unknown command {cmd!r}")
    return cmd, config


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    threads = getattr(args, "threads", None)
    if threads is None:
        threads = default_threads()
    try:
        if args.command == "replay":
            manifest_path = Path(args.manifest)
            doc = json.loads(manifest_path.read_text(encoding="utf-8"))
            out_dir = args.out if args.out else manifest_path.parent
            return _execute(doc["command"], doc["config"], out_dir, threads)
        command, config = _resolve_config(args)
        return _execute(command, config, args.out, threads)
    except NUMERICAL_ERRORS as exc:
        print(f"ccareg: {exc}", file=sys.stderr)
        return 3
    except USAGE_ERRORS as exc:
        print(f"ccareg: {exc}", file=sys.stderr)
        return 2
    except OSError as exc:
        print(f"ccareg: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
