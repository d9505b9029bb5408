"""Matplotlib rendering of the tables the CLI writes.

Every figure is derived purely from a result object (the same content as
the CSV next to it), drawn on the Agg backend with fixed size and dpi and
saved without volatile PNG metadata, so replaying a manifest reproduces
the image files byte for byte.
"""

from __future__ import annotations

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt  # noqa: E402
import numpy as np  # noqa: E402


def save_figure(fig, path) -> None:
    fig.savefig(path, dpi=120, metadata={"Software": None})
    plt.close(fig)


def _corr_axis(ax, values) -> None:
    vals = [v for v in values if v > 0]
    if vals and min(values) > 0:
        ax.set_xscale("log")
    ax.grid(True, alpha=0.3)


def cv_curves_figure(cv):
    """Train / validation mean correlation vs lambda1, one line per slice."""
    combos = []
    for pt in cv.points:
        key = (pt.mu1, pt.lam2, pt.mu2)
        if key not in combos:
            combos.append(key)
    fig, axes = plt.subplots(1, 2, figsize=(9.0, 3.6), sharey=True)
    for (mu1, lam2, mu2) in combos:
        idx = [i for i, pt in enumerate(cv.points)
               if (pt.mu1, pt.lam2, pt.mu2) == (mu1, lam2, mu2)]
        lams = [cv.points[i].lam1 for i in idx]
        label = None
        if len(combos) > 1:
            label = f"mu1={mu1:g}"
            if lam2 or mu2:
                label += f", lam2={lam2:g}, mu2={mu2:g}"
        for ax, mean, se in ((axes[0], cv.mean_train, cv.se_train),
                             (axes[1], cv.mean_val, cv.se_val)):
            m = mean[idx]
            s = np.nan_to_num(se[idx])
            ax.errorbar(lams, m, yerr=s, fmt="-o", ms=3, lw=1,
                        capsize=2, label=label)
    best = cv.best_point
    axes[1].axvline(best.lam1, color="grey", ls="--", lw=0.8)
    for ax, title in zip(axes, ("train", "validation")):
        _corr_axis(ax, [pt.lam1 for pt in cv.points])
        ax.set_title(title)
        ax.set_xlabel("lambda1")
    axes[0].set_ylabel("correlation")
    if len(combos) > 1:
        axes[1].legend(fontsize=7)
    fig.tight_layout()
    return fig


def ncv_figure(ncv):
    """Per-outer-fold tuning and test scores with mean and 1-SE bands."""
    fig, ax = plt.subplots(figsize=(5.0, 3.6))
    k = ncv.outer_k
    jitter = np.linspace(-0.08, 0.08, k)
    ax.plot(np.zeros(k) + jitter, ncv.inner_val, "o", ms=4, alpha=0.6)
    ax.plot(np.ones(k) + jitter, ncv.test_scores, "o", ms=4, alpha=0.6)
    ax.errorbar([0], [ncv.mean_inner_val], yerr=[ncv.se_inner_val],
                fmt="s", color="black", capsize=4, ms=6)
    ax.errorbar([1], [ncv.mean_test], yerr=[ncv.se_test],
                fmt="s", color="black", capsize=4, ms=6)
    ax.set_xticks([0, 1], ["cv.validation", "test"])
    ax.set_xlim(-0.5, 1.5)
    ax.set_ylabel("correlation")
    ax.grid(True, axis="y", alpha=0.3)
    ax.axhline(0.0, color="grey", lw=0.8)
    fig.tight_layout()
    return fig


def coefficient_path_figure(path):
    """First-pair coefficients along the sweep, colored by group."""
    lam_axis = len({lam for lam, _ in path.grid}) > 1
    xs, fits = [], []
    for (lam, mu), fit in zip(path.grid, path.fits):
        if fit is None:
            continue
        xs.append(lam if lam_axis else mu)
        fits.append(fit.alpha[:, 0])
    fig, ax = plt.subplots(figsize=(6.0, 3.8))
    if fits:
        coefs = np.column_stack(fits)
        labels = sorted(set(path.group_labels))
        cmap = plt.get_cmap("tab20")
        color_of = {lab: cmap(i % 20) for i, lab in enumerate(labels)}
        seen = set()
        for j in range(coefs.shape[0]):
            lab = path.group_labels[j]
            ax.plot(xs, coefs[j], lw=0.9, color=color_of[lab],
                    label=lab if lab and lab not in seen else None)
            seen.add(lab)
        if any(labels) and len(labels) <= 12:
            ax.legend(fontsize=7, ncol=2)
    _corr_axis(ax, xs)
    ax.set_xlabel("lambda1" if lam_axis else "mu1")
    ax.set_ylabel("coefficient")
    fig.tight_layout()
    return fig


def experiment_figure(result):
    """Mean train/test correlation vs lambda1 per method (1-SE bands).

    For the mu-swept group method the slice with mu1 closest to 1 is shown,
    matching the comparison the summary tables support.
    """
    summary = result.summary()
    fig, axes = plt.subplots(1, 2, figsize=(9.0, 3.6), sharey=True)
    for method in result.methods:
        rows = [r for r in summary if r[0] == method]
        if method == "grcca-sparse":
            mus = sorted({r[2] for r in rows})
            target = min(mus, key=lambda v: abs(v - 1.0))
            rows = [r for r in rows if r[2] == target]
        lams = [r[1] for r in rows]
        for ax, (mi, si) in zip(axes, ((3, 4), (5, 6))):
            mean = np.array([r[mi] for r in rows], dtype=float)
            se = np.nan_to_num(np.array([r[si] for r in rows], dtype=float))
            ax.errorbar(lams, mean, yerr=se, fmt="-o", ms=3, lw=1,
                        capsize=2, label=method)
    for ax, title in zip(axes, ("train", "test")):
        _corr_axis(ax, [r[1] for r in summary])
        ax.set_title(title)
        ax.set_xlabel("lambda1")
        ax.axhline(0.0, color="grey", lw=0.8)
    axes[0].set_ylabel("correlation")
    axes[1].legend(fontsize=7)
    fig.tight_layout()
    return fig


def snapshot_figure(rows, methods):
    """Best-point coefficients per method, colored by group."""
    fig, axes = plt.subplots(len(methods), 1,
                             figsize=(6.0, 1.9 * max(len(methods), 1)),
                             sharex=True, squeeze=False)
    for ax, method in zip(axes[:, 0], methods):
        sub = [r for r in rows if r[0] == method]
        labels = []
        for r in sub:
            if r[4] not in labels:
                labels.append(r[4])
        cmap = plt.get_cmap("tab10")
        color_of = {lab: cmap(i % 10) for i, lab in enumerate(labels)}
        xs = np.arange(len(sub))
        ax.bar(xs, [r[5] for r in sub],
               color=[color_of[r[4]] for r in sub])
        ax.axhline(0.0, color="grey", lw=0.8)
        ax.set_ylabel(method, fontsize=8)
        ax.grid(True, axis="y", alpha=0.3)
    axes[-1, 0].set_xlabel("feature")
    fig.tight_layout()
    return fig


def coefficients_figure(fit, group_labels=None):
    """Bar chart of the first-pair coefficients of a single fit."""
    coefs = fit.alpha[:, 0]
    p = coefs.size
    labels = list(group_labels) if group_labels is not None else [""] * p
    order = []
    for lab in labels:
        if lab not in order:
            order.append(lab)
    cmap = plt.get_cmap("tab20")
    color_of = {lab: cmap(i % 20) for i, lab in enumerate(order)}
    fig, ax = plt.subplots(figsize=(max(4.0, min(12.0, p * 0.12)), 3.2))
    ax.bar(np.arange(p), coefs, color=[color_of[lab] for lab in labels])
    ax.axhline(0.0, color="grey", lw=0.8)
    ax.set_xlabel("feature")
    ax.set_ylabel("coefficient")
    ax.set_title(f"first pair, correlation {fit.correlations[0]:.3f}")
    fig.tight_layout()
    return fig


def screening_figure(names, d_values, threshold):
    """Effect sizes per feature with the selection threshold."""
    d = np.asarray(d_values, dtype=float)
    finite = np.where(np.isfinite(d), d, np.nan)
    fig, ax = plt.subplots(figsize=(max(4.0, min(12.0, d.size * 0.12)), 3.2))
    ax.bar(np.arange(d.size), np.nan_to_num(finite),
           color=np.where(d > threshold, "tab:red", "tab:blue"))
    ax.axhline(threshold, color="grey", ls="--", lw=0.8)
    ax.set_xlabel("feature")
    ax.set_ylabel("effect size d")
    fig.tight_layout()
    return fig
