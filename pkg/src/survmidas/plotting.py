"""Static figures rendered to files (SVG by default)."""
from __future__ import annotations

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402

# fixed metadata keeps SVG output byte-stable across runs
_SVG_META = {"Date": None, "Creator": None}
plt.rcParams["svg.hashsalt"] = "survmidas"


def _save(fig, path):
    path = str(path)
    meta = _SVG_META if path.endswith(".svg") else None
    fig.savefig(path, metadata=meta)
    plt.close(fig)


def plot_roc(curves, path, labels=None, title=None):
    """Draw one or more ROC curves with their AUCs in the legend."""
    if not isinstance(curves, (list, tuple)):
        curves = [curves]
    labels = labels or [f"curve {i + 1}" for i in range(len(curves))]
    fig, ax = plt.subplots(figsize=(4.5, 4.5))
    ax.plot([0, 1], [0, 1], color="0.7", lw=0.8, ls="--")
    for curve, label in zip(curves, labels):
        pts = curve.points
        x = [0.0] + [p[0] for p in pts] + [1.0]
        y = [0.0] + [p[1] for p in pts] + [1.0]
        ax.step(x, y, where="post", lw=1.2, label=f"{label} (AUC {curve.auc:.3f})")
    ax.set_xlim(0, 1)
    ax.set_ylim(0, 1)
    ax.set_xlabel("1 - specificity")
    ax.set_ylabel("sensitivity")
    ax.set_title(title or f"ROC at t = {curves[0].t:.3g}")
    ax.legend(loc="lower right", fontsize=8)
    fig.tight_layout()
    _save(fig, path)


def plot_auc_summary(rows, path, title=None):
    """Mean AUC per method with error bars.

    ``rows`` are dicts with ``method``, ``auc`` and either ``lo``/``hi``
    interval ends or ``sd``; an optional ``group`` key splits the x axis.
    """
    groups = sorted({r.get("group", "") for r in rows}, key=str)
    methods = list(dict.fromkeys(r["method"] for r in rows))
    width = 0.8 / max(len(methods), 1)
    fig, ax = plt.subplots(figsize=(1.6 + 1.4 * len(groups), 3.5))
    for j, m in enumerate(methods):
        xs, ys, err = [], [], [[], []]
        for g, grp in enumerate(groups):
            for r in rows:
                if r["method"] == m and r.get("group", "") == grp:
                    xs.append(g + (j - (len(methods) - 1) / 2) * width)
                    ys.append(r["auc"])
                    lo = r.get("lo", r["auc"] - r.get("sd", 0.0))
                    hi = r.get("hi", r["auc"] + r.get("sd", 0.0))
                    err[0].append(r["auc"] - lo)
                    err[1].append(hi - r["auc"])
        ax.errorbar(xs, ys, yerr=err, fmt="o", capsize=3, label=m)
    ax.set_xticks(range(len(groups)))
    ax.set_xticklabels([str(g) for g in groups])
    ax.set_ylabel("AUC")
    if title:
        ax.set_title(title)
    ax.legend(fontsize=8)
    fig.tight_layout()
    _save(fig, path)
