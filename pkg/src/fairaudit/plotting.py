"""Static SVG figures: projection scatters and ROC curves.

Figures are written with a fixed hash salt and no date stamp so repeated
runs produce identical files.
"""

from __future__ import annotations

from pathlib import Path
from typing import Mapping, Sequence

import numpy as np

from fairaudit.embedding_store import AGE_BINS, AnnotatedCohort, Gender, Race

# 800 x 800 SVG user units (points)
FIG_SIZE_IN = 800 / 72

PALETTES = {
    "race": dict(zip([r.value for r in Race], ["#1f77b4", "#d62728", "#2ca02c", "#ff7f0e"])),
    "gender": dict(zip([g.value for g in Gender], ["#1f77b4", "#d62728"])),
    "age": dict(zip(AGE_BINS, ["#440154", "#414487", "#2a788e", "#22a884", "#7ad151", "#fde725"])),
}

RC = {
    "font.family": "DejaVu Sans",
    "font.size": 12,
    "axes.labelsize": 13,
    "legend.fontsize": 11,
    "xtick.labelsize": 10,
    "ytick.labelsize": 10,
    "svg.hashsalt": "fairaudit",
    "svg.fonttype": "none",
}


def _pyplot():
    import matplotlib

    matplotlib.use("Agg")
    import matplotlib.pyplot as plt

    return plt


def attribute_labels(cohort: AnnotatedCohort, ids: Sequence[str], attribute: str) -> list[str]:
    if attribute == "race":
        return [cohort.annotations[s].race.value for s in ids]
    if attribute == "gender":
        return [cohort.annotations[s].gender.value for s in ids]
    if attribute in ("age", "age_bin"):
        return [AGE_BINS[cohort.annotations[s].age_bin] for s in ids]
    raise ValueError(f"unknown attribute {attribute!r}")


def _save(fig, path: Path) -> Path:
    path = Path(path)
    tmp = path.with_name(path.name + ".tmp")
    fig.savefig(tmp, format="svg", metadata={"Date": None})
    tmp.replace(path)
    return path


def scatter_by_attribute(coords: np.ndarray, labels: Sequence[str], attribute: str, path, title: str = "") -> Path:
    """One marker per point, colored by group, legend in palette order."""
    plt = _pyplot()
    key = "age" if attribute == "age_bin" else attribute
    palette = PALETTES[key]
    labels = np.asarray(labels)
    with plt.rc_context(RC):
        fig, ax = plt.subplots(figsize=(FIG_SIZE_IN, FIG_SIZE_IN))
        for name, color in palette.items():
            sel = labels == name
            if sel.any():
                ax.scatter(coords[sel, 0], coords[sel, 1], s=10, c=color, label=name, linewidths=0, alpha=0.8)
        ax.set_xticks([])
        ax.set_yticks([])
        ax.set_title(title or f"2-D projection by {key}")
        ax.legend(loc="best", markerscale=2, frameon=False)
        fig.tight_layout()
        out = _save(fig, path)
        plt.close(fig)
    return out


def roc_curves(curves: Mapping[str, tuple[np.ndarray, np.ndarray]], path, fpr_marker: float | None = None) -> Path:
    """ROC curves on a log FPR axis; ``curves`` maps label -> (fpr, tpr)."""
    plt = _pyplot()
    palette = {**PALETTES["race"], "all": "#7f7f7f"}
    with plt.rc_context(RC):
        fig, ax = plt.subplots(figsize=(FIG_SIZE_IN, FIG_SIZE_IN))
        for name, (fpr, tpr) in curves.items():
            ok = fpr > 0
            ax.step(fpr[ok], tpr[ok], where="post", label=name, color=palette.get(name))
        if fpr_marker:
            ax.axvline(fpr_marker, color="black", lw=0.8, ls="--")
        ax.set_xscale("log")
        ax.set_xlabel("False positive rate")
        ax.set_ylabel("True positive rate")
        ax.set_ylim(0, 1.01)
        ax.legend(loc="lower right", frameon=False)
        fig.tight_layout()
        out = _save(fig, path)
        plt.close(fig)
    return out
