"""Pair scoring, ROC, TPR at fixed FPR and cross-validated accuracy.

Scores are always oriented so that higher means "same identity"; the
euclidean metric is stored negated.  A pair is predicted genuine iff its
score is >= the threshold.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass
from pathlib import Path
from typing import Hashable, Sequence

import numpy as np

from fairaudit.embedding_store import AnnotatedCohort
from fairaudit.errors import InputError
from fairaudit.protocol import VerificationPair, pair_rows

COSINE = "cosine"
EUCLIDEAN = "euclidean_as_similarity"
METRICS = (COSINE, EUCLIDEAN)


@dataclass(frozen=True, eq=False)
class ScoredPairs:
    scores: np.ndarray
    genuine: np.ndarray
    metric: str = COSINE
    folds: np.ndarray | None = None

    def __post_init__(self):
        scores = np.asarray(self.scores, dtype=np.float64)
        genuine = np.asarray(self.genuine, dtype=bool)
        if scores.shape != genuine.shape or scores.ndim != 1:
            raise InputError(f"scores {scores.shape} and genuine flags {genuine.shape} must be aligned 1-D arrays")
        if not np.isfinite(scores).all():
            raise InputError("scores must be finite")
        if self.metric not in METRICS:
            raise InputError(f"unknown metric {self.metric!r}")
        object.__setattr__(self, "scores", scores)
        object.__setattr__(self, "genuine", genuine)
        if self.folds is not None:
            folds = np.asarray(self.folds, dtype=np.int64)
            if folds.shape != scores.shape:
                raise InputError("fold assignment must align with scores")
            object.__setattr__(self, "folds", folds)

    def __len__(self) -> int:
        return len(self.scores)

    def subset(self, mask: np.ndarray) -> "ScoredPairs":
        folds = None if self.folds is None else self.folds[mask]
        return ScoredPairs(self.scores[mask], self.genuine[mask], self.metric, folds)


@dataclass(frozen=True)
class ConfusionCounts:
    tp: int = 0
    fp: int = 0
    tn: int = 0
    fn: int = 0

    @property
    def total(self) -> int:
        return self.tp + self.fp + self.tn + self.fn

    @property
    def positives(self) -> int:
        return self.tp + self.fn

    @property
    def negatives(self) -> int:
        return self.fp + self.tn

    @property
    def accuracy(self) -> float | None:
        return (self.tp + self.tn) / self.total if self.total else None

    @property
    def tpr(self) -> float | None:
        return self.tp / self.positives if self.positives else None

    @property
    def fpr(self) -> float | None:
        return self.fp / self.negatives if self.negatives else None

    def __add__(self, other: "ConfusionCounts") -> "ConfusionCounts":
        return ConfusionCounts(self.tp + other.tp, self.fp + other.fp, self.tn + other.tn, self.fn + other.fn)


@dataclass(frozen=True, eq=False)
class RocCurve:
    thresholds: np.ndarray
    fpr: np.ndarray
    tpr: np.ndarray
    n_genuine: int
    n_impostor: int


@dataclass(frozen=True)
class KFoldResult:
    mean: float
    std: float
    per_fold: tuple[float, ...]
    thresholds: tuple[float, ...]
    folds: tuple[int, ...]


def score_pairs(pairs: Sequence[VerificationPair], cohort: AnnotatedCohort, metric: str = COSINE) -> ScoredPairs:
    if metric == "euclidean":
        metric = EUCLIDEAN
    if metric not in METRICS:
        raise InputError(f"unknown metric {metric!r}")
    ia, ib = pair_rows(pairs, cohort)
    va = cohort.embeddings.vectors[ia]
    vb = cohort.embeddings.vectors[ib]
    if metric == COSINE:
        na = np.linalg.norm(va, axis=1)
        nb = np.linalg.norm(vb, axis=1)
        zero = (na == 0) | (nb == 0)
        if zero.any():
            k = int(np.argmax(zero))
            bad = pairs[k].a if na[k] == 0 else pairs[k].b
            raise InputError(f"zero vector {bad!r} has no cosine similarity")
        scores = np.einsum("ij,ij->i", va, vb) / (na * nb)
    else:
        diff = va - vb
        scores = -np.sqrt(np.einsum("ij,ij->i", diff, diff))
    genuine = np.fromiter((p.genuine for p in pairs), dtype=bool, count=len(pairs))
    folds = np.fromiter((p.fold for p in pairs), dtype=np.int64, count=len(pairs))
    return ScoredPairs(scores, genuine, metric, folds)


def confusion(scores: np.ndarray, genuine: np.ndarray, threshold: float) -> ConfusionCounts:
    pred = scores >= threshold
    tp = int(np.count_nonzero(pred & genuine))
    fp = int(np.count_nonzero(pred & ~genuine))
    n_gen = int(np.count_nonzero(genuine))
    return ConfusionCounts(tp=tp, fp=fp, tn=len(scores) - n_gen - fp, fn=n_gen - tp)


def predict(sp: ScoredPairs, threshold: float) -> ConfusionCounts:
    return confusion(sp.scores, sp.genuine, threshold)


def roc(sp: ScoredPairs) -> RocCurve:
    """Exact empirical ROC over the sorted unique scores.

    The first point uses threshold +inf (nothing accepted); each following
    threshold is one unique score, so tied scores move together.
    """
    n_gen = int(np.count_nonzero(sp.genuine))
    n_imp = len(sp) - n_gen
    if n_gen == 0 or n_imp == 0:
        raise InputError(f"ROC needs both classes (genuine={n_gen}, impostor={n_imp})")
    order = np.argsort(-sp.scores, kind="stable")
    s = sp.scores[order]
    g = sp.genuine[order]
    tp = np.cumsum(g)
    fp = np.cumsum(~g)
    # last index of each run of equal scores
    ends = np.flatnonzero(np.append(s[1:] != s[:-1], True))
    thresholds = np.concatenate([[np.inf], s[ends]])
    tpr = np.concatenate([[0.0], tp[ends] / n_gen])
    fpr = np.concatenate([[0.0], fp[ends] / n_imp])
    return RocCurve(thresholds, fpr, tpr, n_gen, n_imp)


def _operating_index(curve: RocCurve, target_fpr: float) -> int:
    if not 0.0 < target_fpr < 1.0:
        raise InputError(f"target FPR must lie in (0, 1), got {target_fpr}")
    ok = np.flatnonzero(curve.fpr <= target_fpr)
    # fpr and tpr are non-decreasing: the last admissible point has the largest tpr
    return int(ok[-1])


def tpr_at_fpr(curve: RocCurve, target_fpr: float) -> float:
    """TPR at the largest empirical FPR not exceeding the target (no interpolation)."""
    return float(curve.tpr[_operating_index(curve, target_fpr)])


def threshold_at_fpr(curve: RocCurve, target_fpr: float) -> float:
    return float(curve.thresholds[_operating_index(curve, target_fpr)])


def candidate_thresholds(scores: np.ndarray) -> np.ndarray:
    """Midpoints between consecutive sorted unique scores plus -inf and +inf."""
    u = np.unique(scores)
    return np.concatenate([[-np.inf], (u[:-1] + u[1:]) / 2.0, [np.inf]])


def best_threshold(scores: np.ndarray, genuine: np.ndarray) -> tuple[float, float]:
    """Threshold maximizing accuracy; ties go to the smallest threshold.

    Returns ``(threshold, accuracy)``.
    """
    scores = np.asarray(scores, dtype=np.float64)
    genuine = np.asarray(genuine, dtype=bool)
    if len(scores) == 0:
        raise InputError("cannot pick a threshold on an empty pair set")
    cand = candidate_thresholds(scores)
    gen = np.sort(scores[genuine])
    imp = np.sort(scores[~genuine])
    tp = len(gen) - np.searchsorted(gen, cand, side="left")
    tn = np.searchsorted(imp, cand, side="left")
    correct = tp + tn
    k = int(np.argmax(correct))
    return float(cand[k]), float(correct[k] / len(scores))


def kfold_accuracy(sp: ScoredPairs, folds: np.ndarray | None = None, skip_degenerate: bool = False) -> KFoldResult:
    """Cross-validated verification accuracy.

    For each fold the max-accuracy threshold is chosen on the other folds
    and applied to the held-out fold.  The spread is the population
    standard deviation over folds.  With ``skip_degenerate`` folds whose
    test or training part lacks a class are skipped instead of raising.
    """
    folds = sp.folds if folds is None else np.asarray(folds, dtype=np.int64)
    if folds is None:
        raise InputError("no fold assignment available")
    fold_ids = np.unique(folds)
    if len(fold_ids) < 2:
        raise InputError(f"k-fold accuracy needs at least 2 folds, got {len(fold_ids)}")
    accs, thresholds, used = [], [], []
    for f in fold_ids:
        test = folds == f
        train = ~test
        g_test, g_train = sp.genuine[test], sp.genuine[train]
        degenerate = g_test.all() or not g_test.any() or g_train.all() or not g_train.any()
        if degenerate:
            if skip_degenerate:
                continue
            raise InputError(f"fold {int(f)} (or its complement) contains a single class")
        thr, _ = best_threshold(sp.scores[train], g_train)
        c = confusion(sp.scores[test], g_test, thr)
        accs.append((c.tp + c.tn) / c.total)
        thresholds.append(thr)
        used.append(int(f))
    if not accs:
        raise InputError("no fold contains both classes")
    arr = np.array(accs)
    return KFoldResult(float(arr.mean()), float(arr.std()), tuple(accs), tuple(thresholds), tuple(used))


def annotator_fpr(pred: Sequence[Hashable], truth: Sequence[Hashable],
                  groups: Sequence[Hashable]) -> dict[tuple[Hashable, Hashable], float | None]:
    """One-vs-rest false-positive rate per (group, class).

    FPR_c = FP_c / (FP_c + TN_c) inside each group, with classes taken from
    the union of true and predicted labels.  ``None`` marks an undefined
    rate (no sample in the group whose true label differs from ``c``).
    """
    if not (len(pred) == len(truth) == len(groups)):
        raise InputError(f"length mismatch: pred={len(pred)}, truth={len(truth)}, groups={len(groups)}")
    if not groups:
        raise InputError("no samples given")
    classes = sorted(set(pred) | set(truth), key=str)
    group_order = list(dict.fromkeys(groups))
    table: dict[tuple[Hashable, Hashable], float | None] = {}
    for grp in group_order:
        rows = [(p, t) for p, t, g in zip(pred, truth, groups) if g == grp]
        for c in classes:
            neg = [p for p, t in rows if t != c]
            fp = sum(1 for p in neg if p == c)
            table[(grp, c)] = fp / len(neg) if neg else None
    return table


def load_annotator_csv(path) -> tuple[list[str], list[str], list[str]]:
    """Read ``sample_id,group,true_label,pred_label``; returns (pred, truth, groups)."""
    path = Path(path)
    if not path.exists():
        raise InputError(f"annotator file not found: {path}")
    pred, truth, groups = [], [], []
    with path.open(newline="", encoding="utf-8") as fh:
        reader = csv.reader(fh)
        header = next(reader, None)
        if header != ["sample_id", "group", "true_label", "pred_label"]:
            raise InputError(f"{path}: malformed header {header!r}")
        for row, rec in enumerate(reader, start=1):
            if not rec:
                continue
            if len(rec) != 4:
                raise InputError(f"{path}: expected 4 fields at row {row}")
            groups.append(rec[1])
            truth.append(rec[2])
            pred.append(rec[3])
    return pred, truth, groups
