"""Brute-force reference metrics written straight from the definitions.

Nothing here reuses the vectorized metric code: thresholds are scanned one
by one and every count is a plain loop.  The only shared input is the list
of similarity scores, so that agreement with the main path can be checked
bit-for-bit.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Sequence

from fairaudit.embedding_store import AnnotatedCohort
from fairaudit.errors import InputError
from fairaudit.protocol import SubgroupSelector, VerificationPair

MAX_PAIRS = 2000


@dataclass
class OracleBundle:
    roc_points: list[tuple[float, float, float]]
    tpr_at_fpr: dict[float, float]
    best_threshold: float
    best_accuracy: float
    fold_thresholds: dict[int, float] = field(default_factory=dict)
    fold_accuracies: dict[int, float] = field(default_factory=dict)
    slice_counts: dict[str, tuple[int, int, int, int]] = field(default_factory=dict)


def cosine(u: Sequence[float], v: Sequence[float]) -> float:
    dot = math.fsum(a * b for a, b in zip(u, v))
    nu = math.sqrt(math.fsum(a * a for a in u))
    nv = math.sqrt(math.fsum(b * b for b in v))
    return dot / (nu * nv)


def euclidean(u: Sequence[float], v: Sequence[float]) -> float:
    return math.sqrt(math.fsum((a - b) ** 2 for a, b in zip(u, v)))


def recompute_scores(cohort: AnnotatedCohort, pairs: Sequence[VerificationPair], metric: str = "cosine") -> list[float]:
    vec = {sid: cohort.embeddings.vectors[i].tolist() for sid, i in cohort.index.items()}
    if metric == "cosine":
        return [cosine(vec[p.a], vec[p.b]) for p in pairs]
    return [-euclidean(vec[p.a], vec[p.b]) for p in pairs]


def count_at(scores: Sequence[float], genuine: Sequence[bool], threshold: float) -> tuple[int, int, int, int]:
    tp = fp = tn = fn = 0
    for s, g in zip(scores, genuine):
        accepted = s >= threshold
        if accepted and g:
            tp += 1
        elif accepted:
            fp += 1
        elif g:
            fn += 1
        else:
            tn += 1
    return tp, fp, tn, fn


def roc_points(scores: Sequence[float], genuine: Sequence[bool]) -> list[tuple[float, float, float]]:
    pos = sum(1 for g in genuine if g)
    neg = len(genuine) - pos
    if pos == 0 or neg == 0:
        raise InputError("oracle ROC needs both classes")
    out = []
    for t in [math.inf] + sorted(set(scores), reverse=True):
        tp, fp, _, _ = count_at(scores, genuine, t)
        out.append((t, fp / neg, tp / pos))
    return out


def tpr_at_fpr(scores: Sequence[float], genuine: Sequence[bool], target: float) -> float:
    best = 0.0
    for _, fpr, tpr in roc_points(scores, genuine):
        if fpr <= target and tpr > best:
            best = tpr
    return best


def best_accuracy(scores: Sequence[float], genuine: Sequence[bool]) -> tuple[float, float]:
    u = sorted(set(scores))
    candidates = [-math.inf] + [(u[k] + u[k + 1]) / 2.0 for k in range(len(u) - 1)] + [math.inf]
    best_t, best_correct = None, -1
    for t in candidates:
        tp, _, tn, _ = count_at(scores, genuine, t)
        if tp + tn > best_correct:
            best_t, best_correct = t, tp + tn
    return best_t, best_correct / len(scores)


def average_precision(relevance: Sequence[bool]) -> float:
    precisions = []
    for k in range(len(relevance)):
        if relevance[k]:
            hits = sum(1 for r in relevance[: k + 1] if r)
            precisions.append(hits / (k + 1))
    if not precisions:
        raise InputError("no relevant document")
    return math.fsum(precisions) / len(precisions)


def oracle_metrics(cohort: AnnotatedCohort, pairs: Sequence[VerificationPair], scores: Sequence[float] | None = None,
                   metric: str = "cosine", fpr_targets: Sequence[float] = (0.005, 0.01),
                   selectors: Sequence[SubgroupSelector] = (), threshold: float | None = None,
                   folds: bool = True) -> OracleBundle:
    if len(pairs) > MAX_PAIRS:
        raise InputError(f"oracle is limited to {MAX_PAIRS} pairs, got {len(pairs)}")
    scores = list(scores) if scores is not None else recompute_scores(cohort, pairs, metric)
    genuine = [p.genuine for p in pairs]
    pts = roc_points(scores, genuine)
    bt, bacc = best_accuracy(scores, genuine)
    bundle = OracleBundle(pts, {t: tpr_at_fpr(scores, genuine, t) for t in fpr_targets}, bt, bacc)
    for f in sorted(set(p.fold for p in pairs)) if folds else ():
        train = [(s, g) for s, g, p in zip(scores, genuine, pairs) if p.fold != f]
        test = [(s, g) for s, g, p in zip(scores, genuine, pairs) if p.fold == f]
        t, _ = best_accuracy([s for s, _ in train], [g for _, g in train])
        tp, _, tn, _ = count_at([s for s, _ in test], [g for _, g in test], t)
        bundle.fold_thresholds[f] = t
        bundle.fold_accuracies[f] = (tp + tn) / len(test)
    if selectors:
        thr = bt if threshold is None else threshold
        for sel in selectors:
            inside = []
            for s, g, p in zip(scores, genuine, pairs):
                ma = sel.matches(cohort.annotations[p.a])
                mb = sel.matches(cohort.annotations[p.b])
                if (ma and mb) if sel.policy == "both" else (ma or mb):
                    inside.append((s, g))
            bundle.slice_counts[sel.label] = count_at([s for s, _ in inside], [g for _, g in inside], thr)
    return bundle
