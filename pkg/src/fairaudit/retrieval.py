"""All-vs-all retrieval: mean average precision per demographic slice.

Every sample is a document; queries are the slice members.  A document is
relevant when it shares the query's identity.  Ties in similarity are
broken by sample id so rankings are platform independent.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Sequence

import numpy as np

from fairaudit.embedding_store import AnnotatedCohort
from fairaudit.errors import InputError
from fairaudit.protocol import SubgroupSelector
from fairaudit.verification import COSINE, EUCLIDEAN, ScoredPairs, roc, tpr_at_fpr


@dataclass(frozen=True)
class RetrievalRecord:
    selector: SubgroupSelector
    mean_ap: float | None
    tpr: float | None
    fpr_target: float
    n_queries: int
    n_excluded: int
    n_trials: int


def average_precision(ranking: Sequence[bool]) -> float:
    """AP of a ranked relevance list: mean over relevant ranks k of hits@k / k."""
    rel = np.asarray(ranking, dtype=bool)
    hits = np.cumsum(rel)
    ranks = np.flatnonzero(rel) + 1
    if len(ranks) == 0:
        raise InputError("average precision is undefined without a relevant document")
    return math.fsum((hits[ranks - 1] / ranks).tolist()) / len(ranks)


def similarity_block(cohort: AnnotatedCohort, rows: np.ndarray, metric: str = COSINE) -> np.ndarray:
    """Similarity of the given query rows against every sample (higher = closer)."""
    x = cohort.embeddings.vectors
    q = x[rows]
    if metric == COSINE:
        norms = np.linalg.norm(x, axis=1)
        if (norms == 0).any():
            raise InputError("zero vector in cohort; cosine similarity undefined")
        return (q / norms[rows, None]) @ (x / norms[:, None]).T
    if metric in (EUCLIDEAN, "euclidean"):
        sq = np.einsum("ij,ij->i", x, x)
        d2 = sq[rows, None] + sq[None, :] - 2.0 * (q @ x.T)
        return -np.sqrt(np.maximum(d2, 0.0))
    raise InputError(f"unknown metric {metric!r}")


def _id_rank(cohort: AnnotatedCohort) -> np.ndarray:
    ids = np.array(cohort.ids, dtype=object)
    rank = np.empty(len(ids), dtype=np.int64)
    rank[np.argsort(ids, kind="stable")] = np.arange(len(ids))
    return rank


def query_average_precisions(cohort: AnnotatedCohort, query_rows: np.ndarray, metric: str = COSINE,
                             block: int = 512) -> tuple[np.ndarray, np.ndarray]:
    """AP per query row (NaN where no relevant document exists) and a validity mask."""
    ident = cohort.identity_codes
    id_rank = _id_rank(cohort)
    out = np.full(len(query_rows), np.nan)
    valid = np.zeros(len(query_rows), dtype=bool)
    for start in range(0, len(query_rows), block):
        rows = query_rows[start:start + block]
        sims = similarity_block(cohort, rows, metric)
        for k, (r, sim) in enumerate(zip(rows, sims)):
            docs = np.flatnonzero(np.arange(len(sim)) != r)
            order = docs[np.lexsort((id_rank[docs], -sim[docs]))]
            rel = ident[order] == ident[r]
            if rel.any():
                out[start + k] = average_precision(rel)
                valid[start + k] = True
    return out, valid


def map_by_slice(cohort: AnnotatedCohort, selectors: Sequence[SubgroupSelector], metric: str = COSINE,
                 fpr_target: float = 0.005, block: int = 512) -> dict[SubgroupSelector, RetrievalRecord]:
    """mAP and retrieval TPR at ``fpr_target`` per slice.

    Slice membership applies to the query only.  Every (query, document)
    pair counts as one verification trial for the TPR.
    """
    n = len(cohort)
    ident = cohort.identity_codes
    ap_all, valid_all = query_average_precisions(cohort, np.arange(n), metric, block)
    out = {}
    for sel in selectors:
        rows = np.flatnonzero(sel.sample_mask(cohort))
        if len(rows) == 0:
            out[sel] = RetrievalRecord(sel, None, None, fpr_target, 0, 0, 0)
            continue
        valid = valid_all[rows]
        mean_ap = math.fsum(ap_all[rows][valid].tolist()) / int(valid.sum()) if valid.any() else None
        scores, genuine = [], []
        for start in range(0, len(rows), block):
            chunk = rows[start:start + block]
            sims = similarity_block(cohort, chunk, metric)
            keep = np.ones_like(sims, dtype=bool)
            keep[np.arange(len(chunk)), chunk] = False
            scores.append(sims[keep])
            genuine.append((ident[chunk][:, None] == ident[None, :])[keep])
        sp = ScoredPairs(np.concatenate(scores), np.concatenate(genuine),
                         EUCLIDEAN if metric in (EUCLIDEAN, "euclidean") else COSINE)
        has_both = sp.genuine.any() and not sp.genuine.all()
        tpr = tpr_at_fpr(roc(sp), fpr_target) if has_both else None
        out[sel] = RetrievalRecord(sel, mean_ap, tpr, fpr_target, int(valid.sum()), int((~valid).sum()), len(sp))
    return out
