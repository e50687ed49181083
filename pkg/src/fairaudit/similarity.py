"""Inter- and intra-group cosine similarity statistics."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from fairaudit.embedding_store import AnnotatedCohort
from fairaudit.errors import InputError
from fairaudit.protocol import SubgroupSelector

CROSS_IDENTITY_ONLY = "cross_identity_only"
ALL_PAIRS = "all_pairs"
EXHAUSTIVE_CAP = 20_000_000


@dataclass(frozen=True)
class Moments:
    """Count, mean and sum of squared deviations; merges exactly like Chan et al."""

    n: int = 0
    mean: float = 0.0
    m2: float = 0.0

    @classmethod
    def of(cls, x: np.ndarray) -> "Moments":
        if len(x) == 0:
            return cls()
        mean = float(x.mean())
        return cls(len(x), mean, float(((x - mean) ** 2).sum()))

    def merge(self, other: "Moments") -> "Moments":
        if other.n == 0:
            return self
        if self.n == 0:
            return other
        n = self.n + other.n
        delta = other.mean - self.mean
        mean = self.mean + delta * other.n / n
        m2 = self.m2 + other.m2 + delta * delta * self.n * other.n / n
        return Moments(n, mean, m2)

    @property
    def std(self) -> float:
        return (self.m2 / self.n) ** 0.5 if self.n else float("nan")


def tree_merge(parts: list[Moments]) -> Moments:
    while len(parts) > 1:
        parts = [parts[i].merge(parts[i + 1]) if i + 1 < len(parts) else parts[i] for i in range(0, len(parts), 2)]
    return parts[0] if parts else Moments()


@dataclass(frozen=True)
class GroupSimilarityStats:
    selector: SubgroupSelector
    inter_mean: float | None
    inter_std: float | None
    intra_mean: float | None
    intra_std: float | None
    n_inter: int
    n_intra: int
    identity_policy: str
    sampled: bool


def _unit_rows(cohort: AnnotatedCohort) -> np.ndarray:
    x = cohort.embeddings.vectors
    norms = np.linalg.norm(x, axis=1)
    if (norms == 0).any():
        raise InputError("zero vector in cohort; cosine similarity undefined")
    return x / norms[:, None]


def _cross_moments(x: np.ndarray, a: np.ndarray, b: np.ndarray, chunk: int) -> Moments:
    parts = [Moments.of((x[a[s:s + chunk]] @ x[b].T).ravel()) for s in range(0, len(a), chunk)]
    return tree_merge(parts)


def _within_moments(x: np.ndarray, rows: np.ndarray, ident: np.ndarray, cross_only: bool, chunk: int) -> Moments:
    parts = []
    xr = x[rows]
    idr = ident[rows]
    for s in range(0, len(rows), chunk):
        sims = xr[s:s + chunk] @ xr.T
        i = np.arange(s, min(s + chunk, len(rows)))[:, None]
        keep = np.arange(len(rows))[None, :] > i
        if cross_only:
            keep &= idr[s:s + chunk, None] != idr[None, :]
        parts.append(Moments.of(sims[keep]))
    return tree_merge(parts)


def _sampled_cross(x, a, b, k, rng) -> Moments:
    i = a[rng.integers(0, len(a), size=k)]
    j = b[rng.integers(0, len(b), size=k)]
    return Moments.of(np.einsum("ij,ij->i", x[i], x[j]))


def _sampled_within(x, rows, ident, cross_only, k, rng) -> Moments:
    vals = []
    got = 0
    while got < k:
        i = rows[rng.integers(0, len(rows), size=k)]
        j = rows[rng.integers(0, len(rows), size=k)]
        ok = i != j
        if cross_only:
            ok &= ident[i] != ident[j]
        v = np.einsum("ij,ij->i", x[i[ok]], x[j[ok]])[: k - got]
        vals.append(v)
        got += len(v)
        if not ok.any():
            raise InputError("no admissible pair found while sampling")
    return Moments.of(np.concatenate(vals))


def group_similarity(cohort: AnnotatedCohort, sel: SubgroupSelector, identity_policy: str = CROSS_IDENTITY_ONLY,
                     cap: int = EXHAUSTIVE_CAP, sample_size: int = 1_000_000, seed: int = 0,
                     chunk: int = 1024) -> GroupSimilarityStats:
    """Cosine statistics within a group and across its boundary.

    Intra uses unordered pairs of members (same-identity pairs dropped under
    ``cross_identity_only``); inter uses every (member, non-member) pair.
    Standard deviations are population values.  Above ``cap`` pairs a
    seeded uniform sample of ``sample_size`` pairs replaces the exhaustive
    computation.
    """
    if identity_policy not in (CROSS_IDENTITY_ONLY, ALL_PAIRS):
        raise InputError(f"unknown identity policy {identity_policy!r}")
    mask = sel.sample_mask(cohort)
    members = np.flatnonzero(mask)
    others = np.flatnonzero(~mask)
    if len(members) < 2:
        raise InputError(f"group {sel.label!r} has {len(members)} samples; at least 2 are needed")
    if len(others) == 0:
        raise InputError(f"group {sel.label!r} has an empty complement")
    x = _unit_rows(cohort)
    ident = cohort.identity_codes
    cross_only = identity_policy == CROSS_IDENTITY_ONLY
    # fix the orientation of the cross product so a group and its complement
    # produce bit-identical inter statistics
    a, b = (members, others) if members[0] < others[0] else (others, members)
    n_cross = len(a) * len(b)
    n_within = len(members) * (len(members) - 1) // 2
    sampled = False
    if n_cross <= cap:
        inter = _cross_moments(x, a, b, chunk)
    else:
        inter = _sampled_cross(x, a, b, sample_size, np.random.default_rng([seed, 0]))
        sampled = True
    if n_within <= cap:
        intra = _within_moments(x, members, ident, cross_only, chunk)
    else:
        intra = _sampled_within(x, members, ident, cross_only, sample_size, np.random.default_rng([seed, 1]))
        sampled = True
    return GroupSimilarityStats(
        selector=sel,
        inter_mean=inter.mean if inter.n else None,
        inter_std=inter.std if inter.n else None,
        intra_mean=intra.mean if intra.n else None,
        intra_std=intra.std if intra.n else None,
        n_inter=inter.n,
        n_intra=intra.n,
        identity_policy=identity_policy,
        sampled=sampled,
    )
