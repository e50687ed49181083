"""Verification-pair protocols and demographic slicing."""

from __future__ import annotations

import csv
import itertools
import logging
from dataclasses import dataclass
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np

from fairaudit.embedding_store import AGE_BINS, AnnotatedCohort, Gender, Race, SampleAnnotation
from fairaudit.errors import InputError

log = logging.getLogger(__name__)

BOTH = "both"
EITHER = "either"
ATTRIBUTES = ("race", "gender", "age_bin")
ATTRIBUTE_VALUES = {
    "race": tuple(Race),
    "gender": tuple(Gender),
    "age_bin": tuple(range(len(AGE_BINS))),
}
PAIR_HEADER = ["sample_a", "sample_b", "genuine", "fold"]


@dataclass(frozen=True)
class VerificationPair:
    a: str
    b: str
    genuine: bool
    fold: int = 0

    def __post_init__(self):
        if self.a == self.b:
            raise InputError(f"pair of a sample with itself: {self.a!r}")
        if self.fold < 0:
            raise InputError(f"negative fold index {self.fold}")

    @property
    def key(self) -> frozenset:
        return frozenset((self.a, self.b))


@dataclass(frozen=True)
class SubgroupSelector:
    """Partial assignment over race, gender and age bin.

    ``policy`` decides how a *pair* qualifies: ``both`` needs both samples
    to match every set attribute, ``either`` needs at least one.
    """

    race: Race | None = None
    gender: Gender | None = None
    age_bin: int | None = None
    policy: str = BOTH
    everyone: bool = False

    def __post_init__(self):
        if self.race is not None:
            object.__setattr__(self, "race", Race(self.race))
        if self.gender is not None:
            object.__setattr__(self, "gender", Gender(self.gender))
        if self.age_bin is not None and not 0 <= self.age_bin < len(AGE_BINS):
            raise InputError(f"age_bin out of range: {self.age_bin}")
        if self.policy not in (BOTH, EITHER):
            raise InputError(f"unknown pair policy {self.policy!r}")
        unset = self.race is None and self.gender is None and self.age_bin is None
        if unset and not self.everyone:
            raise InputError("selector sets no attribute; use SubgroupSelector.all()")
        if self.everyone and not unset:
            raise InputError("the 'all' selector cannot also set attributes")

    @classmethod
    def all(cls, policy: str = BOTH) -> "SubgroupSelector":
        return cls(policy=policy, everyone=True)

    @property
    def label(self) -> str:
        if self.everyone:
            return "all"
        parts = []
        if self.race is not None:
            parts.append(self.race.value)
        if self.gender is not None:
            parts.append(self.gender.value)
        if self.age_bin is not None:
            parts.append(AGE_BINS[self.age_bin])
        return " ".join(parts)

    def with_policy(self, policy: str) -> "SubgroupSelector":
        return SubgroupSelector(self.race, self.gender, self.age_bin, policy, self.everyone)

    def matches(self, ann: SampleAnnotation) -> bool:
        return ((self.race is None or ann.race == self.race)
                and (self.gender is None or ann.gender == self.gender)
                and (self.age_bin is None or ann.age_bin == self.age_bin))

    def sample_mask(self, cohort: AnnotatedCohort) -> np.ndarray:
        mask = np.ones(len(cohort), dtype=bool)
        if self.race is not None:
            mask &= cohort.race_codes == list(Race).index(self.race)
        if self.gender is not None:
            mask &= cohort.gender_codes == list(Gender).index(self.gender)
        if self.age_bin is not None:
            mask &= cohort.age_bins == self.age_bin
        return mask


def pair_rows(pairs: Sequence[VerificationPair], cohort: AnnotatedCohort) -> tuple[np.ndarray, np.ndarray]:
    """Cohort row indices of each pair's two samples."""
    index = cohort.index
    try:
        ia = np.fromiter((index[p.a] for p in pairs), dtype=np.int64, count=len(pairs))
        ib = np.fromiter((index[p.b] for p in pairs), dtype=np.int64, count=len(pairs))
    except KeyError as exc:
        raise InputError(f"pair references unknown sample {exc.args[0]!r}") from None
    return ia, ib


def pair_mask(pairs: Sequence[VerificationPair], cohort: AnnotatedCohort, sel: SubgroupSelector) -> np.ndarray:
    ia, ib = pair_rows(pairs, cohort)
    members = sel.sample_mask(cohort)
    if sel.policy == BOTH:
        return members[ia] & members[ib]
    return members[ia] | members[ib]


def select_pairs(pairs: Sequence[VerificationPair], cohort: AnnotatedCohort,
                 sel: SubgroupSelector) -> list[VerificationPair]:
    if not pairs:
        return []
    mask = pair_mask(pairs, cohort, sel)
    return [p for p, keep in zip(pairs, mask) if keep]


def enumerate_intersections(attrs: Iterable[str], policy: str = BOTH) -> list[SubgroupSelector]:
    """Every combination of values of the chosen attributes.

    Order is race, gender, age_bin (Caucasian, African, Asian, Indian /
    Male, Female / 0..5), regardless of the order ``attrs`` is given in.
    """
    chosen = set(attrs)
    unknown = chosen - set(ATTRIBUTES)
    if unknown:
        raise InputError(f"unknown attributes: {sorted(unknown)}")
    if not chosen:
        raise InputError("at least one attribute is required")
    names = [a for a in ATTRIBUTES if a in chosen]
    return [SubgroupSelector(**dict(zip(names, combo)), policy=policy)
            for combo in itertools.product(*(ATTRIBUTE_VALUES[n] for n in names))]


def age_gap(pair: VerificationPair, cohort: AnnotatedCohort) -> int:
    return abs(cohort.annotation(pair.a).age_bin - cohort.annotation(pair.b).age_bin)


def bucket_by_age_gap(pairs: Sequence[VerificationPair], cohort: AnnotatedCohort) -> dict[int, list[VerificationPair]]:
    buckets: dict[int, list[VerificationPair]] = {g: [] for g in range(len(AGE_BINS))}
    for p in pairs:
        buckets[age_gap(p, cohort)].append(p)
    return buckets


def load_pairs(path, cohort: AnnotatedCohort) -> list[VerificationPair]:
    """Read a pair CSV and check genuine flags against identity labels.

    A repeated unordered pair is dropped (first occurrence wins) with a
    warning.
    """
    path = Path(path)
    if not path.exists():
        raise InputError(f"pair file not found: {path}")
    pairs: list[VerificationPair] = []
    seen: set[frozenset] = set()
    duplicates = 0
    with path.open(newline="", encoding="utf-8") as fh:
        reader = csv.reader(fh)
        header = next(reader, None)
        if header != PAIR_HEADER:
            raise InputError(f"{path}: malformed header {header!r}, expected {','.join(PAIR_HEADER)}")
        for row, rec in enumerate(reader, start=1):
            if not rec:
                continue
            if len(rec) != 4:
                raise InputError(f"{path}: expected 4 fields at row {row}, got {len(rec)}")
            a, b, flag, fold = rec
            if flag not in ("0", "1"):
                raise InputError(f"{path}: genuine flag must be 0 or 1 at row {row}, got {flag!r}")
            try:
                fold_idx = int(fold)
            except ValueError:
                raise InputError(f"{path}: bad fold {fold!r} at row {row}") from None
            for sid in (a, b):
                if sid not in cohort.annotations:
                    raise InputError(f"{path}: unknown sample id {sid!r} at row {row}")
            genuine = flag == "1"
            same = cohort.annotations[a].identity_id == cohort.annotations[b].identity_id
            if genuine != same:
                raise InputError(f"{path}: genuine flag {flag} contradicts identities of {a!r} and {b!r} at row {row}")
            try:
                pair = VerificationPair(a, b, genuine, fold_idx)
            except InputError as exc:
                raise InputError(f"{path}: row {row}: {exc}") from None
            if pair.key in seen:
                duplicates += 1
                continue
            seen.add(pair.key)
            pairs.append(pair)
    if duplicates:
        log.warning("%s: dropped %d repeated pairs", path, duplicates)
    return pairs


def write_pairs(pairs: Iterable[VerificationPair], path) -> None:
    with Path(path).open("w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(PAIR_HEADER)
        for p in pairs:
            w.writerow([p.a, p.b, int(p.genuine), p.fold])


def _genuine_candidates(identity_codes: np.ndarray) -> np.ndarray:
    out = []
    for code in np.unique(identity_codes):
        rows = np.flatnonzero(identity_codes == code)
        if len(rows) >= 2:
            out.extend(itertools.combinations(rows.tolist(), 2))
    return np.array(out, dtype=np.int64).reshape(-1, 2)


def _sample_impostors(identity_codes: np.ndarray, k: int, rng: np.random.Generator) -> np.ndarray:
    n = len(identity_codes)
    counts = np.bincount(identity_codes)
    available = n * (n - 1) // 2 - int((counts * (counts - 1) // 2).sum())
    if k > available:
        raise InputError(f"requested {k} impostor pairs but only {available} exist")
    if k == 0:
        return np.empty((0, 2), dtype=np.int64)
    if 2 * k > available:
        i, j = np.triu_indices(n, 1)
        keep = identity_codes[i] != identity_codes[j]
        cand = np.stack([i[keep], j[keep]], axis=1)
        return cand[np.sort(rng.choice(len(cand), size=k, replace=False))]
    chosen: dict[tuple[int, int], None] = {}
    while len(chosen) < k:
        draw = rng.integers(0, n, size=(2 * (k - len(chosen)) + 16, 2))
        for x, y in draw.tolist():
            if x == y or identity_codes[x] == identity_codes[y]:
                continue
            key = (x, y) if x < y else (y, x)
            if key not in chosen:
                chosen[key] = None
                if len(chosen) == k:
                    break
    return np.array(list(chosen), dtype=np.int64)


def generate_pairs(cohort: AnnotatedCohort, per_fold: int, folds: int, balance: bool = True,
                   seed: int = 0) -> list[VerificationPair]:
    """Draw a fold-structured pair protocol from a cohort.

    With ``balance`` each fold holds ``per_fold // 2`` genuine pairs and the
    rest impostors; otherwise pairs are drawn uniformly from all unordered
    pairs.  Pairs are shuffled and dealt round-robin to folds.
    """
    if per_fold < 1 or folds < 1:
        raise InputError("per_fold and folds must be positive")
    rng = np.random.default_rng(seed)
    codes = cohort.identity_codes
    n = len(cohort)
    total = per_fold * folds
    if balance:
        n_gen = per_fold // 2
        n_imp = per_fold - n_gen
        cand = _genuine_candidates(codes)
        if len(cand) < n_gen * folds:
            raise InputError(f"need {n_gen * folds} genuine pairs but the cohort only has {len(cand)}")
        gen = cand[rng.choice(len(cand), size=n_gen * folds, replace=False)]
        imp = _sample_impostors(codes, n_imp * folds, rng)
        gen = gen[rng.permutation(len(gen))]
        imp = imp[rng.permutation(len(imp))]
        fold_of = np.concatenate([np.arange(len(gen)) % folds, np.arange(len(imp)) % folds])
        rows = np.concatenate([gen, imp])
    else:
        if total > n * (n - 1) // 2:
            raise InputError(f"requested {total} pairs from a cohort of {n} samples")
        chosen: dict[tuple[int, int], None] = {}
        while len(chosen) < total:
            for x, y in rng.integers(0, n, size=(2 * (total - len(chosen)) + 16, 2)).tolist():
                if x != y:
                    chosen.setdefault((min(x, y), max(x, y)))
                    if len(chosen) == total:
                        break
        rows = np.array(list(chosen), dtype=np.int64)
        rows = rows[rng.permutation(len(rows))]
        fold_of = np.arange(len(rows)) % folds
    # stable layout: fold by fold, shuffled inside each fold
    order = np.lexsort((rng.permutation(len(rows)), fold_of))
    ids = cohort.ids
    return [VerificationPair(ids[rows[k, 0]], ids[rows[k, 1]], bool(codes[rows[k, 0]] == codes[rows[k, 1]]),
                             int(fold_of[k])) for k in order]


def fold_counts(pairs: Sequence[VerificationPair]) -> dict[int, int]:
    counts: dict[int, int] = {}
    for p in pairs:
        counts[p.fold] = counts.get(p.fold, 0) + 1
    return dict(sorted(counts.items()))
