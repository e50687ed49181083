"""Synthetic annotated cohorts with controllable group geometry.

Identity centers are unit vectors; each subgroup (race x gender x age bin)
sets how spread its identity centers are around a shared race direction and
how noisy each identity's samples are.  Samples are ``center + noise``,
re-normalized.
"""

from __future__ import annotations

import itertools
from dataclasses import dataclass, replace
from typing import Iterable, Sequence

import numpy as np

from fairaudit.embedding_store import AGE_BINS, AnnotatedCohort, EmbeddingSet, Gender, Race, SampleAnnotation
from fairaudit.errors import InputError


@dataclass(frozen=True)
class SubgroupSpec:
    race: Race
    gender: Gender
    age_bin: int
    identities: int = 10
    samples_per_identity: int = 4
    dispersion: float = 1.0
    noise: float = 0.3

    def __post_init__(self):
        object.__setattr__(self, "race", Race(self.race))
        object.__setattr__(self, "gender", Gender(self.gender))
        if not 0 <= self.age_bin < len(AGE_BINS):
            raise InputError(f"age_bin out of range: {self.age_bin}")
        if self.identities < 1 or self.samples_per_identity < 1:
            raise InputError("identity and sample counts must be >= 1")
        if self.dispersion <= 0 or self.noise < 0:
            raise InputError("dispersion must be > 0 and noise >= 0")

    @property
    def key(self) -> tuple[Race, Gender, int]:
        return (self.race, self.gender, self.age_bin)


@dataclass(frozen=True)
class CohortSpec:
    """Cohort layout.

    ``race_anchor`` is the weight of a per-race shared direction added to
    every identity center (0 places centers uniformly on the sphere).
    ``age_jitter`` is the probability that a sample's age bin moves one
    step away from its identity's bin, which creates cross-age pairs.
    """

    subgroups: tuple[SubgroupSpec, ...]
    dim: int = 32
    seed: int = 0
    race_anchor: float = 0.0
    age_jitter: float = 0.0

    def __post_init__(self):
        object.__setattr__(self, "subgroups", tuple(self.subgroups))
        if not self.subgroups:
            raise InputError("a cohort needs at least one subgroup")
        keys = [s.key for s in self.subgroups]
        if len(set(keys)) != len(keys):
            raise InputError("each race/gender/age subgroup may appear only once")
        if self.dim < 2:
            raise InputError("dim must be >= 2")
        if self.race_anchor < 0 or not 0 <= self.age_jitter <= 1:
            raise InputError("race_anchor must be >= 0 and age_jitter in [0, 1]")

    @property
    def identity_count(self) -> int:
        return sum(s.identities for s in self.subgroups)

    def marginals(self) -> dict[tuple[Race, Gender, int], int]:
        return {s.key: s.identities for s in self.subgroups}

    @classmethod
    def grid(cls, races: Iterable = tuple(Race), genders: Iterable = tuple(Gender),
             age_bins: Iterable[int] = range(len(AGE_BINS)), identities: int = 4, samples_per_identity: int = 4,
             dispersion: float = 1.0, noise: float = 0.3, **kwargs) -> "CohortSpec":
        subs = [SubgroupSpec(r, g, a, identities, samples_per_identity, dispersion, noise)
                for r, g, a in itertools.product(races, genders, age_bins)]
        return cls(tuple(subs), **kwargs)

    def adjust(self, noise: float | None = None, dispersion: float | None = None, **match) -> "CohortSpec":
        """Copy with ``noise``/``dispersion`` changed on subgroups matching ``match``
        (keys race, gender, age_bin)."""
        changes = {k: v for k, v in (("noise", noise), ("dispersion", dispersion)) if v is not None}
        subs = []
        for s in self.subgroups:
            hit = all(getattr(s, k) == (Race(v) if k == "race" else Gender(v) if k == "gender" else v)
                      for k, v in match.items())
            subs.append(replace(s, **changes) if hit else s)
        return replace(self, subgroups=tuple(subs))


def generate_cohort(spec: CohortSpec) -> AnnotatedCohort:
    root = np.random.SeedSequence(spec.seed)
    race_seq, *identity_seqs = root.spawn(1 + spec.identity_count)
    race_rng = np.random.default_rng(race_seq)
    anchors = {}
    for race in Race:
        a = race_rng.normal(size=spec.dim)
        anchors[race] = a / np.linalg.norm(a)
    ids, rows, anns = [], [], []
    scale = 1.0 / np.sqrt(spec.dim)
    k = 0
    for sub in spec.subgroups:
        for _ in range(sub.identities):
            rng = np.random.default_rng(identity_seqs[k])
            ident = f"id{k:05d}"
            k += 1
            center = sub.dispersion * scale * rng.normal(size=spec.dim) + spec.race_anchor * anchors[sub.race]
            norm = np.linalg.norm(center)
            if norm == 0:
                raise InputError("degenerate identity center")
            center /= norm
            for _ in range(sub.samples_per_identity):
                v = center + sub.noise * scale * rng.normal(size=spec.dim)
                v /= np.linalg.norm(v)
                age = sub.age_bin
                if spec.age_jitter and rng.random() < spec.age_jitter:
                    step = 1 if rng.random() < 0.5 else -1
                    if not 0 <= age + step < len(AGE_BINS):
                        step = -step
                    age += step
                sid = f"s{len(ids):06d}"
                ids.append(sid)
                rows.append(v)
                anns.append(SampleAnnotation(sid, ident, sub.race, sub.gender, age))
    emb = EmbeddingSet(tuple(ids), np.array(rows), normalized=True)
    return AnnotatedCohort(emb, {a.sample_id: a for a in anns})


def cohort_from_vectors(vectors: Sequence[Sequence[float]], identities: Sequence[str],
                        races: Sequence[str] | None = None, genders: Sequence[str] | None = None,
                        age_bins: Sequence[int] | None = None, normalized: bool = False) -> AnnotatedCohort:
    """Small hand-built cohorts for tests and examples."""
    n = len(vectors)
    races = races or ["Caucasian"] * n
    genders = genders or ["Male"] * n
    age_bins = age_bins if age_bins is not None else [0] * n
    ids = tuple(f"s{i:04d}" for i in range(n))
    anns = {sid: SampleAnnotation(sid, str(identities[i]), Race(races[i]), Gender(genders[i]), int(age_bins[i]))
            for i, sid in enumerate(ids)}
    return AnnotatedCohort(EmbeddingSet(ids, np.asarray(vectors, dtype=np.float64), normalized), anns)
