"""Embedding and annotation loading, validation and normalization.

Binary layout (little-endian)::

    b"FAEM" | u32 version=1 | u32 count | u32 dim |
    count x [u16 id_len | id bytes (utf-8) | dim x f32]

Vectors are stored as float32 on disk and widened to float64 in memory.
"""

from __future__ import annotations

import csv
import logging
import math
import struct
from dataclasses import dataclass, field
from enum import Enum
from functools import cached_property
from pathlib import Path
from typing import Iterable, Mapping, Sequence

import numpy as np

from fairaudit.errors import InputError

log = logging.getLogger(__name__)

MAGIC = b"FAEM"
VERSION = 1
_HEADER = struct.Struct("<4sIII")


class Race(str, Enum):
    CAUCASIAN = "Caucasian"
    AFRICAN = "African"
    ASIAN = "Asian"
    INDIAN = "Indian"


class Gender(str, Enum):
    MALE = "Male"
    FEMALE = "Female"


AGE_BINS = ("0-20", "21-30", "31-40", "41-50", "51-60", "61-100")


def age_label(age_bin: int) -> str:
    return AGE_BINS[age_bin]


@dataclass(frozen=True)
class SampleAnnotation:
    sample_id: str
    identity_id: str
    race: Race
    gender: Gender
    age_bin: int

    def __post_init__(self):
        if not isinstance(self.age_bin, int) or not 0 <= self.age_bin < len(AGE_BINS):
            raise InputError(f"age_bin must be an integer in [0, 5], got {self.age_bin!r} for {self.sample_id}")
        # accept plain strings
        object.__setattr__(self, "race", Race(self.race))
        object.__setattr__(self, "gender", Gender(self.gender))


@dataclass(frozen=True, eq=False)
class EmbeddingSet:
    ids: tuple[str, ...]
    vectors: np.ndarray
    normalized: bool = False

    def __post_init__(self):
        ids = tuple(self.ids)
        vectors = np.array(self.vectors, dtype=np.float64)
        if vectors.ndim != 2:
            raise InputError(f"vectors must be a 2-D matrix, got shape {vectors.shape}")
        if len(ids) != vectors.shape[0]:
            raise InputError(f"{len(ids)} ids for {vectors.shape[0]} vectors")
        if vectors.shape[1] < 1:
            raise InputError("embedding dimension must be positive")
        if len(set(ids)) != len(ids):
            seen = set()
            for row, sid in enumerate(ids, start=1):
                if sid in seen:
                    raise InputError(f"duplicate id {sid!r} at row {row}")
                seen.add(sid)
        bad = ~np.isfinite(vectors)
        if bad.any():
            row = int(np.argwhere(bad)[0, 0])
            raise InputError(f"non-finite value at row {row + 1} (id {ids[row]!r})")
        if self.normalized:
            norms = np.linalg.norm(vectors, axis=1)
            off = np.abs(norms - 1.0) > 1e-6
            if off.any():
                row = int(np.argmax(off))
                raise InputError(f"row {row + 1} (id {ids[row]!r}) has norm {norms[row]!r}, expected 1")
        vectors.setflags(write=False)
        object.__setattr__(self, "ids", ids)
        object.__setattr__(self, "vectors", vectors)

    @property
    def count(self) -> int:
        return len(self.ids)

    @property
    def dim(self) -> int:
        return self.vectors.shape[1]

    @cached_property
    def index(self) -> dict[str, int]:
        return {sid: i for i, sid in enumerate(self.ids)}

    def take(self, ids: Sequence[str]) -> "EmbeddingSet":
        rows = [self.index[sid] for sid in ids]
        return EmbeddingSet(tuple(ids), self.vectors[rows], self.normalized)


def normalize(e: EmbeddingSet) -> EmbeddingSet:
    """Scale every row to unit L2 norm."""
    norms = np.linalg.norm(e.vectors, axis=1)
    zero = norms == 0.0
    if zero.any():
        raise InputError(f"cannot normalize zero-norm row (id {e.ids[int(np.argmax(zero))]!r})")
    return EmbeddingSet(e.ids, e.vectors / norms[:, None], normalized=True)


def _infer_format(path: Path, fmt: str | None) -> str:
    if fmt is not None:
        if fmt not in ("binary", "csv"):
            raise InputError(f"unknown embedding format {fmt!r}")
        return fmt
    return "csv" if path.suffix.lower() == ".csv" else "binary"


def load_embeddings(path, format: str | None = None) -> EmbeddingSet:
    path = Path(path)
    if not path.exists():
        raise InputError(f"embedding file not found: {path}")
    if _infer_format(path, format) == "csv":
        return _load_csv(path)
    return _load_binary(path)


def _load_binary(path: Path) -> EmbeddingSet:
    data = path.read_bytes()
    if len(data) < _HEADER.size:
        raise InputError(f"{path}: truncated header")
    magic, version, count, dim = _HEADER.unpack_from(data, 0)
    if magic != MAGIC:
        raise InputError(f"{path}: bad magic {magic!r}, expected {MAGIC!r}")
    if version != VERSION:
        raise InputError(f"{path}: unsupported version {version}")
    if dim == 0:
        raise InputError(f"{path}: malformed header, dim=0")
    offset = _HEADER.size
    ids = []
    vectors = np.empty((count, dim), dtype=np.float32)
    row_bytes = 4 * dim
    for row in range(count):
        if offset + 2 > len(data):
            raise InputError(f"{path}: truncated record at row {row + 1}")
        (n,) = struct.unpack_from("<H", data, offset)
        offset += 2
        if offset + n + row_bytes > len(data):
            raise InputError(f"{path}: truncated record at row {row + 1}")
        try:
            ids.append(data[offset:offset + n].decode("utf-8"))
        except UnicodeDecodeError as exc:
            raise InputError(f"{path}: invalid utf-8 id at row {row + 1}") from exc
        offset += n
        vectors[row] = np.frombuffer(data, dtype="<f4", count=dim, offset=offset)
        offset += row_bytes
    if offset != len(data):
        raise InputError(f"{path}: {len(data) - offset} trailing bytes after {count} records")
    return EmbeddingSet(tuple(ids), vectors.astype(np.float64))


def _load_csv(path: Path) -> EmbeddingSet:
    with path.open(newline="", encoding="utf-8") as fh:
        reader = csv.reader(fh)
        header = next(reader, None)
        if not header or header[0] != "sample_id" or len(header) < 2:
            raise InputError(f"{path}: malformed header, expected sample_id,v0,...")
        dim = len(header) - 1
        if header[1:] != [f"v{k}" for k in range(dim)]:
            raise InputError(f"{path}: malformed header, columns must be v0..v{dim - 1}")
        ids, rows = [], []
        for row, rec in enumerate(reader, start=1):
            if not rec:
                continue
            if len(rec) != dim + 1:
                raise InputError(f"{path}: dimension mismatch at row {row}: {len(rec) - 1} values, expected {dim}")
            try:
                values = [float(v) for v in rec[1:]]
            except ValueError as exc:
                raise InputError(f"{path}: unparseable value at row {row}") from exc
            if not all(math.isfinite(v) for v in values):
                raise InputError(f"{path}: non-finite value at row {row}")
            ids.append(rec[0])
            rows.append(values)
    vectors = np.array(rows, dtype=np.float64).reshape(len(rows), dim)
    return EmbeddingSet(tuple(ids), vectors)


def write_embeddings(e: EmbeddingSet, path, format: str | None = None) -> None:
    path = Path(path)
    if _infer_format(path, format) == "csv":
        with path.open("w", newline="", encoding="utf-8") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(["sample_id"] + [f"v{k}" for k in range(e.dim)])
            for sid, vec in zip(e.ids, e.vectors):
                w.writerow([sid] + [repr(float(v)) for v in vec])
        return
    f32 = e.vectors.astype("<f4")
    parts = [_HEADER.pack(MAGIC, VERSION, e.count, e.dim)]
    for sid, vec in zip(e.ids, f32):
        raw = sid.encode("utf-8")
        if len(raw) > 0xFFFF:
            raise InputError(f"id too long for binary format: {sid[:40]!r}...")
        parts.append(struct.pack("<H", len(raw)))
        parts.append(raw)
        parts.append(vec.tobytes())
    path.write_bytes(b"".join(parts))


ANNOTATION_HEADER = ["sample_id", "identity_id", "race", "gender", "age_bin"]


def load_annotations(path) -> dict[str, SampleAnnotation]:
    path = Path(path)
    if not path.exists():
        raise InputError(f"annotation file not found: {path}")
    out: dict[str, SampleAnnotation] = {}
    with path.open(newline="", encoding="utf-8") as fh:
        reader = csv.reader(fh)
        header = next(reader, None)
        if header != ANNOTATION_HEADER:
            raise InputError(f"{path}: malformed header {header!r}, expected {','.join(ANNOTATION_HEADER)}")
        for row, rec in enumerate(reader, start=1):
            if not rec:
                continue
            if len(rec) != len(ANNOTATION_HEADER):
                raise InputError(f"{path}: expected 5 fields at row {row}, got {len(rec)}")
            sid, ident, race, gender, age = rec
            if sid in out:
                raise InputError(f"{path}: duplicate sample_id {sid!r} at row {row}")
            try:
                ann = SampleAnnotation(sid, ident, Race(race), Gender(gender), int(age))
            except ValueError as exc:
                raise InputError(f"{path}: invalid annotation at row {row}: {exc}") from exc
            out[sid] = ann
    return out


def write_annotations(annotations: Iterable[SampleAnnotation], path) -> None:
    with Path(path).open("w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(ANNOTATION_HEADER)
        for a in annotations:
            w.writerow([a.sample_id, a.identity_id, a.race.value, a.gender.value, a.age_bin])


@dataclass(frozen=True, eq=False)
class AnnotatedCohort:
    """Embeddings joined one-to-one with their demographic annotations.

    Row order follows the embedding set.  ``dropped`` lists ids removed by
    a lenient join (embeddings without annotation and vice versa).
    """

    embeddings: EmbeddingSet
    annotations: Mapping[str, SampleAnnotation]
    dropped: tuple[str, ...] = field(default=())

    def __post_init__(self):
        missing = [sid for sid in self.embeddings.ids if sid not in self.annotations]
        extra = set(self.annotations) - set(self.embeddings.ids)
        if missing or extra:
            raise InputError(f"cohort ids do not match annotations: {len(missing)} missing, {len(extra)} extra")

    @property
    def ids(self) -> tuple[str, ...]:
        return self.embeddings.ids

    def __len__(self) -> int:
        return self.embeddings.count

    @property
    def index(self) -> dict[str, int]:
        return self.embeddings.index

    def annotation(self, sample_id: str) -> SampleAnnotation:
        try:
            return self.annotations[sample_id]
        except KeyError:
            raise InputError(f"sample {sample_id!r} is not annotated") from None

    @cached_property
    def identity_codes(self) -> np.ndarray:
        """Integer identity label per row (codes follow first appearance)."""
        codes: dict[str, int] = {}
        return np.array([codes.setdefault(self.annotations[s].identity_id, len(codes)) for s in self.ids], dtype=np.int64)

    @cached_property
    def race_codes(self) -> np.ndarray:
        order = list(Race)
        return np.array([order.index(self.annotations[s].race) for s in self.ids], dtype=np.int64)

    @cached_property
    def gender_codes(self) -> np.ndarray:
        order = list(Gender)
        return np.array([order.index(self.annotations[s].gender) for s in self.ids], dtype=np.int64)

    @cached_property
    def age_bins(self) -> np.ndarray:
        return np.array([self.annotations[s].age_bin for s in self.ids], dtype=np.int64)

    def subset(self, ids: Sequence[str]) -> "AnnotatedCohort":
        return AnnotatedCohort(self.embeddings.take(ids), {s: self.annotations[s] for s in ids})

    def with_embeddings(self, embeddings: EmbeddingSet) -> "AnnotatedCohort":
        if embeddings.ids != self.embeddings.ids:
            raise InputError("replacement embeddings must keep ids and order")
        return AnnotatedCohort(embeddings, self.annotations, self.dropped)


def join_cohort(e: EmbeddingSet, annotations: Mapping[str, SampleAnnotation] | Iterable[SampleAnnotation],
                mode: str = "strict") -> AnnotatedCohort:
    if not isinstance(annotations, Mapping):
        annotations = {a.sample_id: a for a in annotations}
    if mode not in ("strict", "lenient"):
        raise InputError(f"unknown join mode {mode!r}")
    emb_ids = set(e.ids)
    no_ann = [sid for sid in e.ids if sid not in annotations]
    no_emb = sorted(sid for sid in annotations if sid not in emb_ids)
    if not no_ann and not no_emb:
        return AnnotatedCohort(e, dict(annotations))
    if mode == "strict":
        offending = no_ann + no_emb
        shown = ", ".join(offending[:20]) + (" ..." if len(offending) > 20 else "")
        raise InputError(f"{len(offending)} ids without a counterpart: {shown}")
    keep = [sid for sid in e.ids if sid in annotations]
    dropped = tuple(no_ann + no_emb)
    log.warning("lenient join dropped %d ids (%d unannotated, %d without embedding)",
                len(dropped), len(no_ann), len(no_emb))
    return AnnotatedCohort(e.take(keep), {sid: annotations[sid] for sid in keep}, dropped)
