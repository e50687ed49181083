"""Demographic bias auditing for embedding-based face verification."""

__version__ = "0.1.0"

from fairaudit.errors import AuditError, InputError, InvariantError
from fairaudit.embedding_store import (
    AnnotatedCohort,
    EmbeddingSet,
    Gender,
    Race,
    SampleAnnotation,
    join_cohort,
    load_annotations,
    load_embeddings,
    normalize,
)
from fairaudit.protocol import (
    SubgroupSelector,
    VerificationPair,
    enumerate_intersections,
    generate_pairs,
    load_pairs,
    select_pairs,
)

__all__ = [
    "AnnotatedCohort",
    "AuditError",
    "EmbeddingSet",
    "Gender",
    "InputError",
    "InvariantError",
    "Race",
    "SampleAnnotation",
    "SubgroupSelector",
    "VerificationPair",
    "enumerate_intersections",
    "generate_pairs",
    "join_cohort",
    "load_annotations",
    "load_embeddings",
    "load_pairs",
    "normalize",
    "select_pairs",
]
