from __future__ import annotations

import struct

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from fairaudit import (AnnotatedCohort, EmbeddingSet, InputError, SampleAnnotation, join_cohort, load_annotations,
                       load_embeddings, normalize)
from fairaudit.embedding_store import write_annotations, write_embeddings


def _binary(ids, rows):
    dim = len(rows[0])
    out = [struct.pack("<4sIII", b"FAEM", 1, len(ids), dim)]
    for sid, row in zip(ids, rows):
        raw = sid.encode()
        out.append(struct.pack("<H", len(raw)) + raw + np.asarray(row, "<f4").tobytes())
    return b"".join(out)


def test_minimal_binary_file(tmp_path):
    path = tmp_path / "e.bin"
    path.write_bytes(_binary(["a", "b"], [[1, 0, 0], [0, 1, 0]]))
    e = load_embeddings(path)
    assert (e.count, e.dim) == (2, 3)
    assert e.ids == ("a", "b")
    np.testing.assert_array_equal(e.vectors, [[1, 0, 0], [0, 1, 0]])


@pytest.mark.parametrize("payload, message", [
    (b"XXXX" + bytes(12), "bad magic"),
    (b"FAEM", "truncated header"),
    (struct.pack("<4sIII", b"FAEM", 1, 1, 0), "dim=0"),
    (struct.pack("<4sIII", b"FAEM", 1, 2, 2) + struct.pack("<H", 1) + b"a" + bytes(8), "truncated record at row 2"),
])
def test_malformed_binary(tmp_path, payload, message):
    path = tmp_path / "e.bin"
    path.write_bytes(payload)
    with pytest.raises(InputError, match=message):
        load_embeddings(path)


def test_csv_dimension_mismatch_reports_row(tmp_path):
    path = tmp_path / "e.csv"
    path.write_text("sample_id,v0,v1\na,1,0\nb,1,0,3\n")
    with pytest.raises(InputError, match="dimension mismatch at row 2"):
        load_embeddings(path)


def test_csv_non_finite_rejected(tmp_path):
    path = tmp_path / "e.csv"
    path.write_text("sample_id,v0,v1\na,1,nan\n")
    with pytest.raises(InputError, match="non-finite"):
        load_embeddings(path)


def test_duplicate_id_names_row():
    with pytest.raises(InputError, match="duplicate id 'a' at row 3"):
        EmbeddingSet(("a", "b", "a"), np.eye(3))


def test_missing_file():
    with pytest.raises(InputError, match="not found"):
        load_embeddings("/nonexistent/e.bin")


def test_input_array_is_not_frozen():
    x = np.eye(2)
    EmbeddingSet(("a", "b"), x)
    x[0, 0] = 5.0


@settings(max_examples=100, deadline=None)
@given(arrays(np.float32, st.tuples(st.integers(1, 6), st.integers(1, 5)),
              elements=st.floats(-1e6, 1e6, allow_nan=False, width=32)))
def test_binary_round_trip_bit_exact(tmp_path_factory, m):
    ids = tuple(f"id{i}" for i in range(m.shape[0]))
    path = tmp_path_factory.mktemp("rt") / "e.bin"
    write_embeddings(EmbeddingSet(ids, m), path)
    back = load_embeddings(path)
    assert back.ids == ids
    assert back.vectors.astype(np.float32).tobytes() == m.tobytes()


def test_csv_round_trip(tmp_path):
    rng = np.random.default_rng(0)
    e = EmbeddingSet(("x", "y", "z"), rng.normal(size=(3, 4)))
    write_embeddings(e, tmp_path / "e.csv")
    back = load_embeddings(tmp_path / "e.csv")
    np.testing.assert_array_equal(back.vectors, e.vectors)


def test_normalize_examples():
    out = normalize(EmbeddingSet(("a",), [[3.0, 4.0]]))
    np.testing.assert_allclose(out.vectors, [[0.6, 0.8]], atol=1e-15)
    assert out.normalized
    with pytest.raises(InputError, match="zero"):
        normalize(EmbeddingSet(("z",), [[0.0, 0.0]]))


@settings(max_examples=50, deadline=None)
@given(arrays(np.float64, st.tuples(st.integers(1, 8), st.integers(1, 6)),
              elements=st.floats(-100, 100).filter(lambda v: abs(v) > 1e-3)))
def test_normalize_idempotent_unit_rows(m):
    ids = tuple(str(i) for i in range(len(m)))
    once = normalize(EmbeddingSet(ids, m))
    twice = normalize(once)
    np.testing.assert_allclose(np.linalg.norm(once.vectors, axis=1), 1.0, atol=1e-6)
    np.testing.assert_allclose(twice.vectors, once.vectors, atol=1e-12)


def test_normalized_flag_checks_norms():
    with pytest.raises(InputError, match="norm"):
        EmbeddingSet(("a",), [[2.0, 0.0]], normalized=True)


def _anns(ids):
    return [SampleAnnotation(s, f"p{i}", "Asian", "Female", 2) for i, s in enumerate(ids)]


def test_join_strict_and_lenient():
    e = EmbeddingSet(("a", "b", "c"), np.eye(3))
    assert len(join_cohort(e, _anns(["a", "b", "c"]), "strict")) == 3
    with pytest.raises(InputError, match="1 ids without a counterpart: c"):
        join_cohort(e, _anns(["a", "b"]), "strict")
    lenient = join_cohort(e, _anns(["a", "b"]), "lenient")
    assert len(lenient) == 2
    assert lenient.dropped == ("c",)


@settings(max_examples=50, deadline=None)
@given(st.sets(st.sampled_from("abcdef"), min_size=1), st.sets(st.sampled_from("abcdef"), min_size=1))
def test_strict_join_succeeds_iff_equal_ids(emb_ids, ann_ids):
    ids = tuple(sorted(emb_ids))
    e = EmbeddingSet(ids, np.ones((len(ids), 2)))
    if emb_ids == ann_ids:
        assert len(join_cohort(e, _anns(sorted(ann_ids)))) == len(ids)
    else:
        with pytest.raises(InputError):
            join_cohort(e, _anns(sorted(ann_ids)))


def test_annotation_round_trip_and_validation(tmp_path):
    anns = [SampleAnnotation("s1", "p1", "African", "Male", 0), SampleAnnotation("s2", "p1", "Indian", "Female", 5)]
    write_annotations(anns, tmp_path / "a.csv")
    back = load_annotations(tmp_path / "a.csv")
    assert [back[a.sample_id] for a in anns] == anns
    with pytest.raises(InputError):
        SampleAnnotation("s3", "p", "Asian", "Male", 6)
    (tmp_path / "bad.csv").write_text("sample_id,identity_id,race,gender,age_bin\ns1,p,Martian,Male,1\n")
    with pytest.raises(InputError):
        load_annotations(tmp_path / "bad.csv")


def test_cohort_codes():
    e = EmbeddingSet(("a", "b", "c"), np.eye(3))
    anns = {"a": SampleAnnotation("a", "x", "Indian", "Female", 3), "b": SampleAnnotation("b", "y", "Caucasian", "Male", 0),
            "c": SampleAnnotation("c", "x", "Indian", "Female", 4)}
    c = AnnotatedCohort(e, anns)
    assert c.identity_codes.tolist() == [0, 1, 0]
    assert c.race_codes.tolist() == [3, 0, 3]
    assert c.gender_codes.tolist() == [1, 0, 1]
    assert c.age_bins.tolist() == [3, 0, 4]
