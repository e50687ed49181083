from __future__ import annotations

import numpy as np
import pytest

from fairaudit import EmbeddingSet, InputError
from fairaudit.projection import (ProjectionError, TsneConfig, conditional_affinities, joint_affinities,
                                  kl_divergence, kl_gradient, pca2, squared_distances, tsne)


def _emb(x):
    return EmbeddingSet(tuple(f"p{i}" for i in range(len(x))), np.asarray(x, float))


def finite_difference_error(seed: int, n: int = 10, h: float = 1e-5) -> float:
    rng = np.random.default_rng(seed)
    p = joint_affinities(rng.normal(size=(n, 5)), perplexity=3.0)
    y = rng.normal(size=(n, 2))
    analytic = kl_gradient(y, p)
    numeric = np.zeros_like(y)
    for idx in np.ndindex(*y.shape):
        yp, ym = y.copy(), y.copy()
        yp[idx] += h
        ym[idx] -= h
        numeric[idx] = (kl_divergence(yp, p) - kl_divergence(ym, p)) / (2 * h)
    return float(np.abs(analytic - numeric).max() / np.abs(numeric).max())


def blobs(seed: int, n: int = 20, dim: int = 10, gap: float = 10.0):
    rng = np.random.default_rng(seed)
    a = rng.normal(size=(n, dim))
    b = rng.normal(size=(n, dim))
    b[:, 0] += gap
    return np.vstack([a, b]), np.repeat([0, 1], n)


def probe_accuracy(coords: np.ndarray, labels: np.ndarray) -> float:
    """Best accuracy of a least-squares linear probe."""
    design = np.hstack([coords, np.ones((len(coords), 1))])
    w, *_ = np.linalg.lstsq(design, 2.0 * labels - 1.0, rcond=None)
    return float(np.mean((design @ w > 0) == labels))


def test_equidistant_rows_uniform():
    d = np.ones((4, 4)) - np.eye(4)
    p = conditional_affinities(d, 2.0)
    off = ~np.eye(4, dtype=bool)
    np.testing.assert_allclose(p[off], 1 / 3, atol=1e-15)


@pytest.mark.parametrize("seed", range(5))
def test_row_entropy_matches_perplexity(seed):
    x = np.random.default_rng(seed).normal(size=(50, 6))
    p = conditional_affinities(squared_distances(x), 10.0)
    for i in range(50):
        row = np.delete(p[i], i)
        h = -(row[row > 0] * np.log2(row[row > 0])).sum()
        assert abs(h - np.log2(10.0)) < 1e-4
    np.testing.assert_allclose(p.sum(axis=1), 1.0, atol=1e-12)


def test_duplicate_point_dominates():
    x = np.random.default_rng(1).normal(size=(12, 3))
    x[5] = x[2]
    p = conditional_affinities(squared_distances(x), 3.0)
    assert p[2].argmax() == 5 and p[5].argmax() == 2


def test_joint_affinities_sum_to_one():
    p = joint_affinities(np.random.default_rng(2).normal(size=(30, 4)), 5.0)
    assert abs(p.sum() - 1.0) < 1e-9
    np.testing.assert_array_equal(p, p.T)


def test_strict_nonconvergence_raises():
    x = np.random.default_rng(0).normal(size=(10, 3))
    with pytest.raises(ProjectionError):
        conditional_affinities(squared_distances(x), 3.0, max_steps=1, strict=True)


@pytest.mark.parametrize("seed", range(10))
def test_kl_gradient_finite_differences(seed):
    assert finite_difference_error(seed) < 1e-4


def test_kl_nonnegative():
    rng = np.random.default_rng(3)
    p = joint_affinities(rng.normal(size=(15, 4)), 4.0)
    for _ in range(5):
        assert kl_divergence(rng.normal(size=(15, 2)), p) >= 0


def test_blobs_separate_and_runs_repeat():
    x, labels = blobs(0)
    cfg = TsneConfig(perplexity=10.0, iterations=500, seed=0)
    a = tsne(_emb(x), cfg)
    b = tsne(_emb(x), cfg)
    assert a.coordinates.tobytes() == b.coordinates.tobytes()
    assert probe_accuracy(a.coordinates, labels) >= 0.95
    assert a.metadata["perplexity"] == 10.0 and a.metadata["learning_rate"] == 200.0


def test_objective_does_not_grow_after_exaggeration():
    x, _ = blobs(1)
    cfg = TsneConfig(perplexity=10.0, iterations=1000, seed=1)
    proj = tsne(_emb(x), cfg)
    history = dict(proj.history)
    assert all(v >= 0 for v in history.values())
    assert history[1000] <= history[250] + 1e-6


def test_rotation_changes_distances_little():
    x, _ = blobs(2)
    q, _ = np.linalg.qr(np.random.default_rng(9).normal(size=(10, 10)))
    cfg = TsneConfig(perplexity=10.0, iterations=1000, seed=4)
    d1 = np.sqrt(squared_distances(tsne(_emb(x), cfg).coordinates))
    d2 = np.sqrt(squared_distances(tsne(_emb(x @ q), cfg).coordinates))
    assert np.linalg.norm(d1 - d2) / np.linalg.norm(d1) < 0.01


def test_tsne_input_checks():
    with pytest.raises(InputError, match="perplexity"):
        tsne(_emb(np.random.default_rng(0).normal(size=(20, 3))), TsneConfig(perplexity=30.0))
    with pytest.raises(InputError):
        TsneConfig(perplexity=0.5)


def test_pca_plane_retains_everything():
    rng = np.random.default_rng(0)
    basis, _ = np.linalg.qr(rng.normal(size=(10, 2)))
    x = rng.normal(size=(200, 2)) @ basis.T
    proj = pca2(_emb(x))
    assert abs(proj.final_objective - 1.0) < 1e-9


def test_pca_isotropic_fraction():
    dim = 20
    x = np.random.default_rng(1).normal(size=(10_000, dim))
    frac = pca2(_emb(x)).final_objective
    # top-2 of 20 noisy eigenvalues sits a little above 2/dim
    assert 2 / dim < frac < 2 / dim + 0.02


def test_pca_invariances():
    x = np.random.default_rng(2).normal(size=(50, 6)) * np.arange(1, 7)
    base = pca2(_emb(x)).coordinates
    dup = pca2(_emb(np.vstack([x, x]))).coordinates
    np.testing.assert_allclose(np.abs(dup[:50]), np.abs(base), atol=1e-9)
    moved = pca2(_emb(x + 123.0)).coordinates
    np.testing.assert_allclose(np.abs(moved), np.abs(base), atol=1e-8)


def test_pca_degenerate_flag():
    x = np.zeros((5, 3))
    x[:, 0] = np.arange(5)
    proj = pca2(_emb(x))
    assert proj.metadata["degenerate_second_component"]
