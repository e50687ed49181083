from __future__ import annotations

import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from fairaudit import InputError, VerificationPair
from fairaudit.synthetic import cohort_from_vectors
from fairaudit.verification import (COSINE, EUCLIDEAN, ScoredPairs, annotator_fpr, best_threshold, confusion,
                                    kfold_accuracy, load_annotator_csv, predict, roc, score_pairs, threshold_at_fpr,
                                    tpr_at_fpr)


def brute_roc(scores, genuine):
    """Every distinct (fpr, tpr) reachable by some threshold, via direct counting."""
    scores = list(scores)
    n_gen = sum(genuine)
    n_imp = len(genuine) - n_gen
    pts = {(0.0, 0.0)}
    for t in scores:
        tp = sum(1 for s, g in zip(scores, genuine) if g and s >= t)
        fp = sum(1 for s, g in zip(scores, genuine) if not g and s >= t)
        pts.add((fp / n_imp, tp / n_gen))
    return sorted(pts)


def brute_tpr(scores, genuine, target):
    n_gen = sum(genuine)
    n_imp = len(genuine) - n_gen
    best = 0.0
    for t in list(scores) + [math.inf]:
        fp = sum(1 for s, g in zip(scores, genuine) if not g and s >= t)
        if fp / n_imp <= target:
            best = max(best, sum(1 for s, g in zip(scores, genuine) if g and s >= t) / n_gen)
    return best


def _sp(scores, genuine, folds=None):
    return ScoredPairs(np.asarray(scores, float), np.asarray(genuine, bool), COSINE, folds)


def test_score_examples():
    c = cohort_from_vectors([[1, 0], [1, 0], [0, 1]], ["p", "p", "q"])
    pairs = [VerificationPair("s0000", "s0001", True), VerificationPair("s0000", "s0002", False)]
    assert score_pairs(pairs, c, COSINE).scores.tolist() == [1.0, 0.0]
    assert score_pairs(pairs, c, EUCLIDEAN).scores[1] == -math.sqrt(2)


def test_scores_match_direct_recomputation():
    rng = np.random.default_rng(2)
    x = rng.normal(size=(20, 7))
    c = cohort_from_vectors(x, [f"p{i}" for i in range(20)])
    pairs = [VerificationPair(f"s{2 * i:04d}", f"s{2 * i + 1:04d}", False) for i in range(10)]
    for metric in (COSINE, EUCLIDEAN):
        got = score_pairs(pairs, c, metric).scores
        for k, p in enumerate(pairs):
            u, v = x[2 * k], x[2 * k + 1]
            want = (u @ v / np.linalg.norm(u) / np.linalg.norm(v) if metric == COSINE else -np.linalg.norm(u - v))
            assert abs(got[k] - want) < 1e-12


def test_predict_extremes_and_hand_fixture():
    s = [0.9, 0.8, 0.6, 0.5, 0.7, 0.4, 0.3, 0.55]
    g = [1, 1, 1, 0, 1, 0, 0, 0]
    sp = _sp(s, g)
    low = predict(sp, -1.0)
    assert (low.tp, low.fp, low.tn, low.fn) == (4, 4, 0, 0)
    high = predict(sp, 2.0)
    assert (high.tp, high.fp) == (0, 0)
    mid = predict(sp, 0.5)
    # >= 0.5: genuine 0.9 0.8 0.6 0.7 ; impostor 0.5 0.55
    assert (mid.tp, mid.fp, mid.tn, mid.fn) == (4, 2, 2, 0)


def test_roc_examples():
    perfect = roc(_sp([0.9, 0.8, 0.2, 0.1], [1, 1, 0, 0]))
    assert any(f == 0 and t == 1 for f, t in zip(perfect.fpr, perfect.tpr))
    flat = roc(_sp([0.5] * 6, [1, 0, 1, 0, 1, 0]))
    assert list(zip(flat.fpr, flat.tpr)) == [(0.0, 0.0), (1.0, 1.0)]
    with pytest.raises(InputError):
        roc(_sp([0.1, 0.2], [1, 1]))


@pytest.mark.parametrize("seed", range(5))
def test_roc_matches_brute_force(seed):
    rng = np.random.default_rng(seed)
    s = np.round(rng.normal(size=100), 1)  # rounding forces ties
    g = rng.random(100) < 0.5
    curve = roc(_sp(s, g))
    assert sorted(zip(curve.fpr.tolist(), curve.tpr.tolist())) == brute_roc(s, g.tolist())
    assert curve.fpr[-1] == 1.0 and curve.tpr[-1] == 1.0
    assert (np.diff(curve.fpr) >= 0).all() and (np.diff(curve.tpr) >= 0).all()


def test_tpr_at_fpr_examples():
    assert tpr_at_fpr(roc(_sp([0.9, 0.8, 0.2, 0.1], [1, 1, 0, 0])), 0.01) == 1.0
    curve = roc(_sp([0.9, 0.8, 0.7, 0.1], [1, 1, 0, 0]))
    assert tpr_at_fpr(curve, 0.25) == 1.0
    assert threshold_at_fpr(curve, 0.25) == 0.8


@pytest.mark.parametrize("seed", range(3))
def test_tpr_at_fpr_brute_force(seed):
    rng = np.random.default_rng(seed)
    g = rng.random(500) < 0.4
    s = rng.normal(size=500) + g
    curve = roc(_sp(s, g))
    for target in (0.005, 0.01, 0.05, 0.3):
        assert tpr_at_fpr(curve, target) == brute_tpr(s.tolist(), g.tolist(), target)


@settings(max_examples=40, deadline=None)
@given(st.lists(st.tuples(st.integers(-20, 20), st.booleans()), min_size=4, max_size=60)
       .filter(lambda v: 0 < sum(g for _, g in v) < len(v)))
def test_roc_invariant_under_monotone_transform(data):
    s = np.array([x for x, _ in data], float)
    g = np.array([y for _, y in data])
    a = roc(_sp(s, g))
    b = roc(_sp(np.exp(s / 5.0) * 3 - 1, g))
    np.testing.assert_array_equal(a.fpr, b.fpr)
    np.testing.assert_array_equal(a.tpr, b.tpr)
    targets = [0.01, 0.1, 0.2, 0.5, 0.9]
    tprs = [tpr_at_fpr(a, t) for t in targets]
    assert tprs == sorted(tprs)


@settings(max_examples=40, deadline=None)
@given(st.lists(st.tuples(st.floats(-5, 5), st.booleans()), min_size=1, max_size=40), st.floats(-6, 6))
def test_predict_count_identities(data, thr):
    s = np.array([x for x, _ in data])
    g = np.array([y for _, y in data])
    c = predict(_sp(s, g), thr)
    assert c.tp + c.fn == g.sum()
    assert c.fp + c.tn == (~g).sum()


def test_best_threshold_exhaustive():
    rng = np.random.default_rng(7)
    g = rng.random(80) < 0.5
    s = np.round(rng.normal(size=80) + g, 1)
    thr, acc = best_threshold(s, g)
    best = max((np.mean((s >= t) == g), -t) for t in np.concatenate([[-np.inf, np.inf], s]))
    assert acc == best[0]
    assert np.mean((s >= thr) == g) == acc


def test_kfold_perfect_and_hand_fixture():
    folds = np.repeat([0, 1], 4)
    perfect = kfold_accuracy(_sp([0.9, 0.8, 0.1, 0.2, 0.95, 0.7, 0.3, 0.0], [1, 1, 0, 0] * 2, folds))
    assert (perfect.mean, perfect.std) == (1.0, 0.0)
    # fold 0: scores .9 .4 | .6 .1 ; fold 1: .8 .3 | .5 .2 (genuine | impostor)
    s = [0.9, 0.4, 0.6, 0.1, 0.8, 0.3, 0.5, 0.2]
    g = [1, 1, 0, 0, 1, 1, 0, 0]
    r = kfold_accuracy(_sp(s, g, folds))
    for k, f in enumerate(r.folds):
        train = folds != f
        thr, _ = best_threshold(np.array(s)[train], np.array(g, bool)[train])
        assert r.thresholds[k] == thr
        test = folds == f
        assert r.per_fold[k] == np.mean((np.array(s)[test] >= thr) == np.array(g, bool)[test])
    assert r.per_fold == (0.75, 0.75)
    assert r.std == 0.0


def test_kfold_anti_correlated_gives_class_prior():
    folds = np.repeat(np.arange(4), 8)
    g = np.tile([1, 1, 1, 1, 1, 1, 0, 0], 4).astype(bool)
    s = np.where(g, 0.0, 1.0) + np.arange(32) * 1e-3
    r = kfold_accuracy(_sp(s, g, folds))
    assert r.mean == 0.75


def test_kfold_label_shuffle_near_prior():
    means = []
    for seed in range(20):
        rng = np.random.default_rng(seed)
        s = rng.normal(size=600)
        g = rng.random(600) < 0.5
        means.append(kfold_accuracy(_sp(s, g, np.arange(600) % 10)).mean)
    sigma = math.sqrt(0.25 / 600)  # binomial std of one run's accuracy
    assert all(abs(m - 0.5) < 3 * sigma for m in means)


def test_kfold_degenerate_folds():
    folds = np.array([0, 0, 1, 1, 2, 2])
    sp = _sp([0.9, 0.1, 0.8, 0.2, 0.7, 0.6], [1, 0, 1, 0, 1, 1], folds)
    with pytest.raises(InputError):
        kfold_accuracy(sp)
    r = kfold_accuracy(sp, skip_degenerate=True)
    assert r.folds == (0, 1)


def test_annotator_fpr_examples(tmp_path):
    truth = ["Male"] * 10
    table = annotator_fpr(truth, truth, ["Caucasian"] * 10)
    assert table[("Caucasian", "Male")] is None  # no negatives for the only class
    truth = ["Male"] * 48 + ["Male"] * 2
    pred = ["Male"] * 48 + ["Female"] * 2
    table = annotator_fpr(pred, truth, ["African"] * 50)
    assert table[("African", "Female")] == 0.04
    assert table[("African", "Male")] is None
    mixed_truth = ["Male", "Female"] * 5
    table = annotator_fpr(mixed_truth, mixed_truth, ["Asian"] * 10)
    assert table[("Asian", "Male")] == 0.0 and table[("Asian", "Female")] == 0.0
    path = tmp_path / "ann.csv"
    path.write_text("sample_id,group,true_label,pred_label\na,G,Male,Female\nb,G,Female,Female\n")
    pred, truth, groups = load_annotator_csv(path)
    assert annotator_fpr(pred, truth, groups)[("G", "Female")] == 1.0
    assert annotator_fpr(pred, truth, groups)[("G", "Male")] == 0.0


def test_confusion_counts_add():
    a = confusion(np.array([0.9, 0.1]), np.array([True, False]), 0.5)
    assert (a + a).total == 4
