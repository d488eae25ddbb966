import csv

import numpy as np
import pytest

from hsicd.evaluation import (
    auc,
    binarize,
    confusion_at,
    mann_whitney_auc,
    roc_curve,
    separability,
    write_roc_csv,
)
from hsicd.models import BinaryMask, ChangeMap, DataError


def random_instance(rng, n=1000, ties=False):
    scores = rng.integers(0, 20, n).astype(float) if ties else rng.random(n)
    labels = rng.integers(0, 2, n).astype(np.uint8)
    labels[0], labels[1] = 0, 1
    return ChangeMap(scores.reshape(-1, 1)), BinaryMask(labels.reshape(-1, 1))


def pair_counting_auc(scores: ChangeMap, truth: BinaryMask) -> float:
    changed = scores.score[truth.changed]
    unchanged = scores.score[truth.unchanged]
    greater = (changed[:, None] > unchanged[None, :]).sum()
    ties = (changed[:, None] == unchanged[None, :]).sum()
    return (greater + 0.5 * ties) / (changed.size * unchanged.size)


class TestRocCurve:
    def test_perfect_separation(self):
        scores = ChangeMap(np.array([[0.1, 0.2, 0.8, 0.9]]))
        truth = BinaryMask(np.array([[0, 0, 1, 1]], dtype=np.uint8))
        curve = roc_curve(scores, truth)
        assert (0.0, 1.0) in curve.points
        assert auc(curve) == 1.0

    def test_constant_scores_give_the_diagonal(self):
        curve = roc_curve(ChangeMap(np.full((2, 3), 0.4)), BinaryMask(np.array([[0, 1, 0], [1, 1, 0]], dtype=np.uint8)))
        assert curve.points == [(0.0, 0.0), (1.0, 1.0)]
        assert auc(curve) == 0.5

    def test_curve_shape_invariants(self, rng):
        for _ in range(20):
            curve = roc_curve(*random_instance(rng, 200, ties=True))
            assert curve.points[0] == (0.0, 0.0)
            assert curve.points[-1] == (1.0, 1.0)
            assert (np.diff(curve.fpr) >= 0).all() and (np.diff(curve.tpr) >= 0).all()
            assert (np.diff(curve.thresholds) < 0).all()
            assert np.isinf(curve.thresholds[0])

    def test_points_match_confusion_counts(self, rng):
        scores, truth = random_instance(rng, 50)
        curve = roc_curve(scores, truth)
        positives, negatives = truth.changed_count, truth.unchanged_count
        assert len(curve.thresholds) == np.unique(scores.score).size + 1
        for threshold, fpr, tpr in zip(curve.thresholds[1:], curve.fpr[1:], curve.tpr[1:]):
            tp, fp, _, _ = confusion_at(scores, truth, threshold)
            assert fpr == fp / negatives
            assert tpr == tp / positives

    def test_ignored_pixels_are_excluded(self):
        scores = ChangeMap(np.array([[0.1, 0.9, 5.0]]))
        truth = BinaryMask(np.array([[0, 1, 255]], dtype=np.uint8))
        curve = roc_curve(scores, truth)
        assert 5.0 not in curve.thresholds
        assert auc(curve) == 1.0

    @pytest.mark.parametrize("labels, missing", [([0, 0, 255], "changed"), ([1, 255, 1], "unchanged")])
    def test_empty_class(self, labels, missing):
        truth = BinaryMask(np.array([labels], dtype=np.uint8))
        with pytest.raises(DataError, match=f"the {missing} class is empty"):
            roc_curve(ChangeMap(np.array([[0.1, 0.2, 0.3]])), truth)

    def test_size_mismatch(self):
        with pytest.raises(DataError, match="differ in size"):
            roc_curve(ChangeMap(np.zeros((2, 2))), BinaryMask(np.zeros((2, 3), dtype=np.uint8)))


class TestAuc:
    @pytest.mark.parametrize("ties", [False, True])
    def test_matches_pair_counting(self, rng, ties):
        for _ in range(100):
            scores, truth = random_instance(rng, ties=ties)
            expected = pair_counting_auc(scores, truth)
            assert auc(roc_curve(scores, truth)) == pytest.approx(expected, abs=1e-9)
            assert mann_whitney_auc(scores, truth) == pytest.approx(expected, abs=1e-9)

    def test_invariant_under_increasing_transforms(self, rng):
        for _ in range(10):
            scores, truth = random_instance(rng)
            reference = auc(roc_curve(scores, truth))
            for transform in (lambda s: 2 * s + 1, lambda s: s ** 3):
                moved = ChangeMap(transform(scores.score))
                assert auc(roc_curve(moved, truth)) == pytest.approx(reference, abs=1e-12)


class TestSeparability:
    def test_perfectly_separated_boxes(self):
        scores = ChangeMap(np.array([[0.0, 0.0, 1.0, 1.0]]))
        truth = BinaryMask(np.array([[0, 0, 1, 1]], dtype=np.uint8))
        stats = separability(scores, truth)
        assert (stats.unchanged.p0, stats.unchanged.p100) == (0.0, 0.0)
        assert (stats.changed.p0, stats.changed.p100) == (1.0, 1.0)
        assert stats.gap == 1.0

    def test_linear_interpolation(self):
        scores = ChangeMap(np.array([[1.0, 2.0, 3.0, 4.0, 5.0, 0.0]]))
        truth = BinaryMask(np.array([[1, 1, 1, 1, 1, 0]], dtype=np.uint8))
        box = separability(scores, truth).changed
        assert box.p20 == pytest.approx(1.8)
        assert box.p50 == pytest.approx(3.0)
        assert box.p80 == pytest.approx(4.2)

    def test_percentiles_scale(self, rng):
        scores, truth = random_instance(rng, 100)
        base = separability(scores, truth).changed
        scaled = separability(ChangeMap(scores.score * 4), truth).changed
        assert scaled.p50 == pytest.approx(4 * base.p50)
        values = [base.p0, base.p20, base.p50, base.p80, base.p100]
        assert values == sorted(values)


class TestBinarize:
    def test_q_zero_marks_everything(self, rng):
        mask = binarize(ChangeMap(rng.random((4, 4))), "percentile", 0)
        assert mask.changed_count == 16

    def test_q_hundred_keeps_the_maximum(self):
        mask = binarize(ChangeMap(np.array([[0.1, 0.7, 0.7, 0.3]])), "percentile", 100)
        assert mask.labels.tolist() == [[0, 1, 1, 0]]

    def test_otsu_splits_two_modes(self):
        scores = np.concatenate([np.zeros(100), np.ones(100)]).reshape(10, 20)
        mask = binarize(ChangeMap(scores), "otsu")
        assert np.array_equal(mask.changed, scores == 1.0)

    def test_otsu_on_constant_map(self):
        assert binarize(ChangeMap(np.full((3, 3), 2.0)), "otsu").changed_count == 0

    def test_bad_percentile(self):
        with pytest.raises(DataError):
            binarize(ChangeMap(np.zeros((2, 2))), "percentile", 120)


def test_write_roc_csv(tmp_path):
    scores = ChangeMap(np.array([[0.1, 0.4, 0.35, 0.8]]))
    truth = BinaryMask(np.array([[0, 0, 1, 1]], dtype=np.uint8))
    curve = roc_curve(scores, truth)
    write_roc_csv(curve, tmp_path / "out" / "roc.csv")
    with open(tmp_path / "out" / "roc.csv") as f:
        rows = list(csv.reader(f))
    assert rows[0] == ["threshold", "fpr", "tpr"]
    assert rows[1] == ["inf", "0.0", "0.0"]
    assert len(rows) == 1 + len(curve.fpr)
    assert [float(v) for v in rows[-1]] == [0.1, 1.0, 1.0]
