"""Feature aggregation: statistics, counting modes, permutation invariance."""

import numpy as np
import pytest

from hrmpipe.errors import DataError, EmptyStudy
from hrmpipe.features import (
    FEATURE_NAMES_13,
    FEATURE_NAMES_14,
    aggregate,
    augment,
    features_to_csv,
    summary_from_features,
)
from hrmpipe.labels import StudyDiagnosis


def one_hot_rows(labels, k):
    out = np.zeros((len(labels), k))
    out[np.arange(len(labels)), labels] = 1.0
    return out


class TestAggregate:
    def test_uniform_study(self):
        type_preds = one_hot_rows([0] * 10, 6)
        press_preds = one_hot_rows([0] * 10, 3)
        irp = np.full(10, 12.0)
        fv = aggregate(type_preds, press_preds, irp, position_filter=None)
        expected = [0.8, 0.8, 0.8, 0.8, 1, 0, 0, 1, 0, 0, 0, 0, 0]
        assert np.allclose(fv, expected)

    def test_irp_statistics(self):
        type_preds = one_hot_rows([0, 0], 6)
        press_preds = one_hot_rows([0, 0], 3)
        fv = aggregate(type_preds, press_preds, [10.0, 20.0], position_filter=None)
        assert fv[0] == pytest.approx(4 / 3)   # max
        assert fv[1] == pytest.approx(2 / 3)   # min
        assert fv[2] == pytest.approx(1.0)     # median of even count = midpoint mean
        assert fv[3] == pytest.approx(1.0)     # mean

    def test_hard_counting(self):
        type_preds = one_hot_rows([0] * 6 + [2] * 4, 6)
        press_preds = one_hot_rows([0] * 10, 3)
        fv = aggregate(type_preds, press_preds, np.ones(10), position_filter=None)
        assert np.allclose(fv[7:13], [0.6, 0, 0.4, 0, 0, 0])

    def test_soft_counting_mode(self):
        type_preds = np.tile([0.5, 0.5, 0, 0, 0, 0], (4, 1))
        press_preds = one_hot_rows([0] * 4, 3)
        fv = aggregate(type_preds, press_preds, np.ones(4), position_filter=None,
                       counting="soft")
        assert np.allclose(fv[7:13], [0.5, 0.5, 0, 0, 0, 0])
        # hard counting argmaxes to type 0 (first index wins ties)
        fv_hard = aggregate(type_preds, press_preds, np.ones(4), position_filter=None)
        assert np.allclose(fv_hard[7:13], [1, 0, 0, 0, 0, 0])

    def test_supine_filter(self):
        type_preds = one_hot_rows([0] * 10 + [2] * 5, 6)
        press_preds = one_hot_rows([0] * 15, 3)
        irp = np.concatenate([np.full(10, 12.0), np.full(5, 99.0)])
        positions = ["supine"] * 10 + ["upright"] * 5
        fv = aggregate(type_preds, press_preds, irp, positions=positions)
        assert fv[0] == pytest.approx(0.8)  # upright 99s filtered out
        assert np.allclose(fv[7:13], [1, 0, 0, 0, 0, 0])

    def test_empty_after_filter(self):
        with pytest.raises(EmptyStudy):
            aggregate(
                one_hot_rows([0], 6), one_hot_rows([0], 3), [1.0],
                positions=["upright"],
            )

    def test_permutation_invariance(self):
        rng = np.random.default_rng(0)
        type_preds = rng.dirichlet(np.ones(6), size=10)
        press_preds = rng.dirichlet(np.ones(3), size=10)
        irp = rng.uniform(0, 30, 10)
        fv = aggregate(type_preds, press_preds, irp, position_filter=None)
        perm = rng.permutation(10)
        fv_perm = aggregate(type_preds[perm], press_preds[perm], irp[perm],
                            position_filter=None)
        assert np.allclose(fv, fv_perm)

    def test_ground_truth_fractions_exact(self):
        labels = [0, 0, 0, 1, 2, 2, 3, 4, 5, 5]
        fv = aggregate(one_hot_rows(labels, 6), one_hot_rows([0] * 10, 3),
                       np.ones(10), position_filter=None)
        assert np.allclose(fv[7:13], np.bincount(labels, minlength=6) / 10)


class TestAugment:
    def test_appends_label_id(self):
        fv = np.zeros(13)
        assert augment(fv, StudyDiagnosis.NEM)[13] == 6.0
        assert augment(fv, StudyDiagnosis.ABC)[13] == 0.0

    def test_length_14(self):
        assert augment(np.zeros(13), StudyDiagnosis.T2A).shape == (14,)

    def test_rejects_wrong_length(self):
        with pytest.raises(DataError):
            augment(np.zeros(12), StudyDiagnosis.NEM)


class TestSummaryRoundTrip:
    def test_summary_from_features(self):
        type_preds = one_hot_rows([2] * 10, 6)
        press_preds = one_hot_rows([2] * 10, 3)
        fv = aggregate(type_preds, press_preds, np.full(10, 21.0), position_filter=None)
        s = summary_from_features(fv)
        assert s.irp_median == pytest.approx(21.0)
        assert s.p_type[2] == 1.0
        assert s.p_press[2] == 1.0


class TestCsvExport:
    def test_column_headers_and_round_trip(self, tmp_path):
        rng = np.random.default_rng(1)
        matrix = rng.uniform(size=(5, 14))
        path = tmp_path / "features.csv"
        features_to_csv(matrix, path, n_features=14)
        lines = path.read_text().strip().split("\n")
        assert lines[0].split(",") == list(FEATURE_NAMES_14)
        parsed = np.array([[float(v) for v in line.split(",")] for line in lines[1:]])
        assert np.array_equal(parsed, matrix)

    def test_13_column_variant(self, tmp_path):
        path = tmp_path / "features13.csv"
        features_to_csv(np.zeros((2, 13)), path, n_features=13)
        assert path.read_text().splitlines()[0].split(",") == list(FEATURE_NAMES_13)
