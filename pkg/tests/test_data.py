"""Domain types, downsampling, stratified splitting, and dataset round trips."""

import numpy as np
import pytest

from hrmpipe.data import (
    CHANNELS,
    DatasetSplit,
    PressureMatrix,
    StudyRecord,
    SwallowRecord,
    downsample,
    load_dataset,
    save_dataset,
    stratified_split,
)
from hrmpipe.errors import (
    ChannelMismatch,
    ClassTooSmall,
    DataError,
    FormatError,
    InsufficientWindow,
    ManifestError,
)
from hrmpipe.labels import PressurizationType, StudyDiagnosis, SwallowType
from hrmpipe.synth import StudyGenSpec, synth_study


def make_swallow(position="supine", value=5.0):
    return SwallowRecord(
        matrix=PressureMatrix(np.full((36, 240), value)),
        position=position,
        type_label=SwallowType.N,
        pressurization_label=PressurizationType.NP,
        irp_label=10.0,
    )


def make_study(study_id="s0", diagnosis=StudyDiagnosis.NEM):
    swallows = [make_swallow() for _ in range(10)] + [make_swallow("upright") for _ in range(5)]
    return StudyRecord(study_id, tuple(swallows), diagnosis)


class TestPressureMatrix:
    def test_shape_enforced(self):
        with pytest.raises(DataError):
            PressureMatrix(np.zeros((36, 239)))

    def test_bounds_enforced(self):
        bad = np.zeros((36, 240))
        bad[0, 0] = 501.0
        with pytest.raises(DataError):
            PressureMatrix(bad)

    def test_nan_rejected(self):
        bad = np.zeros((36, 240))
        bad[3, 3] = np.nan
        with pytest.raises(DataError):
            PressureMatrix(bad)

    def test_immutable(self):
        m = PressureMatrix(np.zeros((36, 240)))
        with pytest.raises(ValueError):
            m.values[0, 0] = 1.0


class TestRecords:
    def test_negative_irp_rejected(self):
        with pytest.raises(DataError):
            SwallowRecord(
                matrix=PressureMatrix(np.zeros((36, 240))),
                position="supine",
                type_label=SwallowType.N,
                pressurization_label=PressurizationType.NP,
                irp_label=-1.0,
            )

    def test_study_needs_10_supine_5_upright(self):
        swallows = [make_swallow() for _ in range(9)] + [make_swallow("upright")] * 6
        with pytest.raises(DataError):
            StudyRecord("bad", tuple(swallows), StudyDiagnosis.NEM)

    def test_split_disjointness_enforced(self):
        with pytest.raises(DataError):
            DatasetSplit(("a", "b"), ("b",), ())


class TestDownsample:
    def test_constant_grid(self):
        raw = np.full((36, 2400), 7.0)
        out = downsample(raw, 0)
        assert np.allclose(out.values, 7.0)

    def test_ramp_block_means(self):
        # single channel ramp 0..2399: block means 4.5, 14.5, 24.5, ...
        raw = np.tile(np.arange(2400, dtype=np.float64) / 10.0, (36, 1))
        out = downsample(raw, 0)
        expected = (np.arange(240) * 10 + 4.5) / 10.0
        assert np.allclose(out.values[0], expected)
        assert np.allclose(out.values[17], expected)

    def test_onset_offset(self):
        raw = np.zeros((36, 3000))
        raw[:, 600:] = 3.0
        out = downsample(raw, 600)
        assert np.allclose(out.values, 3.0)

    def test_insufficient_window(self):
        with pytest.raises(InsufficientWindow):
            downsample(np.zeros((36, 2000)), 0)
        with pytest.raises(InsufficientWindow):
            downsample(np.zeros((36, 2400)), 1)

    def test_channel_mismatch(self):
        with pytest.raises(ChannelMismatch):
            downsample(np.zeros((35, 2400)), 0)

    def test_mean_preserving(self):
        rng = np.random.default_rng(0)
        raw = rng.uniform(0, 100, size=(CHANNELS, 2500))
        out = downsample(raw, 37)
        window = raw[:, 37 : 37 + 2400]
        assert abs(out.values.mean() - window.mean()) / window.mean() < 1e-6


class TestStratifiedSplit:
    def test_single_class_20(self):
        studies = [make_study(f"s{i}") for i in range(20)]
        split = stratified_split(studies, seed=1)
        assert (len(split.train), len(split.validation), len(split.test)) == (14, 3, 3)

    def test_largest_remainder_800(self):
        studies = [make_study(f"s{i}") for i in range(800)]
        split = stratified_split(studies, seed=3)
        assert (len(split.train), len(split.validation), len(split.test)) == (560, 120, 120)

    def test_determinism(self):
        studies = [make_study(f"s{i}") for i in range(20)]
        a = stratified_split(studies, seed=5)
        b = stratified_split(studies, seed=5)
        assert a == b
        c = stratified_split(studies, seed=6)
        assert a != c

    def test_no_leakage_and_coverage(self):
        studies = [
            make_study(f"n{i}", StudyDiagnosis.NEM) for i in range(11)
        ] + [make_study(f"a{i}", StudyDiagnosis.ABC) for i in range(7)]
        split = stratified_split(studies, seed=0)
        all_ids = set(split.train) | set(split.validation) | set(split.test)
        assert all_ids == {s.study_id for s in studies}
        assert len(split.train) + len(split.validation) + len(split.test) == len(studies)

    def test_per_class_counts_within_one(self):
        rng = np.random.default_rng(2)
        studies = []
        for diag in StudyDiagnosis:
            for i in range(int(rng.integers(3, 40))):
                studies.append(make_study(f"{diag.name}{i}", diag))
        split = stratified_split(studies, seed=9)
        for diag in StudyDiagnosis:
            ids = {s.study_id for s in studies if s.diagnosis == diag}
            n = len(ids)
            for frac, part in zip((0.7, 0.15, 0.15), ("train", "validation", "test")):
                got = len(ids & set(getattr(split, part)))
                assert abs(got - frac * n) < 1.0

    def test_class_too_small(self):
        studies = [make_study("a", StudyDiagnosis.ABC), make_study("b", StudyDiagnosis.ABC)]
        with pytest.raises(ClassTooSmall):
            stratified_split(studies)


class TestDatasetRoundTrip:
    def _studies(self):
        return [
            synth_study(StudyGenSpec(StudyDiagnosis.NEM, seed=i, noise_sigma=1.0))
            for i in range(2)
        ] + [synth_study(StudyGenSpec(StudyDiagnosis.ABC, seed=9, noise_sigma=1.0))]

    def test_bitwise_round_trip(self, tmp_path):
        studies = self._studies()
        save_dataset(studies, None, tmp_path)
        loaded, split = load_dataset(tmp_path)
        assert split is None
        assert len(loaded) == len(studies)
        for a, b in zip(studies, loaded):
            assert a.study_id == b.study_id
            assert a.diagnosis == b.diagnosis
            for sa, sb in zip(a.swallows, b.swallows):
                assert sa.position == sb.position
                assert sa.type_label == sb.type_label
                assert sa.pressurization_label == sb.pressurization_label
                assert sa.irp_label == sb.irp_label
                assert np.array_equal(sa.matrix.values, sb.matrix.values)

    def test_split_round_trip(self, tmp_path):
        studies = self._studies()
        split = DatasetSplit(
            (studies[0].study_id,), (studies[1].study_id,), (studies[2].study_id,)
        )
        save_dataset(studies, split, tmp_path)
        _, loaded_split = load_dataset(tmp_path)
        assert loaded_split == split

    def test_truncated_blob(self, tmp_path):
        studies = self._studies()
        save_dataset(studies, None, tmp_path)
        blob = next(tmp_path.glob("*.f32"))
        blob.write_bytes(blob.read_bytes()[:-8])
        with pytest.raises(FormatError):
            load_dataset(tmp_path)

    def test_missing_blob(self, tmp_path):
        studies = self._studies()
        save_dataset(studies, None, tmp_path)
        next(tmp_path.glob("*.f32")).unlink()
        with pytest.raises(ManifestError):
            load_dataset(tmp_path)
