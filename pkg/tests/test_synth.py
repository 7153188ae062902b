"""Generator label consistency, IRP oracle, and rule-tree round trips."""

import numpy as np
import pytest

from hrmpipe.data import PressureMatrix
from hrmpipe.labels import (
    SUPINE,
    UPRIGHT,
    PressurizationType,
    StudyDiagnosis,
    SwallowType,
)
from hrmpipe.rules import StudySummary, classify_merged
from hrmpipe.synth import (
    ParamClampWarning,
    StudyGenSpec,
    SwallowGenParams,
    desk_profile,
    oracle_irp,
    synth_dataset,
    synth_study,
    synth_swallow,
)

NOISELESS = SwallowGenParams(noise_sigma=0.0)


def ground_truth_summary(study):
    supine = study.supine
    return StudySummary.from_labels(
        [int(s.type_label) for s in supine],
        [int(s.pressurization_label) for s in supine],
        [s.irp_label for s in supine],
    )


class TestSwallowGeneration:
    def test_failed_swallow_has_no_wave(self):
        sw = synth_swallow(SwallowType.F, PressurizationType.NP, 5.0, NOISELESS)
        assert sw.matrix.values[4:31, :].max() < 20.0

    def test_labels_stored_verbatim(self):
        sw = synth_swallow(SwallowType.P, PressurizationType.CP, 19.5, NOISELESS)
        assert sw.type_label == SwallowType.P
        assert sw.pressurization_label == PressurizationType.CP
        assert sw.irp_label == 19.5

    def test_same_seed_bitwise_identical(self):
        params = SwallowGenParams(noise_sigma=2.0, seed=42)
        a = synth_swallow(SwallowType.N, PressurizationType.NP, 12.0, params)
        b = synth_swallow(SwallowType.N, PressurizationType.NP, 12.0, params)
        assert np.array_equal(a.matrix.values, b.matrix.values)

    def test_different_seed_differs(self):
        a = synth_swallow(SwallowType.N, PressurizationType.NP, 12.0,
                          SwallowGenParams(noise_sigma=2.0, seed=1))
        b = synth_swallow(SwallowType.N, PressurizationType.NP, 12.0,
                          SwallowGenParams(noise_sigma=2.0, seed=2))
        assert not np.array_equal(a.matrix.values, b.matrix.values)

    def test_param_clamping_warns(self):
        with pytest.warns(ParamClampWarning):
            synth_swallow(
                SwallowType.N, PressurizationType.NP, 10.0,
                SwallowGenParams(noise_sigma=-1.0),
            )

    def test_types_separable_by_simple_statistics(self):
        # max amplitude, gap presence, transit time split the six types
        stats = {}
        for st in SwallowType:
            sw = synth_swallow(st, PressurizationType.NP, 8.0, NOISELESS)
            body = sw.matrix.values[4:31, :]
            peak = body.max()
            per_channel_peak = body.max(axis=1)
            gap = per_channel_peak[5:26].min() < 10.0 and peak > 40.0
            distal_peak_time = sw.matrix.values[29, :].argmax() / 10.0
            stats[st] = (peak, gap, distal_peak_time)
        assert stats[SwallowType.F][0] < 20.0 < stats[SwallowType.W][0] < 50.0
        assert stats[SwallowType.N][0] > 60.0
        assert stats[SwallowType.H][0] > 1.8 * stats[SwallowType.N][0]
        assert stats[SwallowType.FR][1] and not stats[SwallowType.N][1]
        assert stats[SwallowType.P][2] < 4.5 < stats[SwallowType.N][2]

    def test_pressurization_overlays_distinct(self):
        base = synth_swallow(SwallowType.F, PressurizationType.NP, 20.0, NOISELESS)
        pep = synth_swallow(SwallowType.F, PressurizationType.PEP, 20.0, NOISELESS)
        cp = synth_swallow(SwallowType.N, PressurizationType.CP, 20.0, NOISELESS)
        # PEP elevates proximal body channels, CP does not
        proximal = slice(5, 12)
        assert (pep.matrix.values[proximal] - base.matrix.values[proximal]).max() > 20
        cp_base = synth_swallow(SwallowType.N, PressurizationType.NP, 20.0, NOISELESS)
        delta = cp.matrix.values - cp_base.matrix.values
        assert delta[5:12, :30].max() < 1e-6  # early proximal region untouched
        assert delta[25:31, :].max() > 20     # distal compartment elevated


class TestOracleIrp:
    def test_all_zero_matrix(self):
        assert oracle_irp(PressureMatrix(np.zeros((36, 240)))) == 0.0

    def test_constructed_trough(self):
        values = np.zeros((36, 240))
        values[31:35, :] = 30.0
        values[31:35, 20:70] = 10.0  # 5 s trough inside the 10 s window
        assert abs(oracle_irp(PressureMatrix(values)) - 10.0) < 0.1

    @pytest.mark.parametrize("target", [5.0, 15.0, 25.0])
    def test_generator_oracle_consistency(self, target):
        sw = synth_swallow(SwallowType.N, PressurizationType.NP, target, NOISELESS)
        assert abs(oracle_irp(sw.matrix) - target) <= 0.5

    def test_oracle_consistency_all_types_pressurizations(self):
        for st in SwallowType:
            for pp in PressurizationType:
                for target in (0.0, 9.0, 21.0):
                    sw = synth_swallow(st, pp, target, NOISELESS)
                    assert abs(oracle_irp(sw.matrix) - target) <= 0.5, (st, pp, target)

    def test_upright_trough_still_matches_target(self):
        sw = synth_swallow(SwallowType.N, PressurizationType.NP, 7.0, NOISELESS,
                           position=UPRIGHT)
        assert abs(oracle_irp(sw.matrix) - 7.0) <= 0.5


class TestSynthStudy:
    def test_t2a_round_trip(self):
        study = synth_study(StudyGenSpec(StudyDiagnosis.T2A, seed=3, noise_sigma=0.0))
        assert classify_merged(ground_truth_summary(study)) == StudyDiagnosis.T2A

    def test_nem_composition(self):
        study = synth_study(StudyGenSpec(StudyDiagnosis.NEM, seed=5, noise_sigma=0.0))
        types = [s.type_label for s in study.supine]
        assert sum(t == SwallowType.N for t in types) >= 5
        assert np.median([s.irp_label for s in study.supine]) < 15.0

    def test_abc_composition(self):
        study = synth_study(StudyGenSpec(StudyDiagnosis.ABC, seed=2, noise_sigma=0.0))
        assert all(s.type_label == SwallowType.F for s in study.supine)
        assert np.median([s.irp_label for s in study.supine]) < 15.0

    def test_positions_and_count(self):
        study = synth_study(StudyGenSpec(StudyDiagnosis.EGJOO, seed=0))
        assert [s.position for s in study.swallows] == [SUPINE] * 10 + [UPRIGHT] * 5

    @pytest.mark.parametrize("diagnosis", list(StudyDiagnosis))
    def test_rule_round_trip_every_diagnosis(self, diagnosis):
        for seed in range(12):
            study = synth_study(StudyGenSpec(diagnosis, seed=seed))
            assert classify_merged(ground_truth_summary(study)) == diagnosis


class TestSynthDataset:
    def test_explicit_counts(self):
        studies = synth_dataset({StudyDiagnosis.NEM: 8, StudyDiagnosis.T2A: 2}, seed=0)
        labels = [s.diagnosis for s in studies]
        assert labels.count(StudyDiagnosis.NEM) == 8
        assert labels.count(StudyDiagnosis.T2A) == 2

    def test_desk_profile_ratios(self):
        profile = desk_profile(200)
        assert sum(profile.values()) == 200
        # within one study of the reference ratios scaled to 200
        reference = {
            StudyDiagnosis.ABC: 55, StudyDiagnosis.T1A: 47, StudyDiagnosis.T2A: 93,
            StudyDiagnosis.T3A: 64, StudyDiagnosis.EGJOO: 207, StudyDiagnosis.JES: 27,
            StudyDiagnosis.NEM: 565, StudyDiagnosis.IEM: 165,
        }
        total = sum(reference.values())
        for diag, count in profile.items():
            assert abs(count - 200 * reference[diag] / total) < 1.0

    def test_seed_changes_matrices_not_labels(self):
        counts = {StudyDiagnosis.NEM: 2, StudyDiagnosis.ABC: 1}
        a = synth_dataset(counts, seed=1)
        b = synth_dataset(counts, seed=2)
        assert [s.diagnosis for s in a] == [s.diagnosis for s in b]
        assert not np.array_equal(
            a[0].swallows[0].matrix.values, b[0].swallows[0].matrix.values
        )
