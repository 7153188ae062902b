"""Precision-weighted blending: algebra, invariances, and the sweep."""

import numpy as np
import pytest

from hrmpipe.blending import (
    BlendSpec,
    blend,
    blend_rows,
    blend_sweep,
    one_hot,
    precision_scores,
    top_k_labels,
)
from hrmpipe.errors import ConfigError, DataError, SchemaError


def brute_force_blend(member_outputs, ps):
    """Direct weighted-sum evaluation followed by normalization."""
    member_outputs = np.asarray(member_outputs, dtype=np.float64)
    k = member_outputs.shape[1]
    out = np.zeros(k)
    for j in range(member_outputs.shape[0]):
        for cls in range(k):
            out[cls] += ps[j][cls] * member_outputs[j][cls]
    total = out.sum()
    return out / total if total > 0 else np.full(k, 1.0 / k)


class TestPrecisionScores:
    def test_perfect_model(self):
        truth = np.array([0, 1, 2, 0, 1, 2])
        ps = precision_scores(truth[None, :], truth, 3)
        assert np.array_equal(ps[0], [1.0, 1.0, 1.0])

    def test_constant_predictor(self):
        truth = np.array([0, 0, 1, 1])
        preds = np.zeros((1, 4), dtype=int)
        ps = precision_scores(preds, truth, 3)
        assert np.allclose(ps[0], [0.5, 0.0, 0.0])

    def test_never_predicted_class_zero(self):
        truth = np.array([0, 1])
        preds = np.array([[0, 0]])
        ps = precision_scores(preds, truth, 3)
        assert ps[0, 1] == 0.0 and ps[0, 2] == 0.0

    def test_laplace_option(self):
        truth = np.array([0, 1])
        preds = np.array([[0, 0]])
        ps = precision_scores(preds, truth, 2, laplace=True)
        assert ps[0, 0] == pytest.approx((1 + 1) / (2 + 2))
        assert ps[0, 1] == pytest.approx(1 / 2)  # (0+1)/(0+2)

    def test_empty_rejected(self):
        with pytest.raises(DataError):
            precision_scores(np.zeros((1, 0)), np.zeros(0), 2)


class TestOneHot:
    def test_unit_vector(self):
        v = one_hot(6, 8)
        assert v[6] == 1.0 and v.sum() == 1.0

    def test_out_of_range(self):
        with pytest.raises(DataError):
            one_hot(8, 8)

    def test_blend_single_member_identity(self):
        v = one_hot(3, 8)
        assert np.array_equal(blend(v[None, :], np.ones((1, 8))), v)


class TestBlend:
    def test_single_member_constant_ps_cancels(self):
        member = np.array([[0.1, 0.2, 0.7]])
        out = blend(member, np.full((1, 3), 0.37))
        assert np.allclose(out, member[0])

    def test_two_member_hand_example(self):
        members = np.array([[0.8, 0.2], [0.6, 0.4]])
        out = blend(members, np.ones((2, 2)))
        assert np.allclose(out, [0.7, 0.3])

    def test_zero_ps_column_kills_class(self):
        members = np.array([[0.5, 0.5], [0.2, 0.8]])
        ps = np.array([[1.0, 0.0], [1.0, 0.0]])
        out = blend(members, ps)
        assert out[1] == 0.0 and out[0] == 1.0

    def test_all_zero_row_falls_back_to_uniform(self):
        members = np.array([[[0.0, 1.0]]])  # (J=1, n=1, K=2)
        ps = np.array([[1.0, 0.0]])
        rows, flags = blend_rows(members, ps)
        assert flags[0]
        assert np.allclose(rows[0], [0.5, 0.5])

    def test_output_is_distribution(self):
        rng = np.random.default_rng(0)
        for _ in range(200):
            j = int(rng.integers(1, 5))
            members = rng.dirichlet(np.ones(8), size=(j, 3))
            ps = rng.uniform(size=(j, 8))
            rows, _ = blend_rows(members, ps)
            assert rows.min() >= 0.0
            assert np.abs(rows.sum(axis=1) - 1.0).max() < 1e-9

    @pytest.mark.parametrize("seed", range(5))
    def test_matches_brute_force(self, seed):
        rng = np.random.default_rng(seed)
        for _ in range(50):
            j = int(rng.integers(1, 5))
            members = rng.dirichlet(np.ones(8), size=j)
            ps = rng.uniform(size=(j, 8))
            assert np.abs(blend(members, ps) - brute_force_blend(members, ps)).max() < 1e-12

    def test_ps_scale_invariance(self):
        # the normalization constant absorbs any uniform scaling of the
        # precision matrix; for a single member that is its (only) row
        rng = np.random.default_rng(7)
        for _ in range(100):
            j = int(rng.integers(1, 5))
            members = rng.dirichlet(np.ones(8), size=j)
            ps = rng.uniform(0.1, 1.0, size=(j, 8))
            base = blend(members, ps)
            out = blend(members, ps * 4.2)
            assert np.abs(base - out).max() < 1e-12
            assert base.argmax() == out.argmax()
        members = rng.dirichlet(np.ones(8), size=1)
        ps = rng.uniform(0.1, 1.0, size=(1, 8))
        scaled_row = ps.copy()
        scaled_row[0] *= 9.9
        assert np.abs(blend(members, ps) - blend(members, scaled_row)).max() < 1e-12

    def test_dimension_mismatch(self):
        with pytest.raises(SchemaError):
            blend(np.ones((2, 8)) / 8, np.ones((3, 8)))

    def test_unnormalized_members_rejected(self):
        with pytest.raises(DataError):
            blend(np.array([[0.5, 0.4]]), np.ones((1, 2)))


class TestTopK:
    def test_tie_breaks_ascending_id(self):
        probs = np.array([[0.4, 0.4, 0.2]])
        assert list(top_k_labels(probs, 2)[0]) == [0, 1]


def _members(rng, n, truth, noise):
    """Simulated member soft outputs centered on the truth."""
    out = rng.dirichlet(np.ones(8) * 0.5, size=n) * noise
    out[np.arange(n), truth] += 1.0 - noise
    return out / out.sum(axis=1, keepdims=True)


class TestBlendSpec:
    def test_fit_and_predict(self):
        rng = np.random.default_rng(1)
        truth = rng.integers(0, 8, size=60)
        soft = {"a": _members(rng, 60, truth, 0.3), "b": _members(rng, 60, truth, 0.5)}
        spec = BlendSpec(["a", "b"]).fit_precision(soft, truth)
        rows, flags = spec.predict(soft)
        assert rows.shape == (60, 8)
        assert not flags.any()

    def test_single_index_mode_one_hots(self):
        rng = np.random.default_rng(2)
        truth = rng.integers(0, 8, size=40)
        soft = {"a": _members(rng, 40, truth, 0.4)}
        spec = BlendSpec(["a"], output_kind="single-index").fit_precision(soft, truth)
        stacked = spec.prepare(soft)
        assert set(np.unique(stacked)) <= {0.0, 1.0}

    def test_requires_member(self):
        with pytest.raises(ConfigError):
            BlendSpec([])


class TestBlendSweep:
    def test_table_structure_and_ranking(self):
        rng = np.random.default_rng(3)
        truth_t = rng.integers(0, 8, size=80)
        truth_v = rng.integers(0, 8, size=40)
        train = {name: _members(rng, 80, truth_t, noise)
                 for name, noise in (("gbm", 0.3), ("ann", 0.4), ("rule", 0.0))}
        valid = {name: _members(rng, 40, truth_v, noise)
                 for name, noise in (("gbm", 0.3), ("ann", 0.4), ("rule", 0.0))}
        rows = blend_sweep(train, truth_t, valid, truth_v)
        # 3 singles + (3 pairs + 1 triple) in both output kinds = 11 rows
        assert len(rows) == 11
        keys = [(r["valid_top2"], r["valid_top1"]) for r in rows]
        assert keys == sorted(keys, reverse=True)

    def test_single_member_blend_equals_member(self):
        rng = np.random.default_rng(4)
        truth = rng.integers(0, 8, size=50)
        soft = {"only": _members(rng, 50, truth, 0.4)}
        rows = blend_sweep(soft, truth, soft, truth)
        member_top2 = top_k_labels(soft["only"], 2)
        top1 = float((member_top2[:, 0] == truth).mean())
        top2 = float((member_top2 == truth[:, None]).any(axis=1).mean())
        soft_row = [r for r in rows if r["output_kind"] == "soft-probability"][0]
        assert soft_row["valid_top1"] == pytest.approx(top1)
        assert soft_row["valid_top2"] == pytest.approx(top2)
