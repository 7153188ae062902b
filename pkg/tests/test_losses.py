"""Cross-entropy and the cut-off-weighted IRP loss."""

import numpy as np
import pytest

from gradcheck import numeric_gradient, rel_error
from hrmpipe.errors import ConfigError, DataError
from hrmpipe.nn.losses import cross_entropy_loss, irp_loss, irp_weight, softmax


class TestCrossEntropy:
    def test_perfect_prediction(self):
        p = np.array([[0.0, 1.0, 0.0]])
        loss, _ = cross_entropy_loss(p, [1], reduce="none")
        assert loss[0] < 1e-9

    def test_uniform_eight_way(self):
        p = np.full((1, 8), 1 / 8)
        loss, _ = cross_entropy_loss(p, [3], reduce="none")
        assert abs(loss[0] - np.log(8)) < 1e-12

    def test_rejects_unnormalized(self):
        with pytest.raises(DataError):
            cross_entropy_loss(np.array([[0.5, 0.4]]), [0])

    @pytest.mark.parametrize("seed", range(5))
    def test_gradient_vs_finite_differences(self, seed):
        rng = np.random.default_rng(seed)
        logits = rng.normal(size=(3, 5))
        labels = rng.integers(0, 5, size=3)

        def f(z):
            loss, _ = cross_entropy_loss(softmax(z), labels, reduce="mean")
            return loss

        _, grad = cross_entropy_loss(softmax(logits), labels, reduce="mean")
        assert rel_error(grad, numeric_gradient(f, logits.copy())) < 1e-5

    def test_gradient_is_p_minus_onehot(self):
        p = np.array([[0.2, 0.5, 0.3]])
        _, grad = cross_entropy_loss(p, [2], reduce="none")
        assert np.allclose(grad, [[0.2, 0.5, -0.7]])

    def test_class_weights_scale_loss_exactly(self):
        p = np.array([[0.7, 0.3], [0.4, 0.6]])
        base, _ = cross_entropy_loss(p, [0, 1], reduce="none")
        weighted, _ = cross_entropy_loss(p, [0, 1], class_weights=[2.0, 0.5], reduce="none")
        assert np.allclose(weighted, base * np.array([2.0, 0.5]))


class TestIrpLoss:
    def test_lambda_zero_is_plain_l2(self):
        rng = np.random.default_rng(0)
        f = rng.uniform(0, 40, size=1000)
        y = rng.uniform(0, 40, size=1000)
        losses, _ = irp_loss(f, y, lam=0.0, y0=15.0, reduce="none")
        assert np.abs(losses - (f - y) ** 2).max() < 1e-12

    def test_weight_at_cutoff_is_one(self):
        assert irp_weight(15.0, 5.0, 15.0) == pytest.approx(1.0, abs=0)

    def test_weight_bounds(self):
        y = np.linspace(0, 200, 5000)
        w = irp_weight(y, 5.0, 15.0)
        assert np.all(w >= 1.0 / 6.0 - 1e-15)
        assert np.all(w <= 1.0 + 1e-15)

    def test_example_at_cutoff(self):
        losses, _ = irp_loss([20.0], [15.0], lam=5.0, y0=15.0, reduce="none")
        assert losses[0] == pytest.approx(25.0, abs=1e-12)

    def test_example_off_cutoff(self):
        # weight = 1/6 + (5/6) e^{-0.5} for y = 30, y0 = 15
        expected_weight = 1.0 / 6.0 + (5.0 / 6.0) * np.exp(-0.5)
        losses, _ = irp_loss([31.0], [30.0], lam=5.0, y0=15.0, reduce="none")
        assert losses[0] == pytest.approx(expected_weight, rel=1e-12)
        assert losses[0] == pytest.approx(0.67211, abs=5e-6)

    def test_gradient_formula(self):
        f, y = np.array([22.0]), np.array([18.0])
        _, grad = irp_loss(f, y, lam=5.0, y0=15.0, reduce="none")
        assert grad[0] == pytest.approx(irp_weight(18.0, 5.0, 15.0) * 2 * 4.0, rel=1e-12)

    @pytest.mark.parametrize("seed", range(5))
    def test_gradient_vs_finite_differences(self, seed):
        rng = np.random.default_rng(seed)
        f = rng.uniform(0, 40, size=6)
        y = rng.uniform(0, 40, size=6)

        def fn(preds):
            loss, _ = irp_loss(preds, y, reduce="mean")
            return loss

        _, grad = irp_loss(f, y, reduce="mean")
        assert rel_error(grad, numeric_gradient(fn, f.copy())) < 1e-5

    def test_invalid_params(self):
        with pytest.raises(ConfigError):
            irp_loss([1.0], [1.0], lam=-1.0)
        with pytest.raises(ConfigError):
            irp_loss([1.0], [1.0], y0=0.0)
