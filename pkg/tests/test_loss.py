"""Logistic loss, gradients against finite differences, dual entropy, bias fit."""

import numpy as np
import pytest
from scipy.special import expit

from bcidal.loss import dual_value, fit_bias, logistic_loss, logistic_loss_and_grad


class TestLossValue:
    def test_zero_scores_give_log_two(self):
        y = np.array([1.0, -1.0, 1.0, -1.0])
        loss, grad = logistic_loss_and_grad(np.zeros(4), y)
        assert loss == pytest.approx(np.log(2.0), abs=1e-12)
        np.testing.assert_allclose(grad, -y / 8.0, atol=1e-14)

    def test_value_only_path_matches(self):
        rng = np.random.default_rng(1)
        z = rng.standard_normal(20)
        y = np.where(rng.standard_normal(20) > 0, 1.0, -1.0)
        loss, _ = logistic_loss_and_grad(z, y)
        assert logistic_loss(z, y) == pytest.approx(loss, abs=1e-15)

    def test_large_margin_saturation(self):
        # correctly classified far points contribute next to nothing,
        # wrongly classified far points contribute their margin
        y = np.array([1.0, 1.0])
        loss, _ = logistic_loss_and_grad(np.array([40.0, -40.0]), y)
        assert loss == pytest.approx(20.0, rel=1e-10)

    def test_shape_mismatch_rejected(self):
        with pytest.raises(ValueError, match="shape"):
            logistic_loss_and_grad(np.zeros(3), np.ones(4))


class TestGradient:
    def test_closed_form_entries(self):
        z = np.array([1.0, -2.0, 0.5])
        y = np.array([1.0, -1.0, -1.0])
        _, grad = logistic_loss_and_grad(z, y)
        expected = -y * expit(-y * z) / 3.0
        np.testing.assert_allclose(grad, expected, atol=1e-15)

    def test_central_differences_on_random_instances(self):
        # the acceptance-level check in miniature: 100 random score/label
        # pairs, per-coordinate central differences with h = 1e-6
        rng = np.random.default_rng(2)
        h = 1e-6
        for _ in range(100):
            n = int(rng.integers(2, 12))
            z = rng.standard_normal(n) * 3.0
            y = np.where(rng.standard_normal(n) > 0, 1.0, -1.0)
            _, grad = logistic_loss_and_grad(z, y)
            fd = np.empty(n)
            for i in range(n):
                zp, zm = z.copy(), z.copy()
                zp[i] += h
                zm[i] -= h
                fd[i] = (logistic_loss(zp, y) - logistic_loss(zm, y)) / (2 * h)
            np.testing.assert_allclose(grad, fd, rtol=1e-6, atol=1e-9)


class TestDualValue:
    def test_extremes_are_zero(self):
        assert dual_value(np.array([0.0, 1.0])) == 0.0

    def test_half_gives_log_two(self):
        assert dual_value(np.full(5, 0.5)) == pytest.approx(np.log(2.0), abs=1e-12)

    def test_outside_unit_interval_rejected(self):
        with pytest.raises(ValueError, match="\\[0, 1\\]"):
            dual_value(np.array([0.5, 1.2]))

    def test_conjugacy_inequality(self):
        # Fenchel-Young: loss(z) + dual_entropy(alpha) >= <-grad-form pairing>
        # at the maximizing alpha = sigmoid(-y z) it holds with equality
        rng = np.random.default_rng(3)
        z = rng.standard_normal(15)
        y = np.where(rng.standard_normal(15) > 0, 1.0, -1.0)
        alpha = expit(-y * z)
        loss = logistic_loss(z, y)
        pairing = float(np.mean(-alpha * y * z))
        assert loss == pytest.approx(dual_value(alpha) + pairing, abs=1e-10)


class TestFitBias:
    def test_symmetric_scores_give_zero(self):
        z = np.array([1.0, -1.0, 2.0, -2.0])
        y = np.array([1.0, -1.0, 1.0, -1.0])
        assert fit_bias(z, y) == pytest.approx(0.0, abs=1e-9)

    def test_first_order_optimality(self):
        rng = np.random.default_rng(4)
        z = rng.standard_normal(30) * 2.0
        y = np.where(rng.standard_normal(30) > 0, 1.0, -1.0)
        b = fit_bias(z, y)
        g = float(-np.mean(y * expit(-y * (z + b))))
        assert abs(g) < 1e-12

    def test_beats_neighboring_biases(self):
        rng = np.random.default_rng(5)
        z = rng.standard_normal(25)
        y = np.where(rng.standard_normal(25) > 0, 1.0, -1.0)
        b = fit_bias(z, y)
        best = logistic_loss(z + b, y)
        for db in (-0.01, 0.01, -1.0, 1.0):
            assert best <= logistic_loss(z + b + db, y) + 1e-12

    def test_shifted_problem_shifts_bias(self):
        rng = np.random.default_rng(6)
        z = rng.standard_normal(20)
        y = np.where(rng.standard_normal(20) > 0, 1.0, -1.0)
        b = fit_bias(z, y)
        assert fit_bias(z + 3.0, y) == pytest.approx(b - 3.0, abs=1e-8)

    def test_single_class_rejected(self):
        with pytest.raises(ValueError, match="both classes"):
            fit_bias(np.zeros(3), np.ones(3))

    def test_warm_start_irrelevant_to_result(self):
        rng = np.random.default_rng(7)
        z = rng.standard_normal(18)
        y = np.where(rng.standard_normal(18) > 0, 1.0, -1.0)
        assert fit_bias(z, y, b0=5.0) == pytest.approx(fit_bias(z, y, b0=-5.0), abs=1e-9)
