"""Covariance estimation and CSP eigenstructure."""

import numpy as np
import pytest

from bcidal.csp import (
    ClassCovariance,
    csp_features,
    estimate_covariance,
    fit_csp,
    fit_csp_from_session,
)
from bcidal.dataset import Session, Trial


def random_spd_pair(rng, dim):
    a = rng.standard_normal((dim, dim))
    b = rng.standard_normal((dim, dim))
    c1 = a @ a.T + 0.1 * np.eye(dim)
    c2 = b @ b.T + 0.1 * np.eye(dim)
    c1 /= np.trace(c1)
    c2 /= np.trace(c2)
    return c1, c2


def wrap(matrix, n_trials=10):
    return ClassCovariance(matrix=matrix, n_trials=n_trials)


class TestEstimateCovariance:
    def test_single_trial_closed_form(self):
        cov = estimate_covariance([np.array([[1.0, -1.0], [1.0, -1.0]])])
        np.testing.assert_allclose(cov.matrix, [[0.5, 0.5], [0.5, 0.5]], atol=1e-14)

    def test_unit_trace(self):
        rng = np.random.default_rng(2)
        cov = estimate_covariance([rng.standard_normal((5, 40)) for _ in range(7)])
        assert abs(np.trace(cov.matrix) - 1.0) < 1e-12
        assert cov.n_trials == 7

    def test_two_trial_average(self):
        rng = np.random.default_rng(3)
        x1 = rng.standard_normal((4, 30))
        x2 = rng.standard_normal((4, 30))
        a = estimate_covariance([x1]).matrix
        b = estimate_covariance([x2]).matrix
        both = estimate_covariance([x1, x2]).matrix
        np.testing.assert_allclose(both, (a + b) / 2.0, atol=1e-14)

    def test_zero_energy_trial_rejected(self):
        with pytest.raises(ValueError, match="zero-energy"):
            estimate_covariance([np.zeros((3, 10))])

    def test_no_trials_rejected(self):
        with pytest.raises(ValueError, match="at least one"):
            estimate_covariance([])

    def test_channel_mismatch_rejected(self):
        rng = np.random.default_rng(4)
        with pytest.raises(ValueError, match="trial 1"):
            estimate_covariance([rng.standard_normal((3, 10)),
                                 rng.standard_normal((4, 10))])


class TestFitCsp:
    def test_diagonal_closed_form(self):
        model = fit_csp(wrap(np.diag([2.0, 1.0]) / 3.0),
                        wrap(np.diag([1.0, 2.0]) / 3.0), m=1)
        np.testing.assert_allclose(model.eigenvalues, [2 / 3, 1 / 3], atol=1e-12)
        np.testing.assert_allclose(model.filters, np.eye(2), atol=1e-10)

    def test_identical_classes_give_half(self):
        rng = np.random.default_rng(4)
        c1, _ = random_spd_pair(rng, 6)
        model = fit_csp(wrap(c1), wrap(c1.copy()), m=2)
        np.testing.assert_allclose(model.eigenvalues, 0.5, atol=1e-10)

    def test_whitening_pairing_and_residuals(self):
        # 50 seeded draws: filters whiten the composite covariance, each
        # eigenvalue pairs as (lambda wrt class 1, 1 - lambda wrt class 2),
        # and the generalized eigen-residual vanishes
        rng = np.random.default_rng(11)
        for _ in range(50):
            c1, c2 = random_spd_pair(rng, 11)
            model = fit_csp(wrap(c1), wrap(c2), m=3)
            f = model.filters
            lam = model.eigenvalues
            np.testing.assert_allclose(f.T @ (c1 + c2) @ f, np.eye(6), atol=1e-8)
            assert np.all((lam >= 0.0) & (lam <= 1.0))
            for j in range(6):
                w = f[:, j]
                assert abs(w @ c1 @ w - lam[j]) <= 1e-8
                assert abs(w @ c2 @ w - (1.0 - lam[j])) <= 1e-8
                resid = c1 @ w - lam[j] * (c1 + c2) @ w
                assert np.linalg.norm(resid) <= 1e-8

    def test_class_swap_mirrors_eigenvalues(self):
        rng = np.random.default_rng(15)
        c1, c2 = random_spd_pair(rng, 9)
        fwd = fit_csp(wrap(c1), wrap(c2), m=2)
        rev = fit_csp(wrap(c2), wrap(c1), m=2)
        np.testing.assert_allclose(np.sort(fwd.eigenvalues),
                                   np.sort(1.0 - rev.eigenvalues), atol=1e-10)

    def test_simultaneous_diagonalization(self):
        rng = np.random.default_rng(12)
        c1, c2 = random_spd_pair(rng, 8)
        f = fit_csp(wrap(c1), wrap(c2), m=3).filters
        d1 = f.T @ c1 @ f
        d2 = f.T @ c2 @ f
        assert np.max(np.abs(d1 - np.diag(np.diag(d1)))) < 1e-8
        assert np.max(np.abs(d2 - np.diag(np.diag(d2)))) < 1e-8
        np.testing.assert_allclose(np.diag(d1) + np.diag(d2), 1.0, atol=1e-10)

    def test_patterns_invert_filters(self):
        rng = np.random.default_rng(16)
        c1, c2 = random_spd_pair(rng, 6)
        model = fit_csp(wrap(c1), wrap(c2), m=3)  # 2m = C, square case
        np.testing.assert_allclose(model.patterns.T @ model.filters,
                                   np.eye(6), atol=1e-8)

    def test_sign_canonicalization(self):
        rng = np.random.default_rng(13)
        c1, c2 = random_spd_pair(rng, 7)
        f = fit_csp(wrap(c1), wrap(c2), m=2).filters
        for col in f.T:
            assert col[np.argmax(np.abs(col))] > 0

    def test_too_many_filters_rejected(self):
        rng = np.random.default_rng(14)
        c1, c2 = random_spd_pair(rng, 4)
        with pytest.raises(ValueError, match="2m"):
            fit_csp(wrap(c1), wrap(c2), m=3)

    def test_shape_mismatch_rejected(self):
        with pytest.raises(ValueError, match="differ"):
            fit_csp(wrap(np.eye(3) / 3), wrap(np.eye(4) / 4), m=1)


class TestCspFeatures:
    def make_model(self, dim=5, m=2, seed=20):
        rng = np.random.default_rng(seed)
        c1, c2 = random_spd_pair(rng, dim)
        return fit_csp(wrap(c1), wrap(c2), m=m)

    def test_equal_power_gives_uniform_logs(self):
        model = self.make_model(dim=7, m=3)
        # craft a trial whose six projections carry exactly equal power:
        # x = pinv(F^T) s reproduces the unit-power sources under F^T
        rng = np.random.default_rng(21)
        s = rng.standard_normal((6, 500))
        s /= np.sqrt(np.mean(s**2, axis=1, keepdims=True))
        x = np.linalg.pinv(model.filters.T) @ s
        feats = csp_features(model, x)
        assert feats.shape == (6,)
        np.testing.assert_allclose(feats, np.log(1.0 / 6.0), atol=1e-9)

    def test_scale_invariance(self):
        model = self.make_model()
        rng = np.random.default_rng(22)
        x = rng.standard_normal((5, 300))
        np.testing.assert_allclose(csp_features(model, x),
                                   csp_features(model, 7.3 * x), atol=1e-10)

    def test_shares_sum_to_one(self):
        model = self.make_model()
        rng = np.random.default_rng(23)
        feats = csp_features(model, rng.standard_normal((5, 200)))
        assert abs(np.exp(feats).sum() - 1.0) < 1e-10

    def test_zero_trial_rejected(self):
        model = self.make_model()
        with pytest.raises(ValueError, match="zero-energy"):
            csp_features(model, np.zeros((5, 100)))


class TestFitFromSession:
    def test_subset_selection(self):
        rng = np.random.default_rng(30)
        trials = [Trial(data=rng.standard_normal((4, 50)),
                        label=1 if i < 5 else -1, index=i) for i in range(10)]
        session = Session(trials=trials, sampling_rate_hz=100.0,
                          channel_names=("a", "b", "c", "d"))
        model = fit_csp_from_session(session, m=2, trial_indices=range(2, 10))
        assert model.filters.shape == (4, 4)

    def test_single_class_rejected(self):
        rng = np.random.default_rng(31)
        trials = [Trial(data=rng.standard_normal((3, 40)), label=1, index=i)
                  for i in range(4)]
        session = Session(trials=trials, sampling_rate_hz=100.0,
                          channel_names=("x", "y", "z"))
        with pytest.raises(ValueError, match="both classes"):
            fit_csp_from_session(session)
