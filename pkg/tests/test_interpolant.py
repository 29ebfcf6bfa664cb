"""
Тесты расписания интерполянта и тождеств дрейф / скор / условные средние
"""
import numpy as np
import pytest

from daisi_assimilation.api.errors import DomainError, SingularScheduleError
from daisi_assimilation.config.constants import SCORE_DELTA
from daisi_assimilation.core.drift import GaussianDrift, gmm_drift
from daisi_assimilation.core.interpolant import (
    LINEAR,
    EpsSchedule,
    NormStats,
    denoiser_mean_from_drift,
    noise_mean_from_drift,
    rescale_drift,
    scaled_score,
    schedule_coeffs,
    score_from_drift,
)


class TestSchedule:
    def test_coefficients_at_half(self):
        assert schedule_coeffs(LINEAR, 0.5).as_tuple() == (0.5, 0.5, 1.0, -1.0, 1.0, 1.0)

    def test_coefficients_at_one(self):
        assert schedule_coeffs(LINEAR, 1.0).as_tuple() == (1.0, 0.0, 1.0, -1.0, 1.0, 0.0)

    def test_lambda_at_quarter(self):
        assert schedule_coeffs(LINEAR, 0.25).lam == pytest.approx(3.0, abs=1e-15)

    def test_endpoint_conditions(self):
        assert LINEAR.alpha(0.0) == 0.0 and LINEAR.alpha(1.0) == 1.0
        assert LINEAR.beta(0.0) == 1.0 and LINEAR.beta(1.0) == 0.0

    def test_lambda_singular_at_zero(self):
        c = schedule_coeffs(LINEAR, 0.0)
        with pytest.raises(SingularScheduleError):
            _ = c.lam

    @pytest.mark.parametrize("t", [-0.1, 1.5, np.nan])
    def test_time_outside_unit_interval(self, t):
        with pytest.raises(DomainError):
            schedule_coeffs(LINEAR, t)

    def test_closed_forms_on_random_times(self, rng):
        for t in rng.uniform(1e-6, 1.0, 1000):
            c = schedule_coeffs(LINEAR, t)
            np.testing.assert_allclose(
                c.as_tuple(), (t, 1.0 - t, 1.0, -1.0, 1.0, (1.0 - t) / t), rtol=1e-15, atol=0.0
            )

    def test_array_time_for_training(self):
        t = np.array([0.0, 0.25, 1.0])
        np.testing.assert_array_equal(LINEAR.alpha(t), t)
        np.testing.assert_array_equal(LINEAR.beta(t), 1.0 - t)


class TestScoreAndDenoiser:
    def test_score_when_drift_equals_state(self):
        z = np.array([0.3, -1.2, 4.0])
        np.testing.assert_allclose(score_from_drift(z, z, 0.5), -z)

    def test_gaussian_score_through_drift(self):
        model = GaussianDrift(0.0, 1.0)
        b = model.drift([[1.0]], 0.3)
        s = score_from_drift(b, [[1.0]], 0.3)
        assert s[0, 0] == pytest.approx(-1.0 / 0.58, rel=1e-12)

    def test_score_rejected_near_one(self):
        with pytest.raises(SingularScheduleError):
            score_from_drift(0.0, 0.0, 1.0 - SCORE_DELTA / 2)

    def test_denoiser_at_one_returns_state(self):
        z = np.array([1.5, -2.0])
        np.testing.assert_array_equal(denoiser_mean_from_drift(np.ones(2), z, 1.0), z)

    def test_denoiser_zero_drift(self):
        assert denoiser_mean_from_drift(0.0, 2.0, 0.5) == pytest.approx(2.0)

    def test_gmm_score_matches_quadrature(self, gmm_prior, gmm_quadrature):
        b = gmm_drift(gmm_prior, 0.0, 0.5)
        assert float(score_from_drift(b, 0.0, 0.5)) == pytest.approx(gmm_quadrature.score(0.0, 0.5), abs=1e-5)

    def test_gmm_denoiser_matches_quadrature(self, gmm_prior, gmm_quadrature):
        b = gmm_drift(gmm_prior, 0.0, 0.5)
        expected = gmm_quadrature.expect(lambda z1: z1, 0.0, 0.5)
        assert float(denoiser_mean_from_drift(b, 0.0, 0.5)) == pytest.approx(expected, abs=1e-5)

    def test_conditional_means_recompose_state(self, rng, gmm_prior):
        for t in rng.uniform(0.05, 0.95, 50):
            z = rng.normal(0.0, 3.0, 20)
            b = gmm_drift(gmm_prior, z, t)
            recomposed = t * denoiser_mean_from_drift(b, z, t) + (1.0 - t) * noise_mean_from_drift(b, z, t)
            np.testing.assert_allclose(recomposed, z, rtol=1e-10, atol=1e-12)


class TestRescaling:
    def test_unit_stats_are_identity(self):
        b_w = GaussianDrift(0.0, 1.0).normalized_drift
        b_z = rescale_drift(b_w, NormStats.identity(1))
        z = np.array([[0.7], [-1.1]])
        np.testing.assert_array_equal(b_z(z, 0.4), b_w(z, 0.4))

    def test_drift_vanishes_at_data_mean(self):
        m, s = 3.0, 2.5
        b_z = rescale_drift(GaussianDrift(0.0, 1.0).normalized_drift, NormStats([m], s))
        assert b_z(np.array([[m]]), 0.5)[0, 0] == pytest.approx(0.0, abs=1e-15)

    def test_scaled_score_matches_data_marginal(self):
        m, s, t = -1.0, 2.0, 0.3
        stats = NormStats([m], s)
        b_z = rescale_drift(GaussianDrift(0.0, 1.0).normalized_drift, stats)
        z = np.array([[0.5], [-4.0], [2.0]])
        expected = -(z - m) / (s ** 2 * (t ** 2 + (1.0 - t) ** 2))
        np.testing.assert_allclose(scaled_score(b_z(z, t), z, t, stats), expected, rtol=1e-12)

    def test_stats_require_positive_sigma(self):
        with pytest.raises(DomainError):
            NormStats([0.0], 0.0)


class TestEpsSchedule:
    def test_linear_decay(self):
        eps = EpsSchedule(2.0)
        assert eps(0.25) == pytest.approx(1.5)
        assert eps(1.0) == 0.0

    def test_negative_rejected(self):
        with pytest.raises(DomainError):
            EpsSchedule(-0.1)
