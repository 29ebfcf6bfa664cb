"""
Тесты интегрирования СДУ интерполянта
"""
import numpy as np
import pytest

from daisi_assimilation.api.errors import DomainError, NumericalError, SingularScheduleError
from daisi_assimilation.config.constants import SCORE_DELTA
from daisi_assimilation.core.drift import GaussianDrift
from daisi_assimilation.core.guidance import GuidanceKind, GuidanceMethod
from daisi_assimilation.core.metrics import mmd_rbf
from daisi_assimilation.core.sde import (
    LatentState,
    SdeConfig,
    integrate_backward,
    integrate_forward,
    integrate_guided_forward,
)
from daisi_assimilation.models.observation import ObservationModel, OperatorKind

from .conftest import ZeroDrift


class ScoreSpy(GaussianDrift):
    """Запоминает моменты времени, в которых вычислялся скор"""

    def __init__(self, *args, **kwargs):
        super().__init__(*args, **kwargs)
        self.score_times = []

    def score(self, z, t, drift=None):
        self.score_times.append(t)
        return super().score(z, t, drift=drift)


class NanDrift(GaussianDrift):
    def normalized_drift(self, w, t):
        out = super().normalized_drift(w, t)
        return np.full_like(out, np.nan) if t > 0.5 else out


class SingularGuidance:
    zeta = 1.0

    def likelihood_grad(self, z_t, t, y, obs, drift):
        raise SingularScheduleError("вырожденное расписание")


class TestSdeConfig:
    def test_grid(self):
        cfg = SdeConfig(steps=4, t_min=0.2)
        np.testing.assert_allclose(cfg.grid(), [0.2, 0.4, 0.6, 0.8, 1.0])
        assert cfg.dt == pytest.approx(0.2)

    @pytest.mark.parametrize("kwargs", [{"steps": 0}, {"t_min": 1.0}, {"t_min": -0.1}])
    def test_invalid(self, kwargs):
        with pytest.raises(DomainError):
            SdeConfig(**kwargs)

    def test_latent_time_validated(self):
        with pytest.raises(DomainError):
            LatentState(np.zeros((1, 1)), 1.5)


class TestForward:
    def test_zero_drift_single_step(self):
        z0 = np.array([[0.3], [-1.2]])
        out = integrate_forward(ZeroDrift(), SdeConfig(steps=1), z0)
        np.testing.assert_array_equal(out, z0)

    def test_eps_zero_needs_no_rng(self, std_gaussian):
        z0 = np.linspace(-2.0, 2.0, 5)[:, None]
        a = integrate_forward(std_gaussian, SdeConfig(steps=20), z0, rng=None)
        b = integrate_forward(std_gaussian, SdeConfig(steps=20), z0, rng=np.random.default_rng(1))
        np.testing.assert_array_equal(a, b)

    def test_gaussian_endpoint_moments(self):
        drift = GaussianDrift(2.0, 0.5)
        z0 = np.random.default_rng(3).standard_normal((20_000, 1))
        out = integrate_forward(drift, SdeConfig(steps=200), z0)
        assert out.mean() == pytest.approx(2.0, abs=0.02)
        assert out.std() == pytest.approx(0.5, abs=0.02)

    def test_euler_first_order(self):
        drift = GaussianDrift(2.0, 0.5)
        exact = 2.0 + 0.5 * 1.5
        errors = [abs(float(integrate_forward(drift, SdeConfig(steps=n), [[1.5]])[0, 0]) - exact)
                  for n in (50, 100)]
        assert 1.7 < errors[0] / errors[1] < 2.3

    def test_gmm_endpoint_distribution(self, gmm_model, gmm_prior):
        rng = np.random.default_rng(8)
        out = integrate_forward(gmm_model, SdeConfig(steps=500), rng.standard_normal((2000, 1)))
        assert mmd_rbf(out, gmm_prior.sample(2000, rng)) < 0.06

    def test_large_eps_keeps_marginal(self, std_gaussian):
        rng = np.random.default_rng(4)
        cfg = SdeConfig(steps=1000, eps=10.0)
        out = integrate_forward(std_gaussian, cfg, rng.standard_normal((20_000, 1)), rng=rng)
        assert out.var() == pytest.approx(1.0, abs=0.1)

    def test_from_t_must_be_below_one(self, std_gaussian):
        with pytest.raises(DomainError):
            integrate_forward(std_gaussian, SdeConfig(), [[0.0]], from_t=1.0)

    def test_non_finite_state_raises(self):
        with pytest.raises(NumericalError) as exc_info:
            integrate_forward(NanDrift(0.0, 1.0), SdeConfig(steps=10), [[0.0]])
        assert "step" in exc_info.value.details


class TestBackward:
    def test_roundtrip(self):
        drift = GaussianDrift(2.0, 0.5)
        z1 = 2.0 + 0.5 * np.random.default_rng(2).standard_normal((50, 1))
        cfg = SdeConfig(steps=1000)
        latent = integrate_backward(drift, cfg, z1)
        assert latent.t == 0.0
        np.testing.assert_allclose(integrate_forward(drift, cfg, latent.z), z1, atol=1e-2)

    def test_inverts_to_noise(self):
        drift = GaussianDrift(2.0, 0.5)
        z1 = 2.0 + 0.5 * np.random.default_rng(6).standard_normal((20_000, 1))
        latent = integrate_backward(drift, SdeConfig(steps=200), z1)
        assert latent.z.mean() == pytest.approx(0.0, abs=0.03)
        assert latent.z.std() == pytest.approx(1.0, abs=0.03)

    def test_short_span_near_one(self, std_gaussian):
        z1 = np.random.default_rng(0).standard_normal((10, 1))
        latent = integrate_backward(std_gaussian, SdeConfig(steps=5, t_min=0.999), z1)
        assert latent.t == pytest.approx(0.999)
        np.testing.assert_allclose(latent.z, z1, atol=1e-2)

    def test_score_not_evaluated_near_one(self):
        drift = ScoreSpy(0.0, 1.0)
        cfg = SdeConfig(steps=100, eps=0.5)
        integrate_backward(drift, cfg, np.zeros((4, 1)), rng=np.random.default_rng(0))
        integrate_forward(drift, cfg, np.zeros((4, 1)), rng=np.random.default_rng(0))
        assert drift.score_times
        assert max(drift.score_times) < 1.0 - SCORE_DELTA

    def test_gmm_roundtrip_first_order(self, gmm_model, gmm_prior):
        z1 = gmm_prior.sample(100, np.random.default_rng(21))
        grid = (50, 100, 200, 500)
        errors = []
        for steps in grid:
            cfg = SdeConfig(steps=steps, t_min=0.1)
            latent = integrate_backward(gmm_model, cfg, z1)
            back = integrate_forward(gmm_model, cfg, latent.z)
            errors.append(np.linalg.norm(back - z1) / np.linalg.norm(z1))
        assert errors[-1] <= 1e-2
        slope = np.polyfit(np.log([0.9 / n for n in grid]), np.log(errors), 1)[0]
        assert 0.8 <= slope <= 1.3


class TestGuidedForward:
    def test_zero_zeta_matches_unguided(self, std_gaussian):
        obs = ObservationModel(OperatorKind.IDENTITY, 1.0, 1)
        guidance = GuidanceMethod(GuidanceKind.DPS, zeta=0.0)
        cfg = SdeConfig(steps=50, t_min=0.1)
        z = np.random.default_rng(5).standard_normal((30, 1))
        guided = integrate_guided_forward(std_gaussian, guidance, [2.0], obs, cfg, LatentState(z, 0.1))
        np.testing.assert_array_equal(guided, integrate_forward(std_gaussian, cfg, z))

    def test_start_time_must_match(self, std_gaussian):
        obs = ObservationModel(OperatorKind.IDENTITY, 1.0, 1)
        guidance = GuidanceMethod(GuidanceKind.DPS)
        with pytest.raises(DomainError):
            integrate_guided_forward(std_gaussian, guidance, [0.0], obs, SdeConfig(t_min=0.2),
                                     LatentState(np.zeros((1, 1)), 0.3))

    def test_mmps_conjugate_posterior(self, std_gaussian):
        # N(0, 1) и y = 2 при sigma_obs = 1: апостериорное N(1, 0.5)
        obs = ObservationModel(OperatorKind.IDENTITY, 1.0, 1)
        guidance = GuidanceMethod(GuidanceKind.MMPS)
        t_min = 0.01
        cfg = SdeConfig(steps=500, t_min=t_min)
        scale = np.sqrt(t_min ** 2 + (1.0 - t_min) ** 2)
        z = scale * np.random.default_rng(12).standard_normal((20_000, 1))
        out = integrate_guided_forward(std_gaussian, guidance, [2.0], obs, cfg, LatentState(z, t_min))
        assert out.mean() == pytest.approx(1.0, abs=0.03)
        assert out.var() == pytest.approx(0.5, abs=0.05)

    def test_mmps_posterior_with_scaled_stats(self, scaled_gaussian):
        # N(0, 4) и y = 2 при sigma_obs = 1: апостериорное N(1.6, 0.8)
        obs = ObservationModel(OperatorKind.IDENTITY, 1.0, 1)
        t_min = 0.01
        cfg = SdeConfig(steps=500, t_min=t_min)
        scale = 2.0 * np.sqrt(t_min ** 2 + (1.0 - t_min) ** 2)
        z = scale * np.random.default_rng(13).standard_normal((4000, 1))
        out = integrate_guided_forward(scaled_gaussian, GuidanceMethod(GuidanceKind.MMPS), [2.0], obs, cfg,
                                       LatentState(z, t_min))
        assert out.mean() == pytest.approx(1.6, abs=0.1)
        assert out.var() == pytest.approx(0.8, abs=0.1)

    @pytest.mark.slow
    def test_mc_posterior_with_scaled_stats(self, scaled_gaussian):
        obs = ObservationModel(OperatorKind.IDENTITY, 1.0, 1)
        rng = np.random.default_rng(14)
        guidance = GuidanceMethod(GuidanceKind.MC, mc_pool=2.0 * rng.standard_normal((10_000, 1)))
        t_min = 0.01
        cfg = SdeConfig(steps=500, t_min=t_min)
        scale = 2.0 * np.sqrt(t_min ** 2 + (1.0 - t_min) ** 2)
        z = scale * rng.standard_normal((4000, 1))
        out = integrate_guided_forward(scaled_gaussian, guidance, [2.0], obs, cfg, LatentState(z, t_min))
        assert out.mean() == pytest.approx(1.6, abs=0.1)

    def test_singular_schedule_reports_step(self, std_gaussian):
        obs = ObservationModel(OperatorKind.IDENTITY, 1.0, 1)
        cfg = SdeConfig(steps=10, t_min=0.2)
        with pytest.raises(SingularScheduleError) as exc_info:
            integrate_guided_forward(std_gaussian, SingularGuidance(), [0.0], obs, cfg,
                                     LatentState(np.zeros((2, 1)), 0.2))
        assert exc_info.value.details["step"] == 0
        assert exc_info.value.details["t"] == pytest.approx(0.2)
