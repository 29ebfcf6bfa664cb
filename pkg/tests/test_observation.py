"""
Тесты модели наблюдений
"""
import numpy as np
import pytest

from daisi_assimilation.api.errors import DimensionMismatchError, DomainError
from daisi_assimilation.models.observation import ObservationModel, OperatorKind

OPERATORS = [
    (OperatorKind.IDENTITY, None),
    (OperatorKind.SPARSE_LINEAR, (2, 0)),
    (OperatorKind.SQUARE, (0, 1)),
    (OperatorKind.ARCTAN, (1,)),
]


class TestValidation:
    def test_identity_rejects_mask(self):
        with pytest.raises(DomainError):
            ObservationModel(OperatorKind.IDENTITY, 1.0, 3, mask=(0,))

    @pytest.mark.parametrize("mask", [(0, 0), (3,), (-1,), ()])
    def test_bad_mask(self, mask):
        with pytest.raises(DomainError):
            ObservationModel(OperatorKind.SPARSE_LINEAR, 1.0, 3, mask=mask)

    @pytest.mark.parametrize("sigma", [0.0, -1.0, np.inf])
    def test_bad_sigma(self, sigma):
        with pytest.raises(DomainError):
            ObservationModel(OperatorKind.IDENTITY, sigma, 3)

    def test_kind_from_string(self):
        obs = ObservationModel("arctan", 1.0, 3, mask=[1])
        assert obs.kind is OperatorKind.ARCTAN
        assert obs.mask == (1,)
        assert obs.obs_dim == 1


class TestOperators:
    def test_values(self):
        x = np.array([[7.0, 14.0, -3.0]])
        np.testing.assert_allclose(ObservationModel("identity", 1.0, 3).apply(x), x)
        np.testing.assert_allclose(ObservationModel("sparse_linear", 1.0, 3, mask=(2, 0)).apply(x), [[-3.0, 7.0]])
        np.testing.assert_allclose(ObservationModel("square", 1.0, 3, mask=(0, 1)).apply(x), [[1.0, 4.0]])
        np.testing.assert_allclose(ObservationModel("arctan", 1.0, 3, mask=(2,)).apply(x), [[np.arctan(-3.0)]])

    def test_arctan_slope_at_zero(self):
        obs = ObservationModel(OperatorKind.ARCTAN, 1.0, 1)
        assert float(obs.derivative([[0.0]])[0, 0]) == 1.0

    @pytest.mark.parametrize("kind,mask", OPERATORS)
    def test_derivative_matches_finite_differences(self, kind, mask, rng):
        obs = ObservationModel(kind, 1.0, 3, mask=mask)
        x = rng.normal(0.0, 3.0, (5, 3))
        v = rng.standard_normal((5, 3))
        h = 1e-6
        numeric = (obs.apply(x + h * v) - obs.apply(x - h * v)) / (2.0 * h)
        np.testing.assert_allclose(obs.jvp(x, v), numeric, rtol=1e-7, atol=1e-9)

    @pytest.mark.parametrize("kind,mask", OPERATORS)
    def test_vjp_is_adjoint(self, kind, mask, rng):
        obs = ObservationModel(kind, 1.0, 3, mask=mask)
        x = rng.standard_normal((4, 3))
        v = rng.standard_normal((4, 3))
        u = rng.standard_normal((4, obs.obs_dim))
        np.testing.assert_allclose(np.sum(obs.jvp(x, v) * u, axis=1), np.sum(v * obs.vjp(x, u), axis=1))


class TestLikelihood:
    def test_gaussian_density(self):
        obs = ObservationModel(OperatorKind.IDENTITY, 2.0, 1)
        value = obs.log_likelihood([1.0], [[0.0], [1.0]])
        expected = -0.5 * np.array([0.25, 0.0]) - 0.5 * np.log(2.0 * np.pi * 4.0)
        np.testing.assert_allclose(value, expected)

    def test_observation_dimension(self):
        obs = ObservationModel(OperatorKind.SPARSE_LINEAR, 1.0, 3, mask=(0,))
        with pytest.raises(DimensionMismatchError):
            obs.log_likelihood([1.0, 2.0], np.zeros((2, 3)))
