"""
Общие фикстуры тестов
"""
import numpy as np
import pytest
from scipy.integrate import trapezoid

from daisi_assimilation.config.settings import settings
from daisi_assimilation.core.drift import DriftModel, GaussianDrift, GmmDrift, GmmPrior
from daisi_assimilation.core.interpolant import LINEAR, NormStats


@pytest.fixture(autouse=True)
def isolated_dirs(tmp_path, monkeypatch):
    """Логи и результаты каждого теста пишутся во временный каталог"""
    monkeypatch.setattr(settings, "out_dir", tmp_path / "out")
    monkeypatch.setattr(settings, "log_dir", tmp_path / "logs")
    monkeypatch.setattr(settings, "threads", 1)


@pytest.fixture
def rng():
    return np.random.default_rng(20240917)


@pytest.fixture
def gmm_prior():
    return GmmPrior.testbed()


@pytest.fixture
def gmm_model(gmm_prior):
    return GmmDrift(gmm_prior)


@pytest.fixture
def std_gaussian():
    return GaussianDrift(0.0, 1.0)


@pytest.fixture
def scaled_gaussian():
    """N(0, 4): стандартная гауссиана в нормализованном пространстве, NormStats(0, 2)"""
    drift = GaussianDrift(0.0, 1.0)
    drift.stats = NormStats(np.zeros(1), 2.0)
    return drift


class ZeroDrift(DriftModel):
    """b = 0 в нормализованном пространстве"""

    def __init__(self, dim: int = 1):
        self.stats = NormStats.identity(dim)

    def normalized_drift(self, w, t):
        return np.zeros_like(np.asarray(w, dtype=float))


class GmmQuadrature:
    """
    Квадратурный оракул интерполянта к одномерной смеси

    z_t | z_1 ~ N(alpha z_1, beta^2), интеграл по сетке z_1.
    """

    def __init__(self, prior: GmmPrior, lo: float = -12.0, hi: float = 12.0, n: int = 240_001):
        self.prior = prior
        self.grid = np.linspace(lo, hi, n)
        self.prior_pdf = prior.pdf(self.grid)

    def _kernel(self, z: float, t: float) -> np.ndarray:
        a, b = LINEAR.alpha(t), LINEAR.beta(t)
        return np.exp(-0.5 * (z - a * self.grid) ** 2 / b ** 2) / np.sqrt(2.0 * np.pi * b ** 2)

    def density(self, z: float, t: float) -> float:
        return float(trapezoid(self.prior_pdf * self._kernel(z, t), self.grid))

    def log_density(self, z: float, t: float) -> float:
        return float(np.log(self.density(z, t)))

    def expect(self, fn, z: float, t: float) -> float:
        """E[fn(z_1) | z_t = z]"""
        weights = self.prior_pdf * self._kernel(z, t)
        return float(trapezoid(fn(self.grid) * weights, self.grid) / trapezoid(weights, self.grid))

    def drift(self, z: float, t: float) -> float:
        """E[z_1 - z_0 | z_t = z], z_0 = (z - alpha z_1) / beta"""
        a, b = LINEAR.alpha(t), LINEAR.beta(t)
        return self.expect(lambda z1: z1 - (z - a * z1) / b, z, t)

    def score(self, z: float, t: float, h: float = 1e-4) -> float:
        return (self.log_density(z + h, t) - self.log_density(z - h, t)) / (2.0 * h)


@pytest.fixture(scope="session")
def gmm_quadrature():
    return GmmQuadrature(GmmPrior.testbed())


@pytest.fixture
def zero_drift():
    return ZeroDrift()
