"""
Динамические системы и генерация наблюдений

- Лоренц-63 (RK4, dt = 0.01)
- Скалярная линейно-гауссова авторегрессия (оракул фильтра Калмана)
- Статическая система и тестовый стенд одномерной смеси
"""
import logging
from abc import ABC, abstractmethod
from dataclasses import dataclass
from enum import Enum
from typing import Callable, Iterable, Optional

import numpy as np

from ..api.errors import DomainError
from ..config.constants import (
    L63_BETA,
    L63_DT,
    L63_RHO,
    L63_SIGMA,
    L63_X0,
    TESTBED_N,
    TESTBED_SIGMA_OBS,
    TESTBED_TILT_MEAN,
    TESTBED_TILT_STD,
    TESTBED_Y,
)
from ..models.ensemble import Ensemble
from ..models.observation import ObservationModel, OperatorKind
from ..utils.rng import MemberNoise, Stage, derive_rng
from ..utils.validators import as_matrix
from .drift import GmmPrior
from .filters import reweight_resample

logger = logging.getLogger(__name__)


# ========== ЛОРЕНЦ-63 ==========

@dataclass(frozen=True)
class L63Params:
    """Параметры Лоренца-63 и шаг интегрирования"""
    sigma: float = L63_SIGMA
    rho: float = L63_RHO
    beta: float = L63_BETA
    dt: float = L63_DT

    def __post_init__(self):
        if not self.dt > 0.0:
            raise DomainError(f"dt должно быть > 0, получено {self.dt}")


def l63_rhs(x, params: L63Params = L63Params()) -> np.ndarray:
    """Векторное поле (sigma (x2 - x1), x1 (rho - x3) - x2, x1 x2 - beta x3) по последней оси"""
    x = np.asarray(x, dtype=float)
    x1, x2, x3 = x[..., 0], x[..., 1], x[..., 2]
    return np.stack([
        params.sigma * (x2 - x1),
        x1 * (params.rho - x3) - x2,
        x1 * x2 - params.beta * x3,
    ], axis=-1)


def rk4_step(f: Callable[[np.ndarray], np.ndarray], x, dt: float) -> np.ndarray:
    """Классический шаг Рунге-Кутты 4-го порядка"""
    if not dt > 0.0:
        raise DomainError(f"dt должно быть > 0, получено {dt}")
    x = np.asarray(x, dtype=float)
    k1 = f(x)
    k2 = f(x + 0.5 * dt * k1)
    k3 = f(x + 0.5 * dt * k2)
    k4 = f(x + dt * k3)
    return x + dt / 6.0 * (k1 + 2.0 * k2 + 2.0 * k3 + k4)


def l63_trajectory(x0, n_steps: int, params: L63Params = L63Params()) -> np.ndarray:
    """Траектория из n_steps состояний (n_steps, 3); первая строка равна x0"""
    if n_steps < 1:
        raise DomainError(f"n_steps должно быть >= 1, получено {n_steps}")
    traj = np.empty((n_steps, 3))
    traj[0] = np.asarray(x0, dtype=float)
    rhs = lambda v: l63_rhs(v, params)  # noqa: E731
    for k in range(1, n_steps):
        traj[k] = rk4_step(rhs, traj[k - 1], params.dt)
    return traj


# ========== ПРОПАГАТОРЫ ==========

class PropagatorKind(str, Enum):
    L63 = "l63"
    LINEAR_GAUSSIAN = "linear_gaussian"
    STATIC = "static"


NoiseHook = Callable[[np.ndarray, MemberNoise], Optional[np.ndarray]]


class Propagator(ABC):
    """
    Прогноз x_n = F(x_{n-1}, omega_n) для всех членов ансамбля

    Шум модели omega добавляется хуком по членам; поток шума члена j выводится
    из (seed, FORECAST, step, j).
    """

    kind: PropagatorKind
    steps_per_assimilation: int = 1
    noise_hook: Optional[NoiseHook] = None

    @abstractmethod
    def advance(self, x: np.ndarray) -> np.ndarray:
        """Один детерминированный шаг модели"""

    def process_noise(self, x: np.ndarray, noise: MemberNoise) -> Optional[np.ndarray]:
        """Шум модели (по умолчанию нет)"""
        if self.noise_hook is not None:
            return self.noise_hook(x, noise)
        return None

    def propagate(self, members, step: int = 0, seed: int = 0,
                  member_ids: Optional[Iterable[int]] = None) -> np.ndarray:
        """Прогноз ансамбля на один интервал ассимиляции"""
        x = as_matrix(members, "members").copy()
        ids = np.arange(x.shape[0]) if member_ids is None else np.asarray(list(member_ids))
        for _ in range(self.steps_per_assimilation):
            x = self.advance(x)
        omega = self.process_noise(x, MemberNoise(seed, Stage.FORECAST, step, ids, x.shape[1]))
        return x if omega is None else x + omega


class L63Propagator(Propagator):
    """Лоренц-63 без шума модели (omega = 0)"""

    kind = PropagatorKind.L63

    def __init__(self, params: L63Params = L63Params(), steps_per_assimilation: int = 1,
                 noise_hook: Optional[NoiseHook] = None):
        self.params = params
        self.steps_per_assimilation = int(steps_per_assimilation)
        self.noise_hook = noise_hook

    def advance(self, x):
        return rk4_step(lambda v: l63_rhs(v, self.params), x, self.params.dt)


class LinearGaussianPropagator(Propagator):
    """x_n = a x_{n-1} + sqrt(q) xi покомпонентно"""

    kind = PropagatorKind.LINEAR_GAUSSIAN

    def __init__(self, a: float, q: float, steps_per_assimilation: int = 1,
                 noise_hook: Optional[NoiseHook] = None):
        if q < 0.0:
            raise DomainError(f"Дисперсия шума модели q должна быть >= 0, получено {q}")
        self.a = float(a)
        self.q = float(q)
        self.steps_per_assimilation = int(steps_per_assimilation)
        self.noise_hook = noise_hook

    def advance(self, x):
        return self.a * x

    def process_noise(self, x, noise):
        if self.noise_hook is not None:
            return self.noise_hook(x, noise)
        if self.q == 0.0:
            return None
        return np.sqrt(self.q) * noise.standard_normal((x.shape[0], x.shape[1]))

    def propagate(self, members, step=0, seed=0, member_ids=None):
        if self.steps_per_assimilation != 1 and self.q > 0.0:
            raise DomainError("Шум модели задан на один шаг: steps_per_assimilation должно быть 1")
        return super().propagate(members, step, seed, member_ids)


class StaticPropagator(Propagator):
    """Состояние не меняется"""

    kind = PropagatorKind.STATIC

    def __init__(self):
        self.steps_per_assimilation = 1
        self.noise_hook = None

    def advance(self, x):
        return x


# ========== НАБЛЮДЕНИЯ ==========

def observe(x, obs: ObservationModel, rng: np.random.Generator) -> np.ndarray:
    """y = H(x) + N(0, sigma_obs^2 I); для вектора x возвращает вектор"""
    x_arr = np.asarray(x, dtype=float)
    hx = obs.apply(as_matrix(x_arr, "x", obs.state_dim))
    y = hx + obs.sigma_obs * rng.standard_normal(hx.shape)
    return y[0] if x_arr.ndim <= 1 else y


# ========== ТЕСТОВЫЙ СТЕНД СМЕСИ ==========

def testbed_tilt(x, mean: float = TESTBED_TILT_MEAN, std: float = TESTBED_TILT_STD) -> np.ndarray:
    """Функция перевзвешивания f(x) = exp(-|x - mean|^2 / (2 std^2))"""
    x = as_matrix(x, "x")
    return np.exp(-0.5 * np.sum((x - mean) ** 2, axis=1) / std ** 2)


@dataclass
class GmmTestbed:
    """Тестовый стенд: пул, прогноз, наблюдение и эталонные выборки"""
    prior: GmmPrior
    pool: np.ndarray  # выборки P_inf для Monte Carlo наведения
    forecast: Ensemble  # pi_hat ~ f P_inf
    y: np.ndarray
    obs: ObservationModel
    oracle: np.ndarray  # pi ~ p(y|.) f P_inf
    prior_posterior: np.ndarray  # P_inf^y ~ p(y|.) P_inf

    def likelihood(self, x) -> np.ndarray:
        return np.exp(self.obs.log_likelihood(self.y, x))

    def sample_oracle(self, n: int, rng: np.random.Generator) -> np.ndarray:
        """Свежие выборки истинного распределения фильтрации"""
        draws = self.prior.sample(n, rng)
        return reweight_resample(draws, lambda x: self.likelihood(x) * testbed_tilt(x), rng)


def build_gmm_testbed(seed: int, n: int = TESTBED_N, prior: Optional[GmmPrior] = None,
                      y: float = TESTBED_Y, sigma_obs: float = TESTBED_SIGMA_OBS) -> GmmTestbed:
    """
    Собрать тестовый стенд смеси

    Каждый набор строится из независимых выборок P_inf перевзвешиванием
    и мультиномиальной передискретизацией.
    """
    prior = prior or GmmPrior.testbed()
    rng = derive_rng(seed, Stage.TESTBED)
    obs = ObservationModel(OperatorKind.IDENTITY, sigma_obs, state_dim=1)
    y_arr = np.array([float(y)])

    pool = prior.sample(n, rng)
    forecast = reweight_resample(prior.sample(n, rng), testbed_tilt, rng)

    def lik(x):
        return np.exp(obs.log_likelihood(y_arr, x))

    oracle = reweight_resample(prior.sample(n, rng), lambda x: lik(x) * testbed_tilt(x), rng)
    prior_posterior = reweight_resample(prior.sample(n, rng), lik, rng)
    logger.info(f"Тестовый стенд смеси: N={n}, y={y}, sigma_obs={sigma_obs}, seed={seed}")
    return GmmTestbed(prior, pool, Ensemble(forecast), y_arr, obs, oracle, prior_posterior)


def attractor_samples(n: int, stride: int = 10, burn_in: int = 1000,
                      x0=L63_X0, params: L63Params = L63Params()) -> np.ndarray:
    """
    Выборки стационарного распределения Лоренца-63: каждое stride-е состояние
    траектории после burn_in шагов (пул Monte Carlo наведения)
    """
    if n < 1 or stride < 1 or burn_in < 0:
        raise DomainError("n >= 1, stride >= 1 и burn_in >= 0 обязательны")
    trajectory = l63_trajectory(x0, burn_in + n * stride, params)
    return trajectory[burn_in::stride][:n].copy()
