"""
Стохастический интерполянт z_t = alpha_t z_1 + beta_t z_0

Расписание, тождества дрейф / скор / условные средние и
пересчет дрейфа из нормализованного пространства в пространство данных.
"""
from dataclasses import dataclass, field
from enum import Enum
from typing import Callable

import numpy as np

from ..api.errors import DomainError, SingularScheduleError
from ..config.constants import SCORE_DELTA
from ..utils.validators import validate_time

DriftFn = Callable[[np.ndarray, float], np.ndarray]


class ScheduleKind(str, Enum):
    """Вид расписания интерполянта"""
    LINEAR = "linear"


def _as_time(t):
    """Скаляр или массив времен (массив при обучении)"""
    return np.asarray(t, dtype=float) if np.ndim(t) else float(t)


@dataclass(frozen=True)
class Schedule:
    """Расписание alpha_t, beta_t и их производные"""
    kind: ScheduleKind = ScheduleKind.LINEAR

    def alpha(self, t):
        return _as_time(t)

    def beta(self, t):
        return 1.0 - _as_time(t)

    def dalpha(self, t: float) -> float:
        return 1.0

    def dbeta(self, t: float) -> float:
        return -1.0


LINEAR = Schedule()


@dataclass(frozen=True)
class ScheduleCoeffs:
    """Коэффициенты расписания в момент t"""
    t: float
    alpha: float
    beta: float
    dalpha: float
    dbeta: float
    gamma: float

    @property
    def lam(self) -> float:
        """lambda_t = beta_t gamma_t / alpha_t (не определена при t = 0)"""
        if self.alpha == 0.0:
            raise SingularScheduleError("lambda_t не определена при alpha_t = 0", t=self.t)
        return self.beta * self.gamma / self.alpha

    def as_tuple(self):
        """(alpha, beta, dalpha, dbeta, gamma, lambda)"""
        return (self.alpha, self.beta, self.dalpha, self.dbeta, self.gamma, self.lam)


def schedule_coeffs(schedule: Schedule, t: float) -> ScheduleCoeffs:
    """
    Коэффициенты расписания

    Args:
        schedule: Расписание
        t: Время в [0, 1]

    Returns:
        ScheduleCoeffs: alpha, beta, производные и gamma; lambda доступна через .lam

    Raises:
        DomainError: t вне [0, 1]
    """
    t = validate_time(t)
    alpha, beta = schedule.alpha(t), schedule.beta(t)
    dalpha, dbeta = schedule.dalpha(t), schedule.dbeta(t)
    gamma = dalpha * beta - alpha * dbeta
    return ScheduleCoeffs(t, alpha, beta, dalpha, dbeta, gamma)


def _check_score_time(t: float) -> None:
    if t >= 1.0 - SCORE_DELTA:
        raise SingularScheduleError(
            f"Скор не определен при t >= 1 - {SCORE_DELTA}", t=t
        )


def score_from_drift(b, z, t: float, schedule: Schedule = LINEAR) -> np.ndarray:
    """
    Скор маргинали интерполянта по дрейфу: (alpha b - dalpha z) / (beta gamma)

    Raises:
        SingularScheduleError: t >= 1 - SCORE_DELTA
    """
    c = schedule_coeffs(schedule, t)
    _check_score_time(c.t)
    return (c.alpha * np.asarray(b) - c.dalpha * np.asarray(z)) / (c.beta * c.gamma)


def denoiser_mean_from_drift(b, z, t: float, schedule: Schedule = LINEAR) -> np.ndarray:
    """E[z_1 | z_t] = (beta b - dbeta z) / gamma; при t = 1 совпадает с z"""
    c = schedule_coeffs(schedule, t)
    if c.t == 1.0:
        return np.array(z, dtype=float, copy=True)
    return (c.beta * np.asarray(b) - c.dbeta * np.asarray(z)) / c.gamma


def noise_mean_from_drift(b, z, t: float, schedule: Schedule = LINEAR) -> np.ndarray:
    """E[z_0 | z_t] = -beta s"""
    c = schedule_coeffs(schedule, t)
    return -c.beta * score_from_drift(b, z, t, schedule)


@dataclass(frozen=True)
class NormStats:
    """Статистики нормализации: вектор mu и скаляр sigma (единицы данных)"""
    mu: np.ndarray
    sigma: float = 1.0

    def __post_init__(self):
        object.__setattr__(self, "mu", np.atleast_1d(np.asarray(self.mu, dtype=float)))
        if not (np.isfinite(self.sigma) and self.sigma > 0.0):
            raise DomainError(f"sigma нормализации должна быть > 0, получено {self.sigma}")
        object.__setattr__(self, "sigma", float(self.sigma))

    @classmethod
    def identity(cls, dim: int) -> "NormStats":
        return cls(np.zeros(dim), 1.0)

    @property
    def dim(self) -> int:
        return self.mu.shape[0]

    def normalize(self, z: np.ndarray) -> np.ndarray:
        return (np.asarray(z) - self.mu) / self.sigma

    def denormalize(self, w: np.ndarray) -> np.ndarray:
        return self.mu + self.sigma * np.asarray(w)

    def __eq__(self, other) -> bool:
        if not isinstance(other, NormStats):
            return NotImplemented
        return self.sigma == other.sigma and np.array_equal(self.mu, other.mu)

    def __hash__(self):
        return hash((self.sigma, self.mu.tobytes()))


def rescale_drift(b_w: DriftFn, stats: NormStats) -> DriftFn:
    """Дрейф в пространстве данных: b_Z(z, t) = sigma b_W((z - mu) / sigma, t)"""

    def b_z(z, t):
        return stats.sigma * np.asarray(b_w(stats.normalize(z), t))

    return b_z


def scaled_score(b_z, z, t: float, stats: NormStats, schedule: Schedule = LINEAR) -> np.ndarray:
    """
    Скор в пространстве данных для модели, обученной на нормализованных данных

    s_Z = (alpha b_Z - dalpha (z - mu)) / (sigma^2 beta gamma)
    """
    c = schedule_coeffs(schedule, t)
    _check_score_time(c.t)
    centered = np.asarray(z) - stats.mu
    return (c.alpha * np.asarray(b_z) - c.dalpha * centered) / (stats.sigma ** 2 * c.beta * c.gamma)


@dataclass(frozen=True)
class EpsSchedule:
    """Интенсивность диффузии eps_t = eps (1 - t)"""
    eps: float = field(default=0.0)

    def __post_init__(self):
        if not (np.isfinite(self.eps) and self.eps >= 0.0):
            raise DomainError(f"eps должно быть >= 0, получено {self.eps}")

    def __call__(self, t: float) -> float:
        return self.eps * (1.0 - float(t))
