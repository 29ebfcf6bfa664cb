"""
Интегрирование СДУ интерполянта методом Эйлера-Маруямы

Прямое:   dz = (b + eps_t s) dt + sqrt(2 eps_t) dW,   t: t_from -> 1
Обратное: dz = (b - eps_t s) dt + sqrt(2 eps_t) dW,   t: 1 -> t_min
Прямое с наведением: b, s заменяются на b~, s~ из модуля guidance.
"""
import logging
from dataclasses import dataclass, field
from typing import Optional, Union

import numpy as np

from ..api.errors import DomainError, GuidanceError, SingularScheduleError
from ..config.constants import FINITE_CHECK_EVERY, SCORE_DELTA
from ..utils.validators import as_matrix, check_finite, validate_time
from .drift import DriftModel
from .guidance import guided_terms
from .interpolant import EpsSchedule, schedule_coeffs

logger = logging.getLogger(__name__)


@dataclass
class SdeConfig:
    """Параметры интегрирования: число шагов T, eps, t_min, seed"""
    steps: int = 200
    eps: Union[float, EpsSchedule] = 0.0
    t_min: float = 0.0
    seed: int = 0

    def __post_init__(self):
        if not isinstance(self.eps, EpsSchedule):
            self.eps = EpsSchedule(float(self.eps))
        if int(self.steps) < 1:
            raise DomainError(f"Число шагов должно быть >= 1, получено {self.steps}")
        self.steps = int(self.steps)
        if not 0.0 <= float(self.t_min) < 1.0:
            raise DomainError(f"t_min должно лежать в [0, 1), получено {self.t_min}")
        self.t_min = float(self.t_min)

    @property
    def dt(self) -> float:
        return (1.0 - self.t_min) / self.steps

    def grid(self, t_from: Optional[float] = None) -> np.ndarray:
        """Равномерная сетка на [t_from, 1] из steps интервалов"""
        start = self.t_min if t_from is None else t_from
        return np.linspace(start, 1.0, self.steps + 1)


@dataclass
class LatentState:
    """Латентное состояние z в момент t"""
    z: np.ndarray
    t: float = field(default=0.0)

    def __post_init__(self):
        self.t = validate_time(self.t)


def _score_term(drift: DriftModel, z: np.ndarray, t: float, b: np.ndarray,
                eps: EpsSchedule) -> Optional[np.ndarray]:
    """
    eps_t s(t, z); None если eps_t = 0

    Вблизи t = 1 произведение берется в сокращенном виде: при beta_t = 1 - t
    множитель (1 - t) из eps_t сокращается со знаменателем скора.
    """
    eps_t = eps(t)
    if eps_t <= 0.0:
        return None
    if t < 1.0 - SCORE_DELTA:
        return eps_t * drift.score(z, t, drift=b)
    c = schedule_coeffs(drift.schedule, t)
    stats = drift.stats
    return eps.eps * (c.alpha * b - c.dalpha * (z - stats.mu)) / (stats.sigma ** 2 * c.gamma)


def _noise(rng, shape, eps_t: float, dt: float) -> np.ndarray:
    return np.sqrt(2.0 * eps_t * dt) * rng.standard_normal(shape)


def _check(z: np.ndarray, k: int, t: float, last: bool) -> None:
    if last or k % FINITE_CHECK_EVERY == 0:
        check_finite(z, "состояние СДУ", step=k, t=round(t, 6))


def integrate_forward(drift: DriftModel, cfg: SdeConfig, z0, from_t: Optional[float] = None,
                      rng=None) -> np.ndarray:
    """
    Прямое СДУ от from_t до 1

    Args:
        drift: Вычислитель дрейфа
        cfg: Параметры (steps интервалов равномерной сетки на [from_t, 1])
        z0: Начальные состояния (n, d)
        from_t: Начальное время (по умолчанию cfg.t_min)
        rng: Источник шума с методом standard_normal (не используется при eps = 0)

    Returns:
        np.ndarray: Состояния в t = 1

    Raises:
        NumericalError: неконечное состояние (с индексом шага)
    """
    t_from = cfg.t_min if from_t is None else validate_time(from_t, "from_t")
    if t_from >= 1.0:
        raise DomainError(f"from_t должно быть < 1, получено {t_from}")
    z = as_matrix(z0, "z0", drift.dim).copy()
    grid = cfg.grid(t_from)
    for k in range(cfg.steps):
        t, dt = float(grid[k]), float(grid[k + 1] - grid[k])
        b = drift.drift(z, t)
        corr = _score_term(drift, z, t, b, cfg.eps)
        if corr is None:
            z = z + b * dt
        else:
            z = z + (b + corr) * dt + _noise(rng, z.shape, cfg.eps(t), dt)
        _check(z, k, t, k == cfg.steps - 1)
    return z


def integrate_backward(drift: DriftModel, cfg: SdeConfig, z1, rng=None) -> LatentState:
    """
    Обратное СДУ от t = 1 до t_min (инверсия прогноза)

    Шаг вычисляется в текущем (правом) узле сетки: при t = 1 eps_t = 0,
    поэтому скор на конце отрезка не вычисляется.
    """
    z = as_matrix(z1, "z1", drift.dim).copy()
    grid = cfg.grid()
    for n, k in enumerate(range(cfg.steps, 0, -1)):
        t, dt = float(grid[k]), float(grid[k] - grid[k - 1])
        b = drift.drift(z, t)
        corr = _score_term(drift, z, t, b, cfg.eps)
        if corr is None:
            z = z - b * dt
        else:
            z = z - (b - corr) * dt + _noise(rng, z.shape, cfg.eps(t), dt)
        _check(z, n, t, k == 1)
    return LatentState(z, cfg.t_min)


def integrate_guided_forward(drift: DriftModel, guidance, y, obs, cfg: SdeConfig,
                             z_start: LatentState, rng=None) -> np.ndarray:
    """
    Прямое СДУ с наведением от z_start.t = t_min до 1

    Градиент правдоподобия g дает guidance.likelihood_grad; дрейф получает
    sigma^2 lambda_t zeta g, скор получает zeta g. При zeta = 0 наведение не
    вычисляется. Масштаб sigma^2 берется из drift.stats. Шаг из t = 0
    (lambda_t не определена) выполняется без наведения.

    Raises:
        GuidanceError: сбой наведения (с индексом шага и временем)
        SingularScheduleError: вырожденное расписание внутри наведения (с индексом шага и временем)
        NumericalError: неконечное состояние
    """
    if abs(z_start.t - cfg.t_min) > 1e-12:
        raise DomainError(f"z_start.t={z_start.t} не совпадает с t_min={cfg.t_min}")
    z = as_matrix(z_start.z, "z_start", drift.dim).copy()
    grid = cfg.grid()
    zeta = float(getattr(guidance, "zeta", 0.0)) if guidance is not None else 0.0
    for k in range(cfg.steps):
        t, dt = float(grid[k]), float(grid[k + 1] - grid[k])
        b = drift.drift(z, t)
        corr = _score_term(drift, z, t, b, cfg.eps)
        if zeta > 0.0 and t > 0.0:
            try:
                g = guidance.likelihood_grad(z, t, y, obs, drift)
            except (GuidanceError, SingularScheduleError) as exc:
                raise exc.with_details(step=k, t=round(t, 6))
            b, ds = guided_terms(b, g, t, drift.schedule, zeta, drift.stats.sigma)
            if corr is not None:
                corr = corr + cfg.eps(t) * ds
        if corr is None:
            z = z + b * dt
        else:
            z = z + (b + corr) * dt + _noise(rng, z.shape, cfg.eps(t), dt)
        _check(z, k, t, k == cfg.steps - 1)
    return z

