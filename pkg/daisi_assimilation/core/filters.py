"""
Фильтры: цикл DAISI, бутстрап-фильтр частиц, перевзвешивание и фильтр Калмана (оракул)
"""
import logging
from dataclasses import dataclass, replace
from typing import TYPE_CHECKING, Callable, Optional, Sequence, Union

import numpy as np
from joblib import Parallel, delayed
from scipy import linalg
from scipy.special import softmax

from ..api.errors import (
    ConfigError,
    DaisiError,
    DomainError,
    NonPsdCovarianceError,
    WeightDegeneracyError,
)
from ..config.settings import settings
from ..models.ensemble import Ensemble, FilterTrace
from ..models.observation import ObservationModel
from ..utils.rng import MemberNoise, Stage, derive_rng
from ..utils.validators import as_matrix
from .drift import DriftModel
from .guidance import GuidanceKind, GuidanceMethod
from .interpolant import schedule_coeffs
from .metrics import evaluate
from .sde import LatentState, SdeConfig, integrate_backward, integrate_guided_forward

if TYPE_CHECKING:
    from .systems import Propagator

logger = logging.getLogger(__name__)

DriftSource = Union[DriftModel, Callable[[np.ndarray], DriftModel]]


# ========== КОНФИГУРАЦИЯ DAISI ==========

@dataclass
class DaisiConfig:
    """Гиперпараметры шага анализа DAISI"""
    t_min: float = 0.3
    eps: float = 0.0
    steps: int = 200
    guidance: Optional[GuidanceMethod] = None
    seed: int = 0
    invert: bool = True  # False: свежий латент вместо инверсии прогноза

    def __post_init__(self):
        if not 0.0 <= self.t_min < 1.0:
            raise ConfigError(f"t_min должно лежать в [0, 1), получено {self.t_min}")
        if self.eps < 0.0:
            raise ConfigError(f"eps должно быть >= 0, получено {self.eps}")
        if self.guided and self.t_min == 0.0:
            raise ConfigError("t_min = 0 при активном наведении: lambda_t не определена")

    @property
    def guided(self) -> bool:
        return self.guidance is not None and self.guidance.zeta > 0.0

    def sde_config(self) -> SdeConfig:
        return SdeConfig(steps=self.steps, eps=self.eps, t_min=self.t_min, seed=self.seed)


# ========== ШАГ АНАЛИЗА ==========

def _fresh_latent(n: int, ids: np.ndarray, drift: DriftModel, cfg: DaisiConfig, step: int,
                  sde: SdeConfig):
    """
    Латент без инверсии прогноза

    С пулом априорных выборок: z = alpha x~ + (1 - alpha) mu + sigma beta xi в t_min.
    Без пула: старт из опорной меры N(mu, sigma^2 I) при t = 0.
    """
    noise = MemberNoise(cfg.seed, Stage.NO_INVERSION, step, ids, drift.dim)
    stats = drift.stats
    pool = cfg.guidance.mc_pool if cfg.guidance is not None else None
    if pool is None:
        z = stats.mu + stats.sigma * noise.standard_normal((n, drift.dim))
        return LatentState(z, 0.0), replace(sde, t_min=0.0)
    picks = pool[noise.integers(pool.shape[0])]
    c = schedule_coeffs(drift.schedule, sde.t_min)
    z = (c.alpha * picks + (1.0 - c.alpha) * stats.mu
         + stats.sigma * c.beta * noise.standard_normal((n, drift.dim)))
    return LatentState(z, sde.t_min), sde


def _analyse_block(block: np.ndarray, ids: np.ndarray, y, obs: ObservationModel,
                   drift: DriftModel, cfg: DaisiConfig, step: int) -> np.ndarray:
    sde = cfg.sde_config()
    stochastic = cfg.eps > 0.0
    try:
        if cfg.invert:
            noise_b = (MemberNoise(cfg.seed, Stage.BACKWARD, step, ids, drift.dim).buffered(sde.steps)
                       if stochastic else None)
            latent = integrate_backward(drift, sde, block, noise_b)
        else:
            latent, sde = _fresh_latent(block.shape[0], ids, drift, cfg, step, sde)
        noise_f = (MemberNoise(cfg.seed, Stage.FORWARD, step, ids, drift.dim).buffered(sde.steps)
                   if stochastic else None)
        return integrate_guided_forward(drift, cfg.guidance, y, obs, sde, latent, noise_f)
    except DaisiError as exc:
        row = exc.details.pop("row", None)
        if row is not None:
            raise exc.with_details(member=int(ids[row]), assimilation_step=step)
        raise exc.with_details(members=f"{int(ids[0])}..{int(ids[-1])}", assimilation_step=step)


def daisi_analysis(forecast: Ensemble, y, obs: ObservationModel, drift: DriftModel,
                   cfg: DaisiConfig, step: Optional[int] = None,
                   member_ids: Optional[Sequence[int]] = None,
                   threads: Optional[int] = None, chunk: Optional[int] = None) -> Ensemble:
    """
    Шаг анализа DAISI: инверсия прогноза обратным СДУ до t_min и прямое СДУ с наведением

    Члены обрабатываются блоками фиксированного размера в потоках joblib; поток
    шума члена определяется (seed, стадия, шаг, индекс члена), поэтому результат
    не зависит от числа потоков.

    Args:
        forecast: Прогнозный ансамбль
        y: Наблюдение
        obs: Модель наблюдений
        drift: Дрейф априорной модели
        cfg: Гиперпараметры
        step: Номер шага ассимиляции (по умолчанию forecast.step)
        member_ids: Индексы членов для потоков шума (по умолчанию 0..J-1)
        threads: Число потоков (по умолчанию settings.threads)
        chunk: Размер блока членов (по умолчанию settings.member_chunk)

    Returns:
        Ensemble: Ансамбль анализа
    """
    step = forecast.step if step is None else int(step)
    members = forecast.members
    ids = np.arange(members.shape[0]) if member_ids is None else np.asarray(member_ids, dtype=np.int64)
    if ids.shape[0] != members.shape[0]:
        raise DomainError("Число индексов членов не совпадает с размером ансамбля")
    chunk = int(chunk or settings.member_chunk)
    threads = int(threads or settings.threads)
    starts = range(0, members.shape[0], chunk)
    blocks = Parallel(n_jobs=threads, prefer="threads")(
        delayed(_analyse_block)(members[s:s + chunk], ids[s:s + chunk], y, obs, drift, cfg, step)
        for s in starts
    )
    return Ensemble(np.vstack(blocks), step=step)


def daisi_run(init: Ensemble, observations, dynamics: "Propagator", obs: ObservationModel,
              drift: DriftSource, cfg: DaisiConfig, truths=None,
              threads: Optional[int] = None, keep_ensembles: bool = False) -> FilterTrace:
    """
    Цикл фильтрации DAISI: прогноз динамикой, затем шаг анализа

    Args:
        init: Начальный ансамбль
        observations: Последовательность наблюдений (N, d_y)
        dynamics: Пропагатор
        obs: Модель наблюдений
        drift: Дрейф или функция (члены прогноза) -> дрейф (априорная модель на шаге)
        cfg: Гиперпараметры DAISI
        truths: Истинные состояния (N, d) для метрик
        threads: Число потоков
        keep_ensembles: Сохранять полные ансамбли в истории

    Returns:
        FilterTrace: История длины N
    """
    trace = FilterTrace(keep_ensembles=keep_ensembles)
    members = init.members
    for n, y in enumerate(observations):
        forecast = Ensemble(dynamics.propagate(members, step=n, seed=cfg.seed), step=n)
        model = drift if isinstance(drift, DriftModel) else drift(forecast.members)
        analysis = daisi_analysis(forecast, y, obs, model, cfg, step=n, threads=threads)
        members = analysis.members
        metrics = evaluate(members, truths[n]) if truths is not None else None
        trace.append(n, members, metrics)
        if metrics:
            logger.debug(f"DAISI шаг {n}: rmse={metrics['rmse']:.4f}, spread={metrics['spread']:.4f}")
    logger.info(f"DAISI: ассимилировано {len(trace)} наблюдений")
    return trace


# ========== ПЕРЕДИСКРЕТИЗАЦИЯ ==========

def _normalized(weights) -> np.ndarray:
    w = np.asarray(weights, dtype=float).ravel()
    if np.any(~np.isfinite(w)) or np.any(w < 0.0):
        raise DomainError("Веса должны быть конечными и неотрицательными")
    total = w.sum()
    if total <= 0.0:
        raise WeightDegeneracyError("Все веса равны нулю")
    return w / total


def resample_indices(weights, rng: np.random.Generator, scheme: str = "systematic",
                     n: Optional[int] = None) -> np.ndarray:
    """Индексы передискретизации: systematic (одна равномерная величина) или multinomial"""
    w = _normalized(weights)
    n = w.size if n is None else int(n)
    if scheme == "multinomial":
        return rng.choice(w.size, size=n, p=w)
    if scheme != "systematic":
        raise ConfigError(f"Неизвестная схема передискретизации: {scheme}")
    positions = (rng.random() + np.arange(n)) / n
    cumulative = np.cumsum(w)
    cumulative[-1] = 1.0
    return np.minimum(np.searchsorted(cumulative, positions, side="right"), w.size - 1)


def reweight_resample(samples, weight_fn: Callable[[np.ndarray], np.ndarray],
                      rng: np.random.Generator, n: Optional[int] = None,
                      scheme: str = "multinomial") -> np.ndarray:
    """
    Перевзвесить выборки весами weight_fn и передискретизировать с возвращением

    Raises:
        WeightDegeneracyError: все веса нулевые
    """
    samples = as_matrix(samples, "samples")
    idx = resample_indices(weight_fn(samples), rng, scheme, n)
    return samples[idx]


# ========== БУТСТРАП-ФИЛЬТР ЧАСТИЦ ==========

def bpf_run(init, observations, dynamics: "Propagator", obs: ObservationModel,
            scheme: str = "systematic", seed: int = 0, truths=None,
            keep_ensembles: bool = False) -> FilterTrace:
    """
    Бутстрап-фильтр: прогноз, веса по гауссовскому правдоподобию (лог-пространство),
    передискретизация на каждом шаге. В истории сохраняется ESS до передискретизации.

    Raises:
        WeightDegeneracyError: все лог-веса равны -inf (с номером шага)
    """
    particles = init.members if isinstance(init, Ensemble) else as_matrix(init, "init")
    if particles.shape[0] < 1:
        raise DomainError("Нужна хотя бы одна частица")
    rng = derive_rng(seed, Stage.RESAMPLE)
    trace = FilterTrace(keep_ensembles=keep_ensembles)
    for n, y in enumerate(observations):
        particles = dynamics.propagate(particles, step=n, seed=seed)
        log_w = obs.log_likelihood(y, particles)
        if not np.any(np.isfinite(log_w)):
            raise WeightDegeneracyError("Вырождение весов частиц", step=n)
        w = softmax(np.where(np.isfinite(log_w), log_w, -np.inf))
        ess = float(1.0 / np.sum(w ** 2))
        particles = particles[resample_indices(w, rng, scheme)]
        metrics = evaluate(particles, truths[n]) if truths is not None else None
        trace.append(n, particles, metrics, ess=ess)
    logger.info(f"BPF: ассимилировано {len(trace)} наблюдений, схема {scheme}")
    return trace


# ========== ФИЛЬТР КАЛМАНА ==========

@dataclass
class KalmanResult:
    means: np.ndarray  # (N, d)
    covs: np.ndarray  # (N, d, d)


def _check_psd(matrix: np.ndarray, name: str) -> np.ndarray:
    matrix = np.atleast_2d(np.asarray(matrix, dtype=float))
    if matrix.shape[0] != matrix.shape[1] or not np.allclose(matrix, matrix.T, atol=1e-12):
        raise NonPsdCovarianceError(f"Матрица {name} не симметрична")
    eig = np.linalg.eigvalsh(matrix)
    if eig.min() < -1e-10 * max(1.0, abs(eig.max())):
        raise NonPsdCovarianceError(f"Матрица {name} имеет отрицательное собственное значение {eig.min():.3e}")
    return matrix


def kalman_filter(A, Q, H, R, m0, P0, observations) -> KalmanResult:
    """
    Фильтр Калмана: прогноз m = A m, P = A P A^T + Q, затем обновление по наблюдению

    Returns:
        KalmanResult: апостериорные средние и ковариации на каждом шаге

    Raises:
        NonPsdCovarianceError: ковариация не положительно полуопределена
    """
    A = np.atleast_2d(np.asarray(A, dtype=float))
    H = np.atleast_2d(np.asarray(H, dtype=float))
    Q, R, P = _check_psd(Q, "Q"), _check_psd(R, "R"), _check_psd(P0, "P0")
    m = np.atleast_1d(np.asarray(m0, dtype=float))
    means, covs = [], []
    for y in observations:
        m = A @ m
        P = A @ P @ A.T + Q
        S = H @ P @ H.T + R
        try:
            K = linalg.solve(S, H @ P, assume_a="pos").T
        except (linalg.LinAlgError, ValueError) as exc:
            raise NonPsdCovarianceError(f"Ковариация инновации вырождена: {exc}")
        m = m + K @ (np.atleast_1d(y) - H @ m)
        P = (np.eye(P.shape[0]) - K @ H) @ P
        P = 0.5 * (P + P.T)
        means.append(m.copy())
        covs.append(P.copy())
    d = m.shape[0]
    return KalmanResult(np.array(means).reshape(-1, d), np.array(covs).reshape(-1, d, d))


__all__ = [
    "DaisiConfig",
    "GuidanceKind",
    "daisi_analysis",
    "daisi_run",
    "bpf_run",
    "reweight_resample",
    "resample_indices",
    "kalman_filter",
    "KalmanResult",
]
