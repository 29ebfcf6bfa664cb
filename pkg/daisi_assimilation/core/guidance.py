"""
Приближения градиента правдоподобия grad_z log p(y | z_t)

- DPS: правдоподобие в точке E[z_1 | z_t]
- MMPS: поправка на ковариацию (sigma^2 beta^2 / alpha) J, система решается методом сопряженных градиентов
- MC: асимптотически точная оценка по пулу априорных выборок
"""
import logging
from dataclasses import dataclass
from enum import Enum
from typing import Callable, Optional, Tuple

import numpy as np
from scipy.spatial.distance import cdist
from scipy.special import logsumexp, softmax

from ..api.errors import (
    CgNotConvergedError,
    DomainError,
    PoolDepletedError,
    SingularScheduleError,
)
from ..config.constants import CG_MAX_ITER, CG_TOL, POOL_CHUNK
from ..models.observation import ObservationModel
from ..utils.validators import as_matrix
from .drift import DriftModel
from .interpolant import LINEAR, NormStats, Schedule, schedule_coeffs

logger = logging.getLogger(__name__)


class GuidanceKind(str, Enum):
    """Метод наведения"""
    DPS = "dps"
    MMPS = "mmps"
    MC = "mc"


# ========== DPS ==========

def dps_grad(z_t, t: float, y, obs: ObservationModel, drift: DriftModel) -> np.ndarray:
    """
    DPS: J^T H_t^T (y - H(x_hat)), x_hat = E[z_1 | z_t]

    J = (alpha / beta^2) Cov[z_1 | z_t] симметричен, поэтому J^T применяется как JVP.
    """
    x_hat = drift.denoiser_mean(z_t, t)
    resid = np.atleast_1d(y) - obs.apply(x_hat)
    return drift.denoiser_jvp(z_t, t, obs.vjp(x_hat, resid))


# ========== MMPS ==========

def _batched_cg(matvec: Callable[[np.ndarray], np.ndarray], rhs: np.ndarray,
                tol: float = CG_TOL, max_iter: int = CG_MAX_ITER) -> np.ndarray:
    """
    Метод сопряженных градиентов для набора независимых систем (по строкам)

    Критерий остановки: |r| <= tol * |rhs| для каждой строки.

    Raises:
        CgNotConvergedError: не сошлось за max_iter итераций
    """
    x = np.zeros_like(rhs)
    r = rhs.copy()
    p = r.copy()
    rs = np.sum(r * r, axis=1)
    target = tol * np.linalg.norm(rhs, axis=1)
    for _ in range(max_iter):
        active = np.sqrt(rs) > target
        if not np.any(active):
            return x
        Ap = matvec(p)
        curv = np.sum(p * Ap, axis=1)
        step = np.where(active, rs / np.where(curv != 0.0, curv, 1.0), 0.0)
        x = x + step[:, None] * p
        r = r - step[:, None] * Ap
        rs_new = np.sum(r * r, axis=1)
        ratio = np.where(active, rs_new / np.where(rs > 0.0, rs, 1.0), 0.0)
        p = r + ratio[:, None] * p
        rs = rs_new
    residual = float(np.max(np.sqrt(rs) - target))
    if residual > 0.0:
        raise CgNotConvergedError(
            f"CG не сошелся за {max_iter} итераций, норма невязки {float(np.max(np.sqrt(rs))):.3e}",
            residual=float(np.max(np.sqrt(rs))),
        )
    return x


def mmps_grad(z_t, t: float, y, obs: ObservationModel, drift: DriftModel,
              cg_tol: float = CG_TOL, cg_max_iter: int = CG_MAX_ITER) -> np.ndarray:
    """
    MMPS: J^T H_t^T v, v = (sigma_obs^2 I + (sigma^2 beta^2 / alpha) H_t J H_t^T)^{-1} (y - H(x_hat))

    sigma берется из drift.stats: ковариация денойзера в единицах данных.

    Матрица системы размера d_y x d_y не формируется: доступ к J только через JVP.

    Raises:
        SingularScheduleError: alpha_t = 0
        CgNotConvergedError: CG не сошелся
    """
    c = schedule_coeffs(drift.schedule, t)
    if c.alpha == 0.0:
        raise SingularScheduleError("MMPS требует alpha_t > 0", t=t)
    z_t = as_matrix(z_t, "z_t", drift.dim)
    x_hat = drift.denoiser_mean(z_t, t)
    resid = np.atleast_1d(y) - obs.apply(x_hat)
    cov_scale = drift.stats.sigma ** 2 * c.beta ** 2 / c.alpha
    var = obs.sigma_obs ** 2

    def matvec(u):
        return var * u + cov_scale * obs.jvp(x_hat, drift.denoiser_jvp(z_t, t, obs.vjp(x_hat, u)))

    v = _batched_cg(matvec, resid, cg_tol, cg_max_iter)
    return drift.denoiser_jvp(z_t, t, obs.vjp(x_hat, v))


# ========== MONTE CARLO ==========

def _row_chunk(pool_size: int) -> int:
    return max(1, (POOL_CHUNK * POOL_CHUNK) // max(pool_size, 1))


def mc_grad(z_t, t: float, y, obs: ObservationModel, prior_pool: np.ndarray,
            schedule: Schedule = LINEAR, stats: Optional[NormStats] = None,
            log_lik: Optional[np.ndarray] = None) -> np.ndarray:
    """
    Monte Carlo градиент log( sum_i p(y|x_i) k_i(z) / sum_j k_j(z) )

    Ядро перехода в единицах данных: k_i = N(z; alpha x_i + (1 - alpha) mu, sigma^2 beta^2 I).
    Градиент равен alpha / (sigma^2 beta^2) * (E_w[x] - E_k[x]), где w ~ softmax(log k + log p(y|x)),
    k ~ softmax(log k). Строки z обрабатываются блоками.

    Args:
        z_t: Состояния (n, d)
        t: Время в (0, 1)
        y: Наблюдение
        obs: Модель наблюдений
        prior_pool: Пул априорных выборок (M, d)
        schedule: Расписание
        stats: Нормализация модели (по умолчанию единичная)
        log_lik: Заранее посчитанные log p(y | x_i), (M,)

    Raises:
        PoolDepletedError: все веса пула неконечны
    """
    pool = as_matrix(prior_pool, "prior_pool")
    z_t = as_matrix(z_t, "z_t", pool.shape[1])
    stats = stats or NormStats.identity(pool.shape[1])
    c = schedule_coeffs(schedule, t)
    if c.beta == 0.0:
        raise SingularScheduleError("MC наведение не определено при beta_t = 0", t=t)
    kernel_var = stats.sigma ** 2 * c.beta ** 2
    centers = c.alpha * pool + (1.0 - c.alpha) * stats.mu
    if log_lik is None:
        log_lik = obs.log_likelihood(y, pool)

    out = np.empty_like(z_t)
    step = _row_chunk(pool.shape[0])
    for start in range(0, z_t.shape[0], step):
        block = z_t[start:start + step]
        log_k = -0.5 * cdist(block, centers, "sqeuclidean") / kernel_var
        log_post = log_k + log_lik
        if not np.all(np.isfinite(logsumexp(log_post, axis=1))):
            raise PoolDepletedError(f"Веса пула обнулились при t={t:.6f}", t=t)
        post_mean = softmax(log_post, axis=1) @ pool
        prior_mean = softmax(log_k, axis=1) @ pool
        out[start:start + step] = c.alpha / kernel_var * (post_mean - prior_mean)
    return out


# ========== СБОРКА ==========

def guided_terms(b: np.ndarray, grad: np.ndarray, t: float, schedule: Schedule = LINEAR,
                 zeta: float = 1.0, sigma: float = 1.0) -> Tuple[np.ndarray, np.ndarray]:
    """
    Дрейф и приращение скора с наведением

    sigma - масштаб нормировки дрейфа (NormStats.sigma). Для процесса в единицах
    данных поправка дрейфа равна sigma^2 lambda_t zeta g, поправка скора не масштабируется.

    Returns:
        (b + sigma^2 lambda_t zeta g, zeta g)

    Raises:
        SingularScheduleError: t = 0 при zeta > 0
    """
    if zeta == 0.0:
        return b, np.zeros_like(b)
    lam = schedule_coeffs(schedule, t).lam
    return b + sigma ** 2 * lam * zeta * grad, zeta * grad


@dataclass
class GuidanceMethod:
    """Метод наведения и его параметры"""
    kind: GuidanceKind = GuidanceKind.MC
    zeta: float = 1.0
    mc_pool: Optional[np.ndarray] = None
    cg_tol: float = CG_TOL
    cg_max_iter: int = CG_MAX_ITER

    def __post_init__(self):
        self.kind = GuidanceKind(self.kind)
        if not (np.isfinite(self.zeta) and self.zeta >= 0.0):
            raise DomainError(f"zeta должно быть >= 0, получено {self.zeta}")
        if self.kind == GuidanceKind.MC:
            if self.mc_pool is None or np.size(self.mc_pool) == 0:
                raise DomainError("MC наведение требует непустой пул априорных выборок")
            self.mc_pool = as_matrix(self.mc_pool, "mc_pool")
        self._cached_y: Optional[np.ndarray] = None
        self._cached_obs: Optional[ObservationModel] = None
        self._cached_log_lik: Optional[np.ndarray] = None

    def _pool_log_lik(self, y, obs: ObservationModel) -> np.ndarray:
        y = np.atleast_1d(np.asarray(y, dtype=float))
        if (self._cached_log_lik is None or self._cached_obs != obs
                or not np.array_equal(self._cached_y, y)):
            self._cached_log_lik = obs.log_likelihood(y, self.mc_pool)
            self._cached_y, self._cached_obs = y.copy(), obs
        return self._cached_log_lik

    def likelihood_grad(self, z_t, t: float, y, obs: ObservationModel, drift: DriftModel) -> np.ndarray:
        """Градиент правдоподобия выбранным методом (без множителя zeta)"""
        if self.kind == GuidanceKind.DPS:
            return dps_grad(z_t, t, y, obs, drift)
        if self.kind == GuidanceKind.MMPS:
            return mmps_grad(z_t, t, y, obs, drift, self.cg_tol, self.cg_max_iter)
        return mc_grad(z_t, t, y, obs, self.mc_pool, drift.schedule, drift.stats,
                       log_lik=self._pool_log_lik(y, obs))
