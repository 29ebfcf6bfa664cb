"""
Метрики оценивания ансамблей: RMSE, CRPS (fair), разброс и SSR, MMD (RBF)
"""
import logging
from typing import Dict, NamedTuple, Union

import numpy as np
from scipy.spatial.distance import cdist

from ..api.errors import DimensionMismatchError, DomainError
from ..config.constants import POOL_CHUNK
from ..models.ensemble import Ensemble
from ..utils.validators import as_matrix

logger = logging.getLogger(__name__)

EnsembleLike = Union[Ensemble, np.ndarray]

# Порог числа пар, до которого медиана расстояний берется по полной матрице
FULL_MEDIAN_LIMIT = 4_000_000


def _members_and_truth(ensemble: EnsembleLike, truth):
    members = ensemble.members if isinstance(ensemble, Ensemble) else as_matrix(ensemble, "ensemble")
    truth = np.atleast_1d(np.asarray(truth, dtype=float))
    if truth.shape != (members.shape[1],):
        raise DimensionMismatchError(
            f"Размерность истины {truth.shape}, ансамбль имеет d={members.shape[1]}"
        )
    return members, truth


def rmse(ensemble: EnsembleLike, truth) -> float:
    """RMSE среднего ансамбля относительно истины"""
    members, truth = _members_and_truth(ensemble, truth)
    return float(np.sqrt(np.mean((members.mean(axis=0) - truth) ** 2)))


def ens_rmse(ensemble: EnsembleLike, truth) -> float:
    """Среднее по членам RMSE каждого члена"""
    members, truth = _members_and_truth(ensemble, truth)
    return float(np.mean(np.sqrt(np.mean((members - truth) ** 2, axis=1))))


def crps_fair(ensemble: EnsembleLike, truth) -> float:
    """
    Несмещенная (fair) оценка CRPS, усредненная по компонентам

    CRPS_d = mean_j |x_j - y| - sum_{i,j} |x_i - x_j| / (2 J (J - 1)).
    Парная сумма берется по отсортированным членам: sum_{i<j} (x_(j) - x_(i)) = sum_i x_(i) (2i - (J - 1)).
    """
    members, truth = _members_and_truth(ensemble, truth)
    J = members.shape[0]
    if J < 2:
        raise DomainError(f"fair CRPS требует J >= 2, получено J={J}")
    skill = np.mean(np.abs(members - truth), axis=0)
    ordered = np.sort(members, axis=0)
    coef = 2.0 * np.arange(J) - (J - 1)
    half_pairs = coef @ ordered
    return float(np.mean(skill - half_pairs / (J * (J - 1))))


class SpreadSkill(NamedTuple):
    """Разброс и отношение разброс / ошибка"""
    spread: float
    ssr: float

    @property
    def flagged(self) -> bool:
        """SSR не определен (нулевая ошибка по какой-либо компоненте)"""
        return bool(np.isnan(self.ssr))


def spread_and_ssr(ensemble: EnsembleLike, truth) -> SpreadSkill:
    """
    Разброс sqrt(mean_d spread_d^2) и SSR = mean_d sqrt((J+1)/J) spread_d / |mean_d - y_d|

    При нулевой ошибке по компоненте SSR возвращается как NaN (флаг).
    """
    members, truth = _members_and_truth(ensemble, truth)
    J = members.shape[0]
    if J < 2:
        raise DomainError(f"SSR требует J >= 2, получено J={J}")
    spread_d = members.std(axis=0)
    skill_d = np.abs(members.mean(axis=0) - truth)
    spread = float(np.sqrt(np.mean(spread_d ** 2)))
    if np.any(skill_d == 0.0):
        logger.warning("SSR не определен: нулевая ошибка среднего ансамбля")
        return SpreadSkill(spread, float("nan"))
    ssr = float(np.mean(np.sqrt((J + 1) / J) * spread_d / skill_d))
    return SpreadSkill(spread, ssr)


def evaluate(ensemble: EnsembleLike, truth) -> Dict[str, float]:
    """Все метрики шага для строки metrics.csv"""
    members, truth = _members_and_truth(ensemble, truth)
    row = {"rmse": rmse(members, truth), "ens_rmse": ens_rmse(members, truth)}
    if members.shape[0] >= 2:
        row["crps"] = crps_fair(members, truth)
        row["spread"], row["ssr"] = spread_and_ssr(members, truth)
    else:
        row.update(crps=float("nan"), spread=0.0, ssr=float("nan"))
    return row


# ========== MMD ==========

def _lower_median_1d(a: np.ndarray, b: np.ndarray) -> float:
    """
    Точная нижняя медиана множества |a_i - b_j| без построения матрицы

    Бисекция по радиусу r: число пар с расстоянием <= r считается через
    searchsorted по отсортированному b; затем радиус привязывается к
    наибольшему фактическому расстоянию, не превосходящему r.
    """
    b = np.sort(b)
    n_pairs = a.size * b.size
    rank = (n_pairs - 1) // 2 + 1  # нужное число пар с расстоянием <= медианы

    def count(r: float) -> int:
        hi = np.searchsorted(b, a + r, side="right")
        lo = np.searchsorted(b, a - r, side="left")
        return int(np.sum(hi - lo))

    lo_r, hi_r = 0.0, float(max(abs(b[-1] - a.min()), abs(a.max() - b[0])))
    if count(lo_r) >= rank:
        return 0.0
    for _ in range(200):
        mid = 0.5 * (lo_r + hi_r)
        if mid <= lo_r or mid >= hi_r:
            break
        if count(mid) >= rank:
            hi_r = mid
        else:
            lo_r = mid
    # наибольшее фактическое расстояние <= hi_r
    right = np.searchsorted(b, a + hi_r, side="right") - 1
    left = np.searchsorted(b, a - hi_r, side="left")
    best = 0.0
    has_right = right >= 0
    if np.any(has_right):
        cand = b[right[has_right]] - a[has_right]
        cand = cand[cand >= 0.0]
        if cand.size:
            best = max(best, float(cand.max()))
    has_left = left < b.size
    if np.any(has_left):
        cand = a[has_left] - b[left[has_left]]
        cand = cand[cand >= 0.0]
        if cand.size:
            best = max(best, float(cand.max()))
    return best


def _lower_median_blocks(a: np.ndarray, b: np.ndarray) -> float:
    """Нижняя медиана расстояний по блокам (бисекция со счетом по блокам cdist)"""
    n_pairs = a.shape[0] * b.shape[0]
    rank = (n_pairs - 1) // 2 + 1
    lo_r, hi_r, top = 0.0, 0.0, 0.0
    for start in range(0, a.shape[0], POOL_CHUNK):
        top = max(top, float(cdist(a[start:start + POOL_CHUNK], b).max()))
    hi_r = top

    def count(r: float) -> int:
        return sum(int(np.count_nonzero(cdist(a[s:s + POOL_CHUNK], b) <= r))
                   for s in range(0, a.shape[0], POOL_CHUNK))

    for _ in range(200):
        mid = 0.5 * (lo_r + hi_r)
        if mid <= lo_r or mid >= hi_r:
            break
        if count(mid) >= rank:
            hi_r = mid
        else:
            lo_r = mid
    best = 0.0
    for s in range(0, a.shape[0], POOL_CHUNK):
        block = cdist(a[s:s + POOL_CHUNK], b)
        block = block[block <= hi_r]
        if block.size:
            best = max(best, float(block.max()))
    return best


def median_cross_distance(a: np.ndarray, b: np.ndarray) -> float:
    """Нижняя медиана расстояний ||a_i - b_j|| по всем парам из разных множеств"""
    if a.shape[0] * b.shape[0] <= FULL_MEDIAN_LIMIT:
        dist = cdist(a, b).ravel()
        k = (dist.size - 1) // 2
        return float(np.partition(dist, k)[k])
    if a.shape[1] == 1:
        return _lower_median_1d(a[:, 0], b[:, 0])
    return _lower_median_blocks(a, b)


def _kernel_sum(a: np.ndarray, b: np.ndarray, bandwidth2: float) -> float:
    total = 0.0
    for start in range(0, a.shape[0], POOL_CHUNK):
        sq = cdist(a[start:start + POOL_CHUNK], b, "sqeuclidean")
        total += float(np.exp(-sq / (2.0 * bandwidth2)).sum())
    return total


def mmd_rbf(samples_a, samples_b) -> float:
    """
    MMD с гауссовским ядром и медианной эвристикой sigma^2 = median ||a_i - b_j|| / 2

    Несмещенная оценка MMD^2 (без диагонали в слагаемых внутри множеств),
    отсекается снизу нулем, возвращается корень.

    Raises:
        DomainError: в каком-либо множестве меньше 2 выборок
    """
    a = as_matrix(samples_a, "samples_a")
    b = as_matrix(samples_b, "samples_b")
    if a.shape[0] < 2 or b.shape[0] < 2:
        raise DomainError("MMD требует не менее 2 выборок в каждом множестве")
    if a.shape[1] != b.shape[1]:
        raise DimensionMismatchError("Размерности выборок MMD не совпадают")
    # канонический порядок аргументов: mmd(a, b) == mmd(b, a) побитово
    if (b.shape[0], b.tobytes()) < (a.shape[0], a.tobytes()):
        a, b = b, a
    n, m = a.shape[0], b.shape[0]
    bandwidth2 = median_cross_distance(a, b) / 2.0
    if bandwidth2 <= 0.0:
        logger.warning("Нулевая медиана расстояний, ширина ядра MMD принята равной 1")
        bandwidth2 = 1.0
    k_aa = _kernel_sum(a, a, bandwidth2) - n
    k_bb = _kernel_sum(b, b, bandwidth2) - m
    k_ab = _kernel_sum(a, b, bandwidth2)
    mmd2 = k_aa / (n * (n - 1)) + k_bb / (m * (m - 1)) - 2.0 * k_ab / (n * m)
    return float(np.sqrt(max(mmd2, 0.0)))
