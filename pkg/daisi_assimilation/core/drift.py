"""
Вычислители дрейфа b(t, z)

- GmmDrift: точный дрейф интерполянта к одномерной смеси гауссиан
- GaussianDrift: точный дрейф к изотропной гауссиане (оракулы линейно-гауссовых тестов)
- NetDrift: небольшая полносвязная сеть (ReLU), обучаемая flow matching
"""
import logging
from abc import ABC, abstractmethod
from dataclasses import dataclass
from typing import List, Optional, Sequence, Tuple

import numpy as np
from scipy.special import logsumexp, softmax

from ..api.errors import DimensionMismatchError, DomainError
from ..config.constants import FD_STEP, TESTBED_GMM
from .interpolant import (
    LINEAR,
    NormStats,
    Schedule,
    denoiser_mean_from_drift,
    schedule_coeffs,
    scaled_score,
)
from ..utils.validators import as_matrix

logger = logging.getLogger(__name__)


# ========== БАЗОВЫЙ КЛАСС ==========

class DriftModel(ABC):
    """
    Дрейф в пространстве данных поверх дрейфа в нормализованном пространстве

    Все методы принимают матрицу состояний (n, d) и общее для строк время t.
    """

    stats: NormStats
    schedule: Schedule = LINEAR

    @property
    def dim(self) -> int:
        return self.stats.dim

    @abstractmethod
    def normalized_drift(self, w: np.ndarray, t: float) -> np.ndarray:
        """Дрейф b_W(t, w) в нормализованном пространстве"""

    def drift(self, z, t: float) -> np.ndarray:
        """Дрейф b_Z(t, z) = sigma b_W(t, (z - mu) / sigma)"""
        z = as_matrix(z, "z", self.dim)
        return self.stats.sigma * self.normalized_drift(self.stats.normalize(z), t)

    def score(self, z, t: float, drift: Optional[np.ndarray] = None) -> np.ndarray:
        """Скор маргинали в пространстве данных"""
        z = as_matrix(z, "z", self.dim)
        b = self.drift(z, t) if drift is None else drift
        return scaled_score(b, z, t, self.stats, self.schedule)

    def denoiser_mean(self, z, t: float) -> np.ndarray:
        """E[z_1 | z_t] в единицах данных"""
        z = as_matrix(z, "z", self.dim)
        w = self.stats.normalize(z)
        b_w = self.normalized_drift(w, t)
        return self.stats.denormalize(denoiser_mean_from_drift(b_w, w, t, self.schedule))

    def denoiser_jvp(self, z, t: float, v) -> np.ndarray:
        """
        (d E[z_1 | z_t] / dz) v центральными разностями

        Шаг h = FD_STEP (1 + |z|_inf) по строке, направление нормируется на |v|_inf.
        """
        z = as_matrix(z, "z", self.dim)
        v = as_matrix(v, "v", self.dim)
        scale = np.max(np.abs(v), axis=1, keepdims=True)
        safe = np.where(scale > 0.0, scale, 1.0)
        u = v / safe
        h = FD_STEP * (1.0 + np.max(np.abs(z), axis=1, keepdims=True))
        plus = self.denoiser_mean(z + h * u, t)
        minus = self.denoiser_mean(z - h * u, t)
        jvp = scale * (plus - minus) / (2.0 * h)
        return np.where(scale > 0.0, jvp, 0.0)


# ========== СМЕСЬ ГАУССИАН ==========

@dataclass(frozen=True)
class GmmPrior:
    """Одномерная смесь гауссиан"""
    weights: np.ndarray
    means: np.ndarray
    stds: np.ndarray

    def __post_init__(self):
        for name in ("weights", "means", "stds"):
            object.__setattr__(self, name, np.asarray(getattr(self, name), dtype=float).ravel())
        if not (self.weights.shape == self.means.shape == self.stds.shape):
            raise DimensionMismatchError("Параметры смеси разной длины")
        if self.weights.size == 0:
            raise DomainError("Смесь без компонент")
        if np.any(self.weights < 0.0) or abs(self.weights.sum() - 1.0) > 1e-12:
            raise DomainError(f"Веса смеси должны суммироваться в 1, сумма {self.weights.sum()}")
        if np.any(self.stds <= 0.0):
            raise DomainError("Стандартные отклонения смеси должны быть > 0")

    @classmethod
    def testbed(cls) -> "GmmPrior":
        """Смесь тестового стенда: веса (0.5, 0.3, 0.2), средние (0, 3, -2), ско (1, 0.5, 0.8)"""
        weights, means, stds = TESTBED_GMM
        return cls(np.array(weights), np.array(means), np.array(stds))

    @property
    def mean(self) -> float:
        return float(self.weights @ self.means)

    def sample(self, n: int, rng: np.random.Generator) -> np.ndarray:
        """n выборок формы (n, 1)"""
        k = rng.choice(self.weights.size, size=n, p=self.weights)
        return (self.means[k] + self.stds[k] * rng.standard_normal(n))[:, None]

    def logpdf(self, x) -> np.ndarray:
        x = np.asarray(x, dtype=float)[..., None]
        comp = (np.log(self.weights) - 0.5 * np.log(2.0 * np.pi * self.stds ** 2)
                - 0.5 * ((x - self.means) / self.stds) ** 2)
        return logsumexp(comp, axis=-1)

    def pdf(self, x) -> np.ndarray:
        return np.exp(self.logpdf(x))

    def marginal_score(self, z, t: float, schedule: Schedule = LINEAR) -> np.ndarray:
        """Аналитический скор маргинали интерполянта (смесь N(alpha mu_k, alpha^2 s_k^2 + beta^2))"""
        post = _gmm_posterior(self, z, t, schedule)
        return np.sum(post.resp * post.dlog, axis=-1)


@dataclass
class _GmmPosterior:
    resp: np.ndarray  # r_k(z, t)
    e1: np.ndarray  # E[z_1 | z_t, k]
    e0: np.ndarray  # E[z_0 | z_t, k]
    dlog: np.ndarray  # d/dz log N(z; alpha mu_k, v_k)
    gain: np.ndarray  # d E[z_1 | z_t, k] / dz
    coeffs: object


def _gmm_posterior(prior: GmmPrior, z, t: float, schedule: Schedule) -> _GmmPosterior:
    c = schedule_coeffs(schedule, t)
    zz = np.asarray(z, dtype=float)[..., None]
    var1 = prior.stds ** 2
    m = c.alpha * prior.means
    v = c.alpha ** 2 * var1 + c.beta ** 2
    resid = zz - m
    log_comp = np.log(prior.weights) - 0.5 * np.log(2.0 * np.pi * v) - 0.5 * resid ** 2 / v
    resp = softmax(log_comp, axis=-1)
    e1 = prior.means + c.alpha * var1 * resid / v
    e0 = c.beta * resid / v
    return _GmmPosterior(resp, e1, e0, -resid / v, c.alpha * var1 / v, c)


def gmm_drift(prior: GmmPrior, z, t: float, schedule: Schedule = LINEAR) -> np.ndarray:
    """
    Точный дрейф интерполянта к смеси гауссиан

    Поэлементно по z: b = sum_k r_k (dalpha E[z_1|z_t,k] + dbeta E[z_0|z_t,k]),
    ответственности r_k считаются в лог-пространстве.

    Args:
        prior: Смесь
        z: Скаляр или массив состояний
        t: Время в [0, 1]

    Returns:
        np.ndarray: Дрейф той же формы, что z
    """
    post = _gmm_posterior(prior, z, t, schedule)
    c = post.coeffs
    return np.sum(post.resp * (c.dalpha * post.e1 + c.dbeta * post.e0), axis=-1)


class GmmDrift(DriftModel):
    """Дрейф к одномерной смеси (без обучения, единичная нормализация)"""

    def __init__(self, prior: GmmPrior, schedule: Schedule = LINEAR):
        self.prior = prior
        self.schedule = schedule
        self.stats = NormStats.identity(1)

    def normalized_drift(self, w, t):
        return gmm_drift(self.prior, w, t, self.schedule)

    def denoiser_jvp(self, z, t, v):
        """Аналитический JVP: sum r_k g_k + Cov_r(E_1, dlog)"""
        z = as_matrix(z, "z", 1)
        v = as_matrix(v, "v", 1)
        post = _gmm_posterior(self.prior, z, t, self.schedule)
        r = post.resp
        mean_e1 = np.sum(r * post.e1, axis=-1)
        mean_dlog = np.sum(r * post.dlog, axis=-1)
        jac = np.sum(r * post.gain, axis=-1) + np.sum(r * post.e1 * post.dlog, axis=-1) - mean_e1 * mean_dlog
        return jac * v


# ========== ИЗОТРОПНАЯ ГАУССИАНА ==========

class GaussianDrift(DriftModel):
    """Дрейф к N(mean, std^2 I)"""

    def __init__(self, mean, std: float, schedule: Schedule = LINEAR):
        self.mean = np.atleast_1d(np.asarray(mean, dtype=float))
        if not std > 0.0:
            raise DomainError(f"std гауссианы должно быть > 0, получено {std}")
        self.std = float(std)
        self.schedule = schedule
        self.stats = NormStats.identity(self.mean.shape[0])

    @classmethod
    def fit(cls, members: np.ndarray, schedule: Schedule = LINEAR) -> "GaussianDrift":
        """Подогнать по ансамблю: выборочное среднее и объединенная дисперсия (ddof=1)"""
        members = as_matrix(members, "members")
        if members.shape[0] < 2:
            raise DomainError("Для подгонки гауссианы нужно не менее 2 членов")
        var = float(np.mean(np.var(members, axis=0, ddof=1)))
        std = np.sqrt(var) if var > 0.0 else 1.0
        if var <= 0.0:
            logger.warning("Нулевая дисперсия ансамбля, std гауссианы принято равным 1")
        return cls(members.mean(axis=0), std, schedule)

    def _gain(self, t: float) -> Tuple[float, object]:
        c = schedule_coeffs(self.schedule, t)
        var1 = self.std ** 2
        return c.alpha * var1 / (c.alpha ** 2 * var1 + c.beta ** 2), c

    def normalized_drift(self, w, t):
        gain, c = self._gain(t)
        resid = w - c.alpha * self.mean
        e1 = self.mean + gain * resid
        e0 = c.beta * resid / (c.alpha ** 2 * self.std ** 2 + c.beta ** 2)
        return c.dalpha * e1 + c.dbeta * e0

    def denoiser_jvp(self, z, t, v):
        gain, _ = self._gain(t)
        return gain * as_matrix(v, "v", self.dim)


# ========== ПОЛНОСВЯЗНАЯ СЕТЬ ==========

def relu(x):
    return np.maximum(x, 0.0)


def relu_grad(x):
    return np.where(x > 0.0, 1.0, 0.0)


class NetDrift(DriftModel):
    """
    Полносвязная сеть: вход (w, t) размерности d+1, скрытые слои с ReLU, выход d

    Параметры хранятся плоским вектором: для каждого слоя W (out, in), затем b (out).
    """

    def __init__(self, dims: Sequence[int], params: np.ndarray, stats: NormStats,
                 schedule: Schedule = LINEAR):
        self.dims = [int(d) for d in dims]
        if len(self.dims) < 2:
            raise DimensionMismatchError("Сеть должна иметь хотя бы входной и выходной слой")
        if self.dims[0] != self.dims[-1] + 1:
            raise DimensionMismatchError(
                f"Вход сети должен быть d+1: dims={self.dims}"
            )
        params = np.asarray(params, dtype=float).ravel()
        if params.size != self.count_params(self.dims):
            raise DimensionMismatchError(
                f"Число параметров {params.size}, ожидалось {self.count_params(self.dims)}"
            )
        if stats.dim != self.dims[-1]:
            raise DimensionMismatchError("Размерность статистик нормализации не совпадает с выходом сети")
        self.params = params
        self.stats = stats
        self.schedule = schedule
        self.history: List[dict] = []  # epoch, train_loss, val_loss

    @staticmethod
    def count_params(dims: Sequence[int]) -> int:
        return int(sum(n_out * n_in + n_out for n_in, n_out in zip(dims[:-1], dims[1:])))

    @classmethod
    def build(cls, state_dim: int, hidden: Sequence[int], seed: int,
              stats: Optional[NormStats] = None) -> "NetDrift":
        """Инициализация He (нормальное распределение), смещения нулевые"""
        dims = [state_dim + 1, *hidden, state_dim]
        rng = np.random.default_rng(seed)
        chunks = []
        for n_in, n_out in zip(dims[:-1], dims[1:]):
            chunks.append(rng.standard_normal((n_out, n_in)).ravel() * np.sqrt(2.0 / n_in))
            chunks.append(np.zeros(n_out))
        return cls(dims, np.concatenate(chunks), stats or NormStats.identity(state_dim))

    def layers(self, params: Optional[np.ndarray] = None) -> List[Tuple[np.ndarray, np.ndarray]]:
        """Представления (W, b) поверх плоского вектора"""
        flat = self.params if params is None else params
        out, offset = [], 0
        for n_in, n_out in zip(self.dims[:-1], self.dims[1:]):
            W = flat[offset:offset + n_out * n_in].reshape(n_out, n_in)
            offset += n_out * n_in
            b = flat[offset:offset + n_out]
            offset += n_out
            out.append((W, b))
        return out

    def forward(self, x: np.ndarray, params: Optional[np.ndarray] = None):
        """Прямой проход по строкам x (n, d+1); возвращает (выход, память для backward)"""
        memory = [x]
        a = x
        layers = self.layers(params)
        for i, (W, b) in enumerate(layers):
            h = a @ W.T + b
            if i < len(layers) - 1:
                memory.append(h)
                a = relu(h)
            else:
                a = h
        return a, memory

    def backward(self, grad_out: np.ndarray, memory, params: Optional[np.ndarray] = None) -> np.ndarray:
        """Градиент по плоскому вектору параметров при градиенте grad_out по выходу"""
        layers = self.layers(params)
        grads: List[np.ndarray] = []
        delta = grad_out
        for i in range(len(layers) - 1, -1, -1):
            W, _ = layers[i]
            a_prev = memory[0] if i == 0 else relu(memory[i])
            grads.append(delta.sum(axis=0))
            grads.append((delta.T @ a_prev).ravel())
            if i > 0:
                delta = (delta @ W) * relu_grad(memory[i])
        return np.concatenate(grads[::-1])

    def normalized_drift(self, w, t):
        w = as_matrix(w, "w", self.dim)
        x = np.hstack([w, np.full((w.shape[0], 1), float(t))])
        out, _ = self.forward(x)
        return out


def net_drift_eval(model: NetDrift, z, t: float) -> np.ndarray:
    """Выход сети в нормализованном пространстве (масштабирование делает rescale_drift)"""
    z = np.asarray(z, dtype=float)
    if z.shape[-1] != model.dim:
        raise DimensionMismatchError(f"Размерность z {z.shape[-1]}, сеть ожидает {model.dim}")
    out = model.normalized_drift(as_matrix(z, "z", model.dim), t)
    return out.reshape(z.shape)


def jacobian_vector_product(model: DriftModel, z, t: float, v) -> np.ndarray:
    """(d E[z_1 | z_t] / dz) v: аналитически для GmmDrift/GaussianDrift, иначе конечными разностями"""
    return model.denoiser_jvp(z, t, v)
