"""
Обучение сетевого дрейфа по целевой функции flow matching

Генерация и нормализация обучающих данных, ручное обратное распространение
и оптимизатор Adam.
"""
import logging
from dataclasses import dataclass
from typing import Optional, Sequence, Tuple

import numpy as np

from ..api.errors import ConfigError, DomainError, TrainingDivergedError
from ..config.constants import L63_X0, SCORE_DELTA
from ..utils.rng import Stage, derive_int_seed, derive_rng
from ..utils.validators import as_matrix
from .drift import NetDrift
from .interpolant import LINEAR, NormStats, Schedule
from .systems import L63Params, l63_trajectory

logger = logging.getLogger(__name__)

# Размер блока при вычислении валидационной потери
VAL_CHUNK = 8192


@dataclass
class TrainConfig:
    """Гиперпараметры обучения (Adam, постоянный шаг)"""
    lr: float = 1e-4
    batch_size: int = 64
    epochs: int = 20
    beta1: float = 0.9
    beta2: float = 0.999
    adam_eps: float = 1e-8
    split: float = 0.8
    seed: int = 0

    def __post_init__(self):
        if self.batch_size < 1:
            raise ConfigError(f"batch_size должно быть >= 1, получено {self.batch_size}")
        if not 0.0 < self.split < 1.0:
            raise ConfigError(f"split должно лежать в (0, 1), получено {self.split}")
        if self.epochs < 0 or not self.lr > 0.0:
            raise ConfigError("epochs >= 0 и lr > 0 обязательны")


# ========== ДАННЫЕ ==========

@dataclass
class Dataset:
    """Выборки в единицах данных, разбиение и статистики обучающей части"""
    samples: np.ndarray
    train_idx: np.ndarray
    val_idx: np.ndarray
    stats: NormStats

    @property
    def train(self) -> np.ndarray:
        return self.samples[self.train_idx]

    @property
    def val(self) -> np.ndarray:
        return self.samples[self.val_idx]

    @property
    def dim(self) -> int:
        return self.samples.shape[1]

    @classmethod
    def from_samples(cls, samples, split: float = 0.8) -> "Dataset":
        """
        Хронологическое разбиение train/val и нормализация по обучающей части

        Первые round(split n) строк идут в обучение, остаток в валидацию: соседние
        состояния траектории не попадают по разные стороны разбиения.

        sigma - общее по компонентам стандартное отклонение; при нулевом
        разбросе (например, одна выборка) принимается равным 1.
        """
        samples = as_matrix(samples, "samples")
        n = samples.shape[0]
        if n < 1:
            raise DomainError("Пустой набор данных")
        n_train = min(n, max(1, int(round(split * n))))
        train_idx = np.arange(n_train)
        val_idx = np.arange(n_train, n)
        train = samples[train_idx]
        mu = train.mean(axis=0)
        sigma = float(np.std(train - mu))
        if not sigma > 0.0 or not np.isfinite(sigma):
            logger.warning("Нулевой разброс обучающих данных, sigma принята равной 1")
            sigma = 1.0
        return cls(samples, train_idx, val_idx, NormStats(mu, sigma))


def generate_l63_dataset(n_steps: int, split: float = 0.8,
                         params: L63Params = L63Params()) -> Dataset:
    """Траектория Лоренца-63 из (0, 1, 1.05) длины n_steps как набор данных"""
    if n_steps < 1:
        raise DomainError(f"n_steps должно быть >= 1, получено {n_steps}")
    trajectory = l63_trajectory(L63_X0, n_steps, params)
    logger.info(f"Сгенерирована траектория Лоренца-63: {n_steps} шагов")
    return Dataset.from_samples(trajectory, split)


# ========== ЦЕЛЕВАЯ ФУНКЦИЯ ==========

@dataclass
class FlowBatch:
    """Пакет: нормализованные данные w1, шум w0 и времена t"""
    z1: np.ndarray
    z0: np.ndarray
    t: np.ndarray

    def interpolate(self, schedule: Schedule = LINEAR) -> Tuple[np.ndarray, np.ndarray]:
        """Вход сети (z_t, t) и цель регрессии dalpha z1 + dbeta z0"""
        t = self.t[:, None]
        z_t = schedule.alpha(t) * self.z1 + schedule.beta(t) * self.z0
        target = schedule.dalpha(t) * self.z1 + schedule.dbeta(t) * self.z0
        return np.hstack([z_t, t]), target


def flow_matching_loss(model: NetDrift, batch: FlowBatch,
                       params: Optional[np.ndarray] = None) -> Tuple[float, np.ndarray]:
    """
    Средний по пакету квадрат невязки ||b(t, z_t) - (dalpha z1 + dbeta z0)||^2

    Returns:
        (loss, grad): значение и градиент по плоскому вектору параметров
    """
    inputs, target = batch.interpolate(model.schedule)
    out, memory = model.forward(inputs, params)
    residual = out - target
    n = residual.shape[0]
    loss = float(np.sum(residual ** 2) / n)
    grad = model.backward(2.0 * residual / n, memory, params)
    return loss, grad


# ========== ОПТИМИЗАТОР ==========

@dataclass
class Adam:
    """Adam с поправкой смещения моментов"""
    lr: float
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    m: Optional[np.ndarray] = None
    v: Optional[np.ndarray] = None
    step_count: int = 0

    def step(self, params: np.ndarray, grad: np.ndarray) -> np.ndarray:
        if self.m is None:
            self.m = np.zeros_like(params)
            self.v = np.zeros_like(params)
        self.step_count += 1
        self.m = self.beta1 * self.m + (1.0 - self.beta1) * grad
        self.v = self.beta2 * self.v + (1.0 - self.beta2) * grad ** 2
        m_hat = self.m / (1.0 - self.beta1 ** self.step_count)
        v_hat = self.v / (1.0 - self.beta2 ** self.step_count)
        return params - self.lr * m_hat / (np.sqrt(v_hat) + self.eps)


# ========== ОБУЧЕНИЕ ==========

@dataclass
class _Validation:
    batch: Optional[FlowBatch] = None

    def loss(self, model: NetDrift) -> float:
        if self.batch is None:
            return float("nan")
        total, n = 0.0, self.batch.t.shape[0]
        for s in range(0, n, VAL_CHUNK):
            part = FlowBatch(self.batch.z1[s:s + VAL_CHUNK], self.batch.z0[s:s + VAL_CHUNK],
                             self.batch.t[s:s + VAL_CHUNK])
            inputs, target = part.interpolate(model.schedule)
            out, _ = model.forward(inputs)
            total += float(np.sum((out - target) ** 2))
        return total / n


def train_drift(dataset: Dataset, hidden: Sequence[int] = (128, 128),
                cfg: Optional[TrainConfig] = None, schedule: Schedule = LINEAR) -> NetDrift:
    """
    Обучение NetDrift по flow matching

    Время t ~ U[0, 1 - delta] и шум выбираются заново для каждого примера на
    каждом шаге; перестановка эпохи определяется seed. Валидация использует
    фиксированные шум и времена.

    Args:
        dataset: Набор данных (статистики обучающей части)
        hidden: Размеры скрытых слоев
        cfg: Гиперпараметры обучения
        schedule: Расписание интерполянта

    Returns:
        NetDrift: Обученная модель; история потерь в model.history

    Raises:
        TrainingDivergedError: неконечная потеря (с номером эпохи)
    """
    cfg = cfg or TrainConfig()
    model = NetDrift.build(dataset.dim, hidden, derive_int_seed(cfg.seed, Stage.TRAIN, 2), dataset.stats)
    model.schedule = schedule
    train = dataset.stats.normalize(dataset.train)
    rng = derive_rng(cfg.seed, Stage.TRAIN, 1)

    validation = _Validation()
    if dataset.val_idx.size:
        val_rng = derive_rng(cfg.seed, Stage.TRAIN, 3)
        val = dataset.stats.normalize(dataset.val)
        validation.batch = FlowBatch(val, val_rng.standard_normal(val.shape),
                                     val_rng.uniform(0.0, 1.0 - SCORE_DELTA, val.shape[0]))

    optimizer = Adam(cfg.lr, cfg.beta1, cfg.beta2, cfg.adam_eps)
    params = model.params.copy()
    n = train.shape[0]
    logger.info(f"Обучение дрейфа: {n} выборок, слои {model.dims}, эпох {cfg.epochs}")
    for epoch in range(cfg.epochs):
        perm = rng.permutation(n)
        total = 0.0
        for start in range(0, n, cfg.batch_size):
            idx = perm[start:start + cfg.batch_size]
            z1 = train[idx]
            batch = FlowBatch(z1, rng.standard_normal(z1.shape),
                              rng.uniform(0.0, 1.0 - SCORE_DELTA, z1.shape[0]))
            loss, grad = flow_matching_loss(model, batch, params)
            if not np.isfinite(loss) or not np.all(np.isfinite(grad)):
                raise TrainingDivergedError("Неконечная потеря при обучении", epoch=epoch,
                                            batch=start // cfg.batch_size)
            params = optimizer.step(params, grad)
            total += loss * idx.size
        model.params = params
        train_loss = total / n
        val_loss = validation.loss(model)
        if validation.batch is not None and not np.isfinite(val_loss):
            raise TrainingDivergedError("Неконечная валидационная потеря", epoch=epoch)
        model.history.append({"epoch": epoch, "train_loss": train_loss, "val_loss": val_loss})
        logger.info(f"Эпоха {epoch + 1}/{cfg.epochs}: train={train_loss:.6f}, val={val_loss:.6f}")
    model.params = params
    return model


__all__ = [
    "TrainConfig",
    "Dataset",
    "FlowBatch",
    "Adam",
    "flow_matching_loss",
    "train_drift",
    "generate_l63_dataset",
]
