"""
Генераторы случайных чисел

Каждый поток выводится из (главный seed, стадия, шаг, индекс), поэтому
результаты не зависят от порядка и числа потоков выполнения.
"""
from enum import IntEnum
from typing import Iterable, Optional, Sequence, Tuple

import numpy as np


class Stage(IntEnum):
    """Стадии, для которых выводятся независимые потоки"""
    BACKWARD = 1  # Обратное СДУ (инверсия прогноза)
    FORWARD = 2  # Прямое СДУ с наведением
    NO_INVERSION = 3  # Свежий латент без инверсии
    FORECAST = 4  # Шум модели при прогнозе
    OBSERVE = 5  # Шум наблюдений
    RESAMPLE = 6  # Передискретизация
    INIT = 7  # Начальный ансамбль
    TRUTH = 8  # Истинная траектория
    TESTBED = 9  # Тестовый стенд смеси
    TRAIN = 10  # Обучение
    CELL = 11  # Ячейка сетки / повтор эксперимента


def derive_seed_sequence(seed: int, *keys: int) -> np.random.SeedSequence:
    """SeedSequence для ключа (seed, keys...)"""
    return np.random.SeedSequence(entropy=int(seed), spawn_key=tuple(int(k) for k in keys))


def derive_rng(seed: int, *keys: int) -> np.random.Generator:
    """Независимый генератор для ключа (seed, keys...)"""
    return np.random.default_rng(derive_seed_sequence(seed, *keys))


def derive_int_seed(seed: int, *keys: int) -> int:
    """Целочисленный seed для вложенной конфигурации"""
    return int(derive_seed_sequence(seed, *keys).generate_state(1, dtype=np.uint64)[0])


class MemberNoise:
    """
    Буферизованный гауссовский шум для блока членов ансамбля

    Поток члена j определяется только ключом (seed, stage, step, j),
    поэтому перестановка членов вместе с их индексами переставляет выход.
    Объект совместим по интерфейсу с np.random.Generator.standard_normal.
    """

    def __init__(self, seed: int, stage: int, step: int, members: Iterable[int], dim: int):
        self.seed = int(seed)
        self.stage = int(stage)
        self.step = int(step)
        self.members = np.asarray(list(members), dtype=np.int64)
        self.dim = int(dim)
        self._generators = [derive_rng(self.seed, self.stage, self.step, int(m)) for m in self.members]

    def standard_normal(self, size: Optional[Sequence[int]] = None) -> np.ndarray:
        """Следующая порция шума формы (n_members, dim)"""
        expected: Tuple[int, int] = (len(self.members), self.dim)
        if size is not None and tuple(np.atleast_1d(size)) != expected:
            raise ValueError(f"Ожидалась форма {expected}, запрошено {tuple(np.atleast_1d(size))}")
        return np.stack([g.standard_normal(self.dim) for g in self._generators])

    def buffered(self, n_draws: int) -> "BufferedNoise":
        """Предвыборка n_draws порций разом (по одному вызову на член)"""
        blocks = [g.standard_normal((n_draws, self.dim)) for g in self._generators]
        return BufferedNoise(np.stack(blocks, axis=1))

    def integers(self, high: int) -> np.ndarray:
        """По одному целому из [0, high) на член ансамбля"""
        return np.array([g.integers(high) for g in self._generators], dtype=np.int64)


class BufferedNoise:
    """Заранее выбранный шум (n_draws, n_members, dim), выдаваемый по порциям"""

    def __init__(self, buffer: np.ndarray):
        self._buffer = buffer
        self._cursor = 0

    def standard_normal(self, size: Optional[Sequence[int]] = None) -> np.ndarray:
        if self._cursor >= self._buffer.shape[0]:
            raise IndexError("Буфер шума исчерпан")
        draw = self._buffer[self._cursor]
        if size is not None and tuple(np.atleast_1d(size)) != draw.shape:
            raise ValueError(f"Ожидалась форма {draw.shape}, запрошено {tuple(np.atleast_1d(size))}")
        self._cursor += 1
        return draw
