"""
Валидаторы данных
"""
from typing import Optional

import numpy as np

from ..api.errors import DimensionMismatchError, DomainError, NumericalError


def validate_time(t: float, name: str = "t") -> float:
    """Проверка времени интерполянта: 0 <= t <= 1"""
    t = float(t)
    if not 0.0 <= t <= 1.0 or not np.isfinite(t):
        raise DomainError(f"Время {name}={t} вне отрезка [0, 1]")
    return t


def as_matrix(x, name: str = "x", d: Optional[int] = None) -> np.ndarray:
    """Привести к матрице (n, d); вектор трактуется как одна строка"""
    arr = np.asarray(x, dtype=float)
    if arr.ndim == 0:
        arr = arr.reshape(1, 1)
    elif arr.ndim == 1:
        arr = arr[None, :]
    elif arr.ndim != 2:
        raise DimensionMismatchError(f"{name}: ожидалась матрица, получено ndim={arr.ndim}")
    if d is not None and arr.shape[1] != d:
        raise DimensionMismatchError(f"{name}: размерность {arr.shape[1]}, ожидалось {d}")
    return arr


def check_finite(x: np.ndarray, what: str = "состояние", **details) -> None:
    """Проверка конечности всех элементов"""
    finite = np.isfinite(x)
    if not np.all(finite):
        if np.ndim(x) == 2:
            details.setdefault("row", int(np.argmin(finite.all(axis=1))))
        raise NumericalError(f"{what}: обнаружены неконечные значения", **details)
