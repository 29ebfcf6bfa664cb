"""
Модель наблюдений y = H(x) + nu, nu ~ N(0, sigma_obs^2 I)
"""
from dataclasses import dataclass, field
from enum import Enum
from typing import Optional, Tuple

import numpy as np

from ..api.errors import DimensionMismatchError, DomainError
from ..config.constants import SQUARE_SCALE
from ..utils.validators import as_matrix


class OperatorKind(str, Enum):
    """Оператор наблюдения"""
    IDENTITY = "identity"  # H(x) = x
    SPARSE_LINEAR = "sparse_linear"  # H(x) = x[mask]
    SQUARE = "square"  # H(x) = (x[mask] / 7)^2
    ARCTAN = "arctan"  # H(x) = arctan(x[mask])


@dataclass(frozen=True)
class ObservationModel:
    """
    Оператор наблюдения с маской компонент и уровнем шума

    Все операторы действуют поэлементно на компоненты из маски,
    поэтому якобиан H_t диагонален на выбранных компонентах.
    """
    kind: OperatorKind
    sigma_obs: float
    state_dim: int
    mask: Optional[Tuple[int, ...]] = field(default=None)

    def __post_init__(self):
        object.__setattr__(self, "kind", OperatorKind(self.kind))
        if not (np.isfinite(self.sigma_obs) and self.sigma_obs > 0.0):
            raise DomainError(f"sigma_obs должно быть > 0, получено {self.sigma_obs}")
        if self.state_dim < 1:
            raise DomainError("Размерность состояния должна быть >= 1")
        if self.kind == OperatorKind.IDENTITY and self.mask is not None:
            raise DomainError("Тождественный оператор не принимает маску")
        mask = tuple(range(self.state_dim)) if self.mask is None else tuple(int(i) for i in self.mask)
        if len(mask) == 0:
            raise DomainError("Пустая маска наблюдений")
        if len(set(mask)) != len(mask):
            raise DomainError(f"Индексы маски повторяются: {mask}")
        if min(mask) < 0 or max(mask) >= self.state_dim:
            raise DomainError(f"Индексы маски вне [0, {self.state_dim}): {mask}")
        object.__setattr__(self, "mask", mask)

    @property
    def obs_dim(self) -> int:
        return len(self.mask)

    def _select(self, x) -> np.ndarray:
        x = as_matrix(x, "x", self.state_dim)
        return x[:, list(self.mask)]

    def apply(self, x) -> np.ndarray:
        """H(x) по строкам: (n, d) -> (n, d_y)"""
        xm = self._select(x)
        if self.kind == OperatorKind.SQUARE:
            return (xm / SQUARE_SCALE) ** 2
        if self.kind == OperatorKind.ARCTAN:
            return np.arctan(xm)
        return xm

    def derivative(self, x) -> np.ndarray:
        """Диагональ якобиана H_t в точке x: (n, d_y)"""
        xm = self._select(x)
        if self.kind == OperatorKind.SQUARE:
            return 2.0 * xm / SQUARE_SCALE ** 2
        if self.kind == OperatorKind.ARCTAN:
            return 1.0 / (1.0 + xm ** 2)
        return np.ones_like(xm)

    def jvp(self, x, v) -> np.ndarray:
        """H_t v: (n, d) -> (n, d_y)"""
        return self.derivative(x) * self._select(v)

    def vjp(self, x, u) -> np.ndarray:
        """H_t^T u: (n, d_y) -> (n, d)"""
        deriv = self.derivative(x)
        u = np.asarray(u, dtype=float).reshape(deriv.shape)
        out = np.zeros((deriv.shape[0], self.state_dim))
        out[:, list(self.mask)] = deriv * u
        return out

    def log_likelihood(self, y, x) -> np.ndarray:
        """log N(y; H(x), sigma_obs^2 I) по строкам x"""
        y = np.atleast_1d(np.asarray(y, dtype=float))
        if y.shape[-1] != self.obs_dim:
            raise DimensionMismatchError(f"Размерность y {y.shape[-1]}, ожидалось {self.obs_dim}")
        resid = y - self.apply(x)
        var = self.sigma_obs ** 2
        return -0.5 * np.sum(resid ** 2, axis=-1) / var - 0.5 * self.obs_dim * np.log(2.0 * np.pi * var)
