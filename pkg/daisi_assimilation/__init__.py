"""
DAISI: ансамблевая фильтрация через инверсию и сэмплирование с наведением
на стохастических интерполянтах

Python библиотека: дрейфы интерполянта, СДУ, наведение по наблюдению,
фильтры (DAISI, BPF, Калман) и эксперименты на смеси гауссиан и Лоренце-63.
"""

__version__ = "0.1.0"
__license__ = "MIT"

# Интерполянт и дрейфы
from .core.interpolant import LINEAR, NormStats, Schedule, score_from_drift
from .core.drift import GaussianDrift, GmmDrift, GmmPrior, NetDrift, gmm_drift

# Интегрирование и наведение
from .core.sde import LatentState, SdeConfig, integrate_backward, integrate_forward, integrate_guided_forward
from .core.guidance import GuidanceKind, GuidanceMethod

# Фильтры и метрики
from .core.filters import DaisiConfig, bpf_run, daisi_analysis, daisi_run, kalman_filter, reweight_resample
from .core.metrics import crps_fair, mmd_rbf, rmse, spread_and_ssr

# Модели данных
from .models.ensemble import Ensemble, FilterTrace, MetricReport
from .models.observation import ObservationModel, OperatorKind

# Ошибки и настройки
from .api.errors import DaisiError, ErrorCode
from .config.settings import settings

__all__ = [
    # Версия
    "__version__",
    # Интерполянт и дрейфы
    "LINEAR",
    "NormStats",
    "Schedule",
    "score_from_drift",
    "GaussianDrift",
    "GmmDrift",
    "GmmPrior",
    "NetDrift",
    "gmm_drift",
    # СДУ и наведение
    "LatentState",
    "SdeConfig",
    "integrate_forward",
    "integrate_backward",
    "integrate_guided_forward",
    "GuidanceKind",
    "GuidanceMethod",
    # Фильтры и метрики
    "DaisiConfig",
    "daisi_analysis",
    "daisi_run",
    "bpf_run",
    "kalman_filter",
    "reweight_resample",
    "crps_fair",
    "mmd_rbf",
    "rmse",
    "spread_and_ssr",
    # Модели
    "Ensemble",
    "FilterTrace",
    "MetricReport",
    "ObservationModel",
    "OperatorKind",
    # Ошибки и настройки
    "DaisiError",
    "ErrorCode",
    "settings",
]
