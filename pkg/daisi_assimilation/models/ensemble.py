"""
Модели данных ансамбля и истории фильтрации
"""
from dataclasses import dataclass, field
from typing import Dict, List, Optional

import numpy as np
import pandas as pd

from ..api.errors import DomainError
from ..utils.validators import as_matrix, check_finite

METRIC_COLUMNS = ["rmse", "ens_rmse", "crps", "spread", "ssr"]

# Границы 99% интервала в сводке шага
LOWER_QUANTILE = 0.005
UPPER_QUANTILE = 0.995


@dataclass
class Ensemble:
    """Ансамбль: J векторов состояния размерности d"""
    members: np.ndarray
    step: int = 0

    def __post_init__(self):
        self.members = as_matrix(self.members, "members")
        if self.members.shape[0] < 1:
            raise DomainError("Ансамбль должен содержать хотя бы одного члена")
        check_finite(self.members, "ансамбль", step=self.step)

    @property
    def size(self) -> int:
        return self.members.shape[0]

    @property
    def dim(self) -> int:
        return self.members.shape[1]

    def mean(self) -> np.ndarray:
        return self.members.mean(axis=0)

    def spread(self) -> np.ndarray:
        """Среднеквадратичное отклонение членов от среднего по каждой компоненте"""
        return self.members.std(axis=0)


@dataclass
class StepRecord:
    """Сводка одного шага ассимиляции"""
    step: int
    mean: np.ndarray
    spread: np.ndarray
    lower: np.ndarray
    upper: np.ndarray
    metrics: Dict[str, float] = field(default_factory=dict)
    ess: Optional[float] = None


@dataclass
class MetricReport:
    """Агрегированные метрики по окну оценивания"""
    rmse: float
    ens_rmse: float
    crps: float
    spread: float
    ssr: float
    window: int
    mmd: Optional[float] = None
    ssr_flagged: bool = False

    def to_row(self) -> Dict[str, float]:
        row = {name: getattr(self, name) for name in METRIC_COLUMNS}
        if self.mmd is not None:
            row["mmd"] = self.mmd
        row["window"] = self.window
        return row


@dataclass
class FilterTrace:
    """
    История фильтрации: сводки по шагам и, по запросу, полные ансамбли

    Длина равна числу ассимилированных наблюдений.
    """
    records: List[StepRecord] = field(default_factory=list)
    ensembles: List[np.ndarray] = field(default_factory=list)
    keep_ensembles: bool = False

    def __len__(self) -> int:
        return len(self.records)

    def append(self, step: int, members: np.ndarray, metrics: Optional[Dict[str, float]] = None,
               ess: Optional[float] = None) -> StepRecord:
        """Добавить шаг: сводка (среднее, разброс, квантили) и метрики"""
        members = as_matrix(members, "members")
        lower, upper = np.quantile(members, [LOWER_QUANTILE, UPPER_QUANTILE], axis=0)
        record = StepRecord(
            step=int(step),
            mean=members.mean(axis=0),
            spread=members.std(axis=0),
            lower=lower,
            upper=upper,
            metrics=dict(metrics or {}),
            ess=ess,
        )
        self.records.append(record)
        if self.keep_ensembles:
            self.ensembles.append(members.copy())
        return record

    def metrics_frame(self) -> pd.DataFrame:
        """Таблица метрик: step,rmse,ens_rmse,crps,spread,ssr[,ess]"""
        rows = []
        for rec in self.records:
            row = {"step": rec.step}
            row.update({name: rec.metrics.get(name, np.nan) for name in METRIC_COLUMNS})
            if rec.ess is not None:
                row["ess"] = rec.ess
            rows.append(row)
        columns = ["step", *METRIC_COLUMNS]
        if any(rec.ess is not None for rec in self.records):
            columns.append("ess")
        return pd.DataFrame(rows, columns=columns)

    def summary_frame(self) -> pd.DataFrame:
        """Покомпонентная сводка: step, mean_i, spread_i, lower_i, upper_i"""
        rows = []
        for rec in self.records:
            row = {"step": rec.step}
            for i in range(rec.mean.shape[0]):
                row[f"mean{i}"] = rec.mean[i]
                row[f"spread{i}"] = rec.spread[i]
                row[f"lower{i}"] = rec.lower[i]
                row[f"upper{i}"] = rec.upper[i]
            rows.append(row)
        return pd.DataFrame(rows)

    def report(self, window: Optional[int] = None) -> MetricReport:
        """Средние метрики по последним window шагам (по умолчанию по всем)"""
        if not self.records:
            raise DomainError("Пустая история фильтрации")
        frame = self.metrics_frame()
        if window is not None:
            frame = frame.tail(int(window))
        means = frame[METRIC_COLUMNS].mean(axis=0, skipna=True)
        return MetricReport(
            rmse=float(means["rmse"]),
            ens_rmse=float(means["ens_rmse"]),
            crps=float(means["crps"]),
            spread=float(means["spread"]),
            ssr=float(means["ssr"]),
            window=len(frame),
            ssr_flagged=bool(frame["ssr"].isna().any()),
        )
