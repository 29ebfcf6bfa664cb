"""
Pydantic схемы конфигурации экспериментов

Конфигурация читается из YAML; неизвестные ключи являются ошибкой.
"""
from enum import Enum
from pathlib import Path
from typing import Any, Dict, List, Optional, Tuple, Union

import yaml
from pydantic import BaseModel, ConfigDict, Field, ValidationError, field_validator, model_validator

from ..core.guidance import GuidanceKind
from ..models.observation import OperatorKind
from .errors import ConfigError, MissingFileError


class StrictModel(BaseModel):
    """Базовая схема: лишние ключи запрещены"""
    model_config = ConfigDict(extra="forbid", use_enum_values=False)


# ========== ПЕРЕЧИСЛЕНИЯ ==========

class ExperimentKind(str, Enum):
    GMM_ABLATION = "gmm_ablation"
    L63_FILTER = "l63_filter"
    SWEEP = "sweep"
    LINEAR_GAUSSIAN_CHECK = "linear_gaussian_check"
    TRAIN = "train"


class FilterKind(str, Enum):
    DAISI = "daisi"
    BPF = "bpf"


class Variant(str, Enum):
    """Готовые наборы гиперпараметров DAISI для Лоренца-63"""
    DEFAULT = "default"
    TUNED_TMIN = "tuned_tmin"
    TUNED = "tuned"
    TUNED_EPS0 = "tuned_eps0"
    NO_INVERSION = "no_inversion"
    CUSTOM = "custom"


# (t_min, eps, invert)
VARIANT_PRESETS: Dict[Variant, Tuple[float, float, bool]] = {
    Variant.DEFAULT: (0.01, 0.0, True),
    Variant.TUNED_TMIN: (0.75, 0.0, True),
    Variant.TUNED: (0.65, 0.15, True),
    Variant.TUNED_EPS0: (0.65, 0.0, True),
    Variant.NO_INVERSION: (0.01, 0.0, False),
}


# ========== СЕКЦИИ ==========

class GuidanceSection(StrictModel):
    """Наведение по наблюдению"""
    kind: GuidanceKind = Field(GuidanceKind.MC, description="Метод: dps, mmps, mc")
    zeta: float = Field(1.0, ge=0.0, description="Множитель градиента правдоподобия")
    pool_size: int = Field(10_000, ge=1, description="Размер пула априорных выборок (mc)")
    cg_tol: float = Field(1e-8, gt=0.0, description="Относительная точность CG (mmps)")
    cg_max_iter: int = Field(200, ge=1, description="Максимум итераций CG (mmps)")


class DaisiSection(StrictModel):
    """Гиперпараметры шага анализа"""
    t_min: float = Field(0.3, ge=0.0, lt=1.0, description="Время инверсии")
    eps: float = Field(0.0, ge=0.0, description="Интенсивность диффузии")
    steps: int = Field(200, ge=1, description="Число шагов Эйлера-Маруямы на [0, 1]")
    invert: bool = Field(True, description="Инвертировать прогноз (False: свежий латент)")
    members: int = Field(100, ge=1, description="Размер ансамбля")
    guidance: GuidanceSection = Field(default_factory=GuidanceSection)

    @model_validator(mode="after")
    def _check_guided_t_min(self):
        if self.guidance.zeta > 0.0 and self.t_min == 0.0:
            raise ValueError("t_min = 0 при zeta > 0: lambda_t не определена")
        return self


class TrainSection(StrictModel):
    """Обучение дрейфа на траектории Лоренца-63"""
    n_steps: int = Field(1_000_000, ge=1, description="Длина обучающей траектории")
    hidden: List[int] = Field(default_factory=lambda: [128, 128], description="Скрытые слои")
    lr: float = Field(1e-4, gt=0.0)
    batch_size: int = Field(64, ge=1)
    epochs: int = Field(20, ge=0)
    beta1: float = Field(0.9, ge=0.0, lt=1.0)
    beta2: float = Field(0.999, ge=0.0, lt=1.0)
    adam_eps: float = Field(1e-8, gt=0.0)
    split: float = Field(0.8, gt=0.0, lt=1.0)
    model_path: Path = Field(Path("models/l63_drift.bin"), description="Куда сохранить модель")

    @field_validator("hidden")
    @classmethod
    def _positive_layers(cls, v: List[int]) -> List[int]:
        if any(n < 1 for n in v):
            raise ValueError("Размеры скрытых слоев должны быть >= 1")
        return v


class AblationSection(StrictModel):
    """Сетка (t_min, eps) на тестовом стенде смеси"""
    t_min: List[float] = Field(default_factory=lambda: [0.01, 0.3, 0.6])
    eps: List[float] = Field(default_factory=lambda: [0.0, 0.1, 1.0])
    n: int = Field(10_000, ge=2, description="Число частиц и размер пула")
    y: float = Field(2.5, description="Наблюдение")
    sigma_obs: float = Field(1.0, gt=0.0)

    @field_validator("t_min", "eps")
    @classmethod
    def _non_empty(cls, v: List[float]) -> List[float]:
        if not v:
            raise ValueError("Пустая сетка")
        return v

    @field_validator("t_min")
    @classmethod
    def _t_range(cls, v: List[float]) -> List[float]:
        if any(not 0.0 < t < 1.0 for t in v):
            raise ValueError("Значения t_min сетки должны лежать в (0, 1)")
        return v

    @field_validator("eps")
    @classmethod
    def _eps_range(cls, v: List[float]) -> List[float]:
        if any(e < 0.0 for e in v):
            raise ValueError("Значения eps должны быть >= 0")
        return v


class L63Section(StrictModel):
    """Фильтрация Лоренца-63"""
    filter: FilterKind = Field(FilterKind.DAISI)
    variant: Variant = Field(Variant.TUNED, description="Набор гиперпараметров; custom берет секцию daisi")
    model_path: Optional[Path] = Field(None, description="Файл обученного дрейфа (обязателен для daisi)")
    operator: OperatorKind = Field(OperatorKind.SPARSE_LINEAR)
    mask: List[int] = Field(default_factory=lambda: [0], description="Наблюдаемые компоненты")
    sigma_obs: float = Field(5.0, gt=0.0)
    sigma_init: float = Field(5.0, gt=0.0, description="Разброс начального ансамбля вокруг истины")
    particles: int = Field(10_000, ge=1, description="Число частиц BPF")
    resampling: str = Field("systematic", description="systematic или multinomial")
    spin_up: int = Field(4500, ge=0, description="Шаги до начала ассимиляции")
    assimilate: int = Field(500, ge=1, description="Число ассимилируемых наблюдений")
    window: int = Field(100, ge=1, description="Окно усреднения метрик (последние шаги)")
    keep_ensembles: bool = Field(False, description="Сохранять бинарные дампы ансамблей")

    @field_validator("resampling")
    @classmethod
    def _scheme(cls, v: str) -> str:
        if v not in ("systematic", "multinomial"):
            raise ValueError(f"Неизвестная схема передискретизации: {v}")
        return v

    @model_validator(mode="after")
    def _check_model(self):
        if self.window > self.assimilate:
            raise ValueError("window не может превышать assimilate")
        if self.filter == FilterKind.DAISI:
            if self.model_path is None:
                raise ValueError("Для DAISI на Лоренце-63 нужен model_path обученного дрейфа")
            if not Path(self.model_path).is_file():
                raise MissingFileError(f"Файл модели не найден: {self.model_path}")
        return self


class SweepSection(StrictModel):
    """Поиск (t_min, eps) по CRPS на отдельной траектории"""
    t_min: List[float] = Field(default_factory=lambda: [0.01, 0.65])
    eps: List[float] = Field(default_factory=lambda: [0.0, 0.15])
    spin_up: int = Field(4800, ge=0)
    assimilate: int = Field(200, ge=1)
    window: int = Field(100, ge=1)

    @field_validator("t_min")
    @classmethod
    def _t_range(cls, v: List[float]) -> List[float]:
        if not v or any(not 0.0 < t < 1.0 for t in v):
            raise ValueError("Сетка t_min должна быть непустой и лежать в (0, 1)")
        return v

    @field_validator("eps")
    @classmethod
    def _eps_range(cls, v: List[float]) -> List[float]:
        if not v or any(e < 0.0 for e in v):
            raise ValueError("Сетка eps должна быть непустой и неотрицательной")
        return v


class CheckSection(StrictModel):
    """Проверки на линейно-гауссовой системе против фильтра Калмана"""
    a: float = Field(0.9, description="Коэффициент авторегрессии")
    q: float = Field(0.5, gt=0.0, description="Дисперсия шума модели")
    r: float = Field(1.0, gt=0.0, description="Дисперсия шума наблюдений")
    m0: float = Field(0.0)
    p0: float = Field(1.0, gt=0.0)
    steps: int = Field(50, ge=1)
    members: int = Field(2000, ge=2, description="Размер ансамбля DAISI")
    particles: int = Field(10_000, ge=2, description="Число частиц BPF")
    samples: int = Field(10_000, ge=2, description="Выборки проверки MMPS")
    t_min: float = Field(0.01, gt=0.0, lt=1.0)
    sde_steps: int = Field(500, ge=1)
    n_sigma: float = Field(5.0, gt=0.0, description="Допуск в стандартных ошибках (на все шаги сразу)")
    var_rtol: float = Field(0.1, gt=0.0, description="Относительный допуск дисперсии")


class ExperimentConfig(StrictModel):
    """Документ конфигурации эксперимента"""
    experiment: ExperimentKind
    seed: int = Field(0, ge=0, description="Главный seed")
    repeats: int = Field(1, ge=1, description="Число независимых повторов")
    threads: int = Field(1, ge=1)
    out_dir: Path = Field(Path("out"))
    tag: Optional[str] = Field(None, description="Имя каталога запуска (иначе метка времени)")
    daisi: DaisiSection = Field(default_factory=DaisiSection)
    train: TrainSection = Field(default_factory=TrainSection)
    ablation: AblationSection = Field(default_factory=AblationSection)
    l63: Optional[L63Section] = None
    sweep: SweepSection = Field(default_factory=SweepSection)
    check: CheckSection = Field(default_factory=CheckSection)

    @model_validator(mode="after")
    def _check_sections(self):
        if self.experiment in (ExperimentKind.L63_FILTER, ExperimentKind.SWEEP) and self.l63 is None:
            raise ValueError(f"Эксперимент {self.experiment.value} требует секцию l63")
        return self

    def echo(self) -> Dict[str, Any]:
        """Конфигурация как словарь простых типов (для config_echo.yaml)"""
        return self.model_dump(mode="json")


def _format_validation(error: ValidationError) -> str:
    parts = []
    for item in error.errors():
        location = ".".join(str(p) for p in item["loc"]) or "<root>"
        parts.append(f"{location}: {item['msg']}")
    return "; ".join(parts)


def read_document(path: Union[str, Path]) -> Dict[str, Any]:
    """Прочитать YAML документ конфигурации без проверки схемы"""
    path = Path(path)
    if not path.is_file():
        raise MissingFileError(f"Файл конфигурации не найден: {path}", path=str(path))
    with open(path, "r", encoding="utf-8") as f:
        try:
            data = yaml.safe_load(f) or {}
        except yaml.YAMLError as e:
            raise ConfigError(f"Ошибка разбора YAML: {e}", path=str(path))
    if not isinstance(data, dict):
        raise ConfigError("Документ конфигурации должен быть словарем", path=str(path))
    return data


def parse_config(data: Union[Dict[str, Any], str, Path], **overrides) -> ExperimentConfig:
    """
    Разобрать и проверить конфигурацию

    Args:
        data: Словарь или путь к YAML файлу
        **overrides: Значения верхнего уровня (seed, out_dir, threads), заменяющие документ

    Returns:
        ExperimentConfig: Проверенная конфигурация

    Raises:
        MissingFileError: файл конфигурации или модели не найден
        ConfigError: документ не прошел проверку
    """
    if isinstance(data, (str, Path)):
        data = read_document(data)
    if not isinstance(data, dict):
        raise ConfigError("Документ конфигурации должен быть словарем")
    data = {**data, **{k: v for k, v in overrides.items() if v is not None}}
    try:
        return ExperimentConfig.model_validate(data)
    except ValidationError as e:
        raise ConfigError(f"Некорректная конфигурация: {_format_validation(e)}")


__all__ = [
    "ExperimentKind",
    "FilterKind",
    "Variant",
    "VARIANT_PRESETS",
    "GuidanceSection",
    "DaisiSection",
    "TrainSection",
    "AblationSection",
    "L63Section",
    "SweepSection",
    "CheckSection",
    "ExperimentConfig",
    "read_document",
    "parse_config",
]
