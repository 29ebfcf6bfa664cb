"""
Коды ошибок и исключения DAISI
"""
from enum import IntEnum
from typing import Any, Dict, Optional


class ErrorCode(IntEnum):
    """
    Коды ошибок библиотеки

    Группы кодов соответствуют кодам возврата CLI:
    - 1-19: ошибки конфигурации и входных данных (код возврата 2)
    - 20-49: численные сбои (код возврата 3)
    - 50: приемочная проверка не пройдена (код возврата 4)
    """

    OK = 0  # Ошибок нет

    # Конфигурация и входные данные (1-19)
    INVALID_CONFIG = 1  # Некорректная конфигурация
    DOMAIN = 2  # Аргумент вне допустимой области
    DIMENSION_MISMATCH = 3  # Несовпадение размерностей
    MODEL_FORMAT = 4  # Некорректный файл модели или ансамбля
    MISSING_FILE = 5  # Файл не найден

    # Численные сбои (20-49)
    SINGULAR_SCHEDULE = 20  # Особая точка расписания
    NON_FINITE_STATE = 21  # Неконечное состояние
    TRAINING_DIVERGED = 22  # Обучение разошлось
    GUIDANCE_FAILED = 23  # Сбой наведения
    CG_NOT_CONVERGED = 24  # Метод сопряженных градиентов не сошелся
    POOL_DEPLETED = 25  # Все веса пула обнулились
    WEIGHT_DEGENERACY = 26  # Вырождение весов частиц
    NON_PSD_COVARIANCE = 27  # Ковариация не положительно полуопределена

    # Проверки (50)
    ACCEPTANCE_FAILED = 50  # Приемочная проверка не пройдена


ERROR_MESSAGES = {
    ErrorCode.OK: "Ошибок нет",
    ErrorCode.INVALID_CONFIG: "Некорректная конфигурация",
    ErrorCode.DOMAIN: "Аргумент вне допустимой области",
    ErrorCode.DIMENSION_MISMATCH: "Несовпадение размерностей",
    ErrorCode.MODEL_FORMAT: "Некорректный формат файла",
    ErrorCode.MISSING_FILE: "Файл не найден",
    ErrorCode.SINGULAR_SCHEDULE: "Особая точка расписания интерполянта",
    ErrorCode.NON_FINITE_STATE: "Неконечное значение состояния",
    ErrorCode.TRAINING_DIVERGED: "Функция потерь стала неконечной",
    ErrorCode.GUIDANCE_FAILED: "Сбой вычисления наведения",
    ErrorCode.CG_NOT_CONVERGED: "Метод сопряженных градиентов не сошелся",
    ErrorCode.POOL_DEPLETED: "Веса пула априорных выборок обнулились",
    ErrorCode.WEIGHT_DEGENERACY: "Все веса частиц равны нулю",
    ErrorCode.NON_PSD_COVARIANCE: "Ковариационная матрица не положительно полуопределена",
    ErrorCode.ACCEPTANCE_FAILED: "Приемочная проверка не пройдена",
}

# Коды возврата CLI
EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_NUMERICAL = 3
EXIT_ACCEPTANCE = 4


def get_error_message(code: int) -> str:
    """
    Получить сообщение об ошибке по коду

    Args:
        code: Код ошибки

    Returns:
        str: Сообщение об ошибке
    """
    try:
        error_code = ErrorCode(code)
        return ERROR_MESSAGES.get(error_code, f"Ошибка {code}")
    except ValueError:
        return f"Неизвестная ошибка {code}"


def exit_code_for(code: int) -> int:
    """Код возврата CLI для кода ошибки"""
    if code == ErrorCode.OK:
        return EXIT_OK
    if code == ErrorCode.ACCEPTANCE_FAILED:
        return EXIT_ACCEPTANCE
    if code < ErrorCode.SINGULAR_SCHEDULE:
        return EXIT_CONFIG
    return EXIT_NUMERICAL


# ========== ИСКЛЮЧЕНИЯ ==========

class DaisiError(Exception):
    """Базовое исключение библиотеки"""

    code = ErrorCode.INVALID_CONFIG

    def __init__(self, message: str, error_code: Optional[int] = None, **details: Any):
        """
        Инициализация ошибки

        Args:
            message: Сообщение об ошибке
            error_code: Код ошибки (по умолчанию код класса)
            **details: Контекст ошибки (шаг, член ансамбля, время и т.п.)
        """
        super().__init__(message)
        self.message = message
        self.error_code = int(error_code if error_code is not None else self.code)
        self.error_description = get_error_message(self.error_code)
        self.details = details

    def __str__(self):
        context = ", ".join(f"{k}={v}" for k, v in self.details.items() if v is not None)
        suffix = f" ({context})" if context else ""
        return f"[Код {self.error_code}] {self.message}{suffix}"

    @property
    def exit_code(self) -> int:
        return exit_code_for(self.error_code)

    def with_details(self, **details: Any) -> "DaisiError":
        """Дополнить контекст ошибки и вернуть ее же"""
        for key, value in details.items():
            self.details.setdefault(key, value)
        return self

    def to_dict(self) -> Dict[str, Any]:
        """Преобразовать в словарь для отчета"""
        return {
            "message": self.message,
            "error_code": self.error_code,
            "error_description": self.error_description,
            "details": dict(self.details),
        }


class ConfigError(DaisiError):
    code = ErrorCode.INVALID_CONFIG


class DomainError(DaisiError):
    code = ErrorCode.DOMAIN


class DimensionMismatchError(DaisiError):
    code = ErrorCode.DIMENSION_MISMATCH


class ModelFormatError(DaisiError):
    code = ErrorCode.MODEL_FORMAT


class MissingFileError(DaisiError):
    code = ErrorCode.MISSING_FILE


class SingularScheduleError(DaisiError):
    code = ErrorCode.SINGULAR_SCHEDULE


class NumericalError(DaisiError):
    """Неконечное состояние при интегрировании (детали: step, member, t)"""
    code = ErrorCode.NON_FINITE_STATE


class TrainingDivergedError(DaisiError):
    code = ErrorCode.TRAINING_DIVERGED


class GuidanceError(DaisiError):
    code = ErrorCode.GUIDANCE_FAILED


class CgNotConvergedError(GuidanceError):
    code = ErrorCode.CG_NOT_CONVERGED


class PoolDepletedError(GuidanceError):
    code = ErrorCode.POOL_DEPLETED


class WeightDegeneracyError(DaisiError):
    code = ErrorCode.WEIGHT_DEGENERACY


class NonPsdCovarianceError(DaisiError):
    code = ErrorCode.NON_PSD_COVARIANCE


class AcceptanceError(DaisiError):
    code = ErrorCode.ACCEPTANCE_FAILED
