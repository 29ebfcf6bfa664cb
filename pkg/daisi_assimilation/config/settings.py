"""
Настройки приложения
"""
from pathlib import Path
from pydantic_settings import BaseSettings, SettingsConfigDict


class Settings(BaseSettings):
    """Настройки процесса (переменные окружения с префиксом DAISI_ и файл .env)"""

    model_config = SettingsConfigDict(
        env_prefix="DAISI_",
        env_file=".env",
        env_file_encoding="utf-8",
        extra="ignore",  # Игнорировать дополнительные поля
    )

    # Пути
    out_dir: Path = Path("out")
    log_dir: Path = Path("logs")

    # Логирование
    log_level: str = "INFO"

    # Параллелизм
    threads: int = 1  # Число потоков joblib
    member_chunk: int = 256  # Размер блока членов ансамбля (не зависит от числа потоков)


settings = Settings()
