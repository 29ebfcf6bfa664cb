"""
Настройка логирования
"""
import logging
from pathlib import Path
from typing import Optional, Union

from ..config.settings import settings


def setup_logger(name: str, log_file: Optional[str] = None,
                 level: Union[int, str] = logging.INFO,
                 log_dir: Optional[Path] = None) -> logging.Logger:
    """Настроить логгер (консоль + файл в каталоге логов)"""
    logger_instance = logging.getLogger(name)
    logger_instance.setLevel(level)

    # Предотвращаем дублирование хендлеров, если логгер уже был настроен
    if logger_instance.hasHandlers():
        logger_instance.handlers.clear()

    formatter = logging.Formatter(
        '%(asctime)s - %(name)s - %(levelname)s - %(message)s'
    )

    # Консольный handler
    console_handler = logging.StreamHandler()
    console_handler.setFormatter(formatter)
    logger_instance.addHandler(console_handler)

    # Файловый handler
    if log_file:
        log_path = Path(log_dir or settings.log_dir) / log_file
        log_path.parent.mkdir(parents=True, exist_ok=True)
        file_handler = logging.FileHandler(log_path, encoding="utf-8")
        file_handler.setFormatter(formatter)
        logger_instance.addHandler(file_handler)

    return logger_instance
