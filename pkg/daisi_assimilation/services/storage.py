"""
Хранение результатов: бинарные файлы моделей и ансамблей, CSV таблицы, эхо конфигурации
"""
import logging
import struct
from datetime import datetime
from pathlib import Path
from typing import Any, Dict, List, Optional, Union

import numpy as np
import pandas as pd
import yaml

from ..api.errors import MissingFileError, ModelFormatError
from ..config.constants import ENSEMBLE_MAGIC, FORMAT_VERSION, MODEL_MAGIC
from ..config.settings import settings
from ..core.drift import NetDrift
from ..core.interpolant import NormStats
from ..models.ensemble import Ensemble

logger = logging.getLogger(__name__)

PathLike = Union[str, Path]

# Формат чисел в CSV: 17 значащих цифр дают побитово воспроизводимый текст
FLOAT_FORMAT = "%.17g"


# ========== БИНАРНЫЕ ФОРМАТЫ ==========

def _header(magic: bytes, dims: List[int]) -> bytes:
    return magic + struct.pack("<BI", FORMAT_VERSION, len(dims)) + np.asarray(dims, dtype="<u4").tobytes()


class _Reader:
    """Последовательное чтение little-endian полей с проверкой длины"""

    def __init__(self, data: bytes, path: Path):
        self.data = data
        self.path = path
        self.offset = 0

    def take(self, n: int) -> bytes:
        if self.offset + n > len(self.data):
            raise ModelFormatError("Файл обрезан", path=str(self.path), offset=self.offset)
        chunk = self.data[self.offset:self.offset + n]
        self.offset += n
        return chunk

    def unpack(self, fmt: str):
        return struct.unpack(fmt, self.take(struct.calcsize(fmt)))

    def array(self, dtype: str, count: int) -> np.ndarray:
        item = np.dtype(dtype).itemsize
        return np.frombuffer(self.take(item * count), dtype=dtype).astype(dtype.replace("<", "="))

    def header(self, magic: bytes) -> List[int]:
        if self.take(len(magic)) != magic:
            raise ModelFormatError("Неверная сигнатура файла", path=str(self.path))
        version, n_dims = self.unpack("<BI")
        if version != FORMAT_VERSION:
            raise ModelFormatError(f"Неподдерживаемая версия формата {version}", path=str(self.path))
        return [int(d) for d in self.array("<u4", n_dims)]

    def finish(self) -> None:
        if self.offset != len(self.data):
            raise ModelFormatError("Лишние байты в конце файла", path=str(self.path))


def _read_bytes(path: PathLike) -> bytes:
    path = Path(path)
    if not path.is_file():
        raise MissingFileError(f"Файл не найден: {path}", path=str(path))
    return path.read_bytes()


def save_model(model: NetDrift, path: PathLike) -> Path:
    """
    Сохранить сетевой дрейф

    Формат: сигнатура DAISIDRF, версия u8, n_dims u32, dims u32[n_dims],
    d u32, mu f64[d], sigma f64, n_params u64, params f64[n_params].
    """
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    d = model.dim
    payload = b"".join([
        _header(MODEL_MAGIC, model.dims),
        struct.pack("<I", d),
        np.asarray(model.stats.mu, dtype="<f8").tobytes(),
        struct.pack("<d", float(model.stats.sigma)),
        struct.pack("<Q", model.params.size),
        model.params.astype("<f8").tobytes(),
    ])
    path.write_bytes(payload)
    logger.info(f"Модель сохранена: {path} ({model.params.size} параметров)")
    return path


def load_model(path: PathLike) -> NetDrift:
    """Загрузить сетевой дрейф; любые несоответствия формата дают ModelFormatError"""
    path = Path(path)
    reader = _Reader(_read_bytes(path), path)
    dims = reader.header(MODEL_MAGIC)
    (d,) = reader.unpack("<I")
    mu = reader.array("<f8", d)
    (sigma,) = reader.unpack("<d")
    (n_params,) = reader.unpack("<Q")
    if n_params != NetDrift.count_params(dims):
        raise ModelFormatError("Число параметров не соответствует архитектуре", path=str(path))
    params = reader.array("<f8", n_params)
    reader.finish()
    try:
        return NetDrift(dims, params, NormStats(mu, sigma))
    except Exception as e:
        raise ModelFormatError(f"Некорректная модель: {e}", path=str(path))


def save_ensemble(ensemble: Ensemble, path: PathLike) -> Path:
    """Дамп ансамбля: DAISIENS, версия, dims [J, d], step u64, члены J x d f64"""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    members = ensemble.members
    payload = (_header(ENSEMBLE_MAGIC, list(members.shape)) + struct.pack("<Q", ensemble.step)
               + members.astype("<f8").tobytes())
    path.write_bytes(payload)
    return path


def load_ensemble(path: PathLike) -> Ensemble:
    path = Path(path)
    reader = _Reader(_read_bytes(path), path)
    dims = reader.header(ENSEMBLE_MAGIC)
    if len(dims) != 2:
        raise ModelFormatError(f"Ожидалось 2 размерности ансамбля, получено {len(dims)}", path=str(path))
    (step,) = reader.unpack("<Q")
    members = reader.array("<f8", dims[0] * dims[1]).reshape(dims)
    reader.finish()
    return Ensemble(members, step=int(step))


# ========== CSV ==========

def write_csv(frame: pd.DataFrame, path: PathLike) -> Path:
    """Записать таблицу без индекса с фиксированным форматом чисел"""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    frame.to_csv(path, index=False, float_format=FLOAT_FORMAT, lineterminator="\n")
    logger.info(f"Записан файл {path} ({len(frame)} строк)")
    return path


def read_csv(path: PathLike) -> pd.DataFrame:
    path = Path(path)
    if not path.is_file():
        raise MissingFileError(f"Файл не найден: {path}", path=str(path))
    return pd.read_csv(path)


def trajectory_frame(trajectory: np.ndarray, start_step: int = 0) -> pd.DataFrame:
    """Траектория как таблица step,x0,x1,..."""
    trajectory = np.atleast_2d(trajectory)
    frame = pd.DataFrame(trajectory, columns=[f"x{i}" for i in range(trajectory.shape[1])])
    frame.insert(0, "step", np.arange(start_step, start_step + trajectory.shape[0]))
    return frame


def history_frame(model: NetDrift) -> pd.DataFrame:
    return pd.DataFrame(model.history, columns=["epoch", "train_loss", "val_loss"])


# ========== КАТАЛОГ ЗАПУСКА ==========

def run_directory(experiment: str, tag: Optional[str] = None, out_dir: Optional[PathLike] = None) -> Path:
    """out/<experiment>/<tag или метка времени>/"""
    base = Path(out_dir) if out_dir is not None else settings.out_dir
    name = tag or datetime.now().strftime("%Y%m%d-%H%M%S")
    path = base / experiment / name
    path.mkdir(parents=True, exist_ok=True)
    return path


def echo_config(config: Dict[str, Any], run_dir: PathLike) -> Path:
    """Сохранить фактически использованную конфигурацию рядом с результатами"""
    path = Path(run_dir) / "config_echo.yaml"
    with open(path, "w", encoding="utf-8") as f:
        yaml.safe_dump(config, f, allow_unicode=True, sort_keys=True)
    return path


__all__ = [
    "save_model",
    "load_model",
    "save_ensemble",
    "load_ensemble",
    "write_csv",
    "read_csv",
    "trajectory_frame",
    "history_frame",
    "run_directory",
    "echo_config",
]
