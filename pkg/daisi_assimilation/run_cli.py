"""
Командная строка DAISI: train, filter, ablate, sweep, check
"""
import argparse
import json
import logging
from pathlib import Path
from typing import Any, Dict, List, Optional

from .api.errors import EXIT_OK, ConfigError, DaisiError
from .api.schemas import ExperimentConfig, ExperimentKind, parse_config, read_document
from .config.settings import settings
from .services import experiments, storage
from .utils.logger import setup_logger

logger = logging.getLogger(__name__)

COMMAND_EXPERIMENTS = {
    "train": ExperimentKind.TRAIN,
    "filter": ExperimentKind.L63_FILTER,
    "ablate": ExperimentKind.GMM_ABLATION,
    "sweep": ExperimentKind.SWEEP,
    "check": ExperimentKind.LINEAR_GAUSSIAN_CHECK,
}


class CommandProcessor:
    """Выполнение подкоманды над проверенной конфигурацией"""

    def __init__(self, config: ExperimentConfig, run_dir: Optional[Path] = None):
        self.config = config
        self.run_dir = run_dir

    def process_command(self, command: str) -> Dict[str, Any]:
        """
        Выполнить подкоманду

        Returns:
            Dict: success, message, data, exit_code

        Raises:
            DaisiError: ошибки конфигурации, численные сбои, непройденные проверки
        """
        response: Dict[str, Any] = {
            "command": command,
            "success": False,
            "message": None,
            "data": None,
            "exit_code": EXIT_OK,
        }
        cfg = self.config

        if command == "train":
            model = experiments.run_train(cfg, self.run_dir)
            last = model.history[-1] if model.history else {}
            response["message"] = f"Модель обучена и сохранена: {cfg.train.model_path}"
            response["data"] = {"model_path": str(cfg.train.model_path), "dims": model.dims, **last}

        elif command == "filter":
            result = experiments.run_l63_filter(cfg, self.run_dir)
            response["message"] = f"Фильтрация завершена: {cfg.repeats} повторов"
            response["data"] = result.report.to_row()

        elif command == "ablate":
            result = experiments.run_gmm_ablation(cfg, self.run_dir)
            response["message"] = "Абляция завершена"
            response["data"] = {"best_t_min": result.best[0], "best_eps": result.best[1],
                                "best_mmd": float(result.heatmap["mmd"].min())}

        elif command == "sweep":
            result = experiments.run_sweep(cfg, self.run_dir)
            response["message"] = "Поиск гиперпараметров завершен"
            response["data"] = {"best_t_min": result.best[0], "best_eps": result.best[1]}

        elif command == "check":
            result = experiments.run_linear_gaussian_check(cfg, self.run_dir)
            response["message"] = "Все проверки пройдены"
            response["data"] = {"comparisons": len(result.table)}

        else:
            raise ConfigError(f"Неизвестная команда: {command}")

        response["success"] = True
        return response


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="daisi", description="Ансамблевая фильтрация DAISI")
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", type=Path, default=None, help="YAML файл конфигурации")
    common.add_argument("--seed", type=int, default=None, help="Главный seed")
    common.add_argument("--out", type=Path, default=None, help="Каталог результатов")
    common.add_argument("--threads", type=int, default=None, help="Число потоков")
    common.add_argument("--tag", type=str, default=None, help="Имя каталога запуска")
    sub = parser.add_subparsers(dest="command", required=True)
    sub.add_parser("train", parents=[common], help="Обучить дрейф на траектории Лоренца-63")
    sub.add_parser("filter", parents=[common], help="Фильтрация Лоренца-63 (DAISI или BPF)")
    sub.add_parser("ablate", parents=[common], help="Сетка (t_min, eps) на тестовом стенде смеси")
    sub.add_parser("sweep", parents=[common], help="Поиск (t_min, eps) по CRPS")
    sub.add_parser("check", parents=[common], help="Проверки против фильтра Калмана")
    return parser


def load_config(args: argparse.Namespace) -> ExperimentConfig:
    """Документ конфигурации с подкомандой и флагами командной строки"""
    document: Dict[str, Any] = {}
    if args.config is not None:
        document = dict(read_document(args.config))
    expected = COMMAND_EXPERIMENTS[args.command]
    declared = document.get("experiment")
    if declared is not None and declared != expected.value:
        raise ConfigError(f"Конфигурация описывает эксперимент {declared}, а запрошен {args.command}")
    document["experiment"] = expected.value
    return parse_config(document, seed=args.seed, out_dir=args.out, threads=args.threads, tag=args.tag)


def main(argv: Optional[List[str]] = None) -> int:
    """Точка входа CLI; возвращает код возврата"""
    args = build_parser().parse_args(argv)
    setup_logger("daisi_assimilation", log_file="daisi.log", level=settings.log_level)
    try:
        config = load_config(args)
        run_dir = storage.run_directory(config.experiment.value, config.tag, config.out_dir)
        storage.echo_config(config.echo(), run_dir)
        logger.info(f"Запуск '{args.command}', результаты в {run_dir}")
        response = CommandProcessor(config, run_dir).process_command(args.command)
        response["run_dir"] = str(run_dir)
    except DaisiError as e:
        logger.error(f"Ошибка при выполнении команды '{args.command}': {e}")
        response = {"command": args.command, "success": False, "message": str(e),
                    "data": e.to_dict(), "exit_code": e.exit_code}
    print(json.dumps(response, ensure_ascii=False, default=str))
    return int(response["exit_code"])


if __name__ == "__main__":
    raise SystemExit(main())
