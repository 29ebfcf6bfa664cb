"""
Тесты командной строки: коды возврата и файлы результатов
"""
import json

import pytest
import yaml

from daisi_assimilation.api.errors import (
    EXIT_ACCEPTANCE,
    EXIT_CONFIG,
    EXIT_NUMERICAL,
    EXIT_OK,
    ConfigError,
    ErrorCode,
    exit_code_for,
    get_error_message,
)
from daisi_assimilation.api.schemas import parse_config
from daisi_assimilation.run_cli import CommandProcessor, main


def write_config(tmp_path, data):
    path = tmp_path / "config.yaml"
    path.write_text(yaml.safe_dump(data), encoding="utf-8")
    return str(path)


def last_response(capsys):
    return json.loads(capsys.readouterr().out.strip().splitlines()[-1])


ABLATION = {
    "daisi": {"steps": 20, "guidance": {"kind": "mc"}},
    "ablation": {"t_min": [0.3], "eps": [0.0], "n": 200},
}


class TestExitCodes:
    def test_error_groups(self):
        assert exit_code_for(ErrorCode.OK) == EXIT_OK
        assert exit_code_for(ErrorCode.MISSING_FILE) == EXIT_CONFIG
        assert exit_code_for(ErrorCode.CG_NOT_CONVERGED) == EXIT_NUMERICAL
        assert exit_code_for(ErrorCode.ACCEPTANCE_FAILED) == EXIT_ACCEPTANCE
        assert get_error_message(999).startswith("Неизвестная")

    def test_ablation_success(self, tmp_path, capsys):
        code = main(["ablate", "--config", write_config(tmp_path, ABLATION), "--out", str(tmp_path / "runs"),
                     "--tag", "a1", "--seed", "3"])
        assert code == EXIT_OK
        response = last_response(capsys)
        assert response["success"] is True
        assert response["data"]["best_t_min"] == 0.3
        run_dir = tmp_path / "runs" / "gmm_ablation" / "a1"
        assert (run_dir / "heatmap.csv").is_file()
        assert yaml.safe_load((run_dir / "config_echo.yaml").read_text(encoding="utf-8"))["seed"] == 3

    def test_unknown_key(self, tmp_path, capsys):
        code = main(["ablate", "--config", write_config(tmp_path, {"ablation": {"grid": 3}})])
        assert code == EXIT_CONFIG
        response = last_response(capsys)
        assert response["success"] is False
        assert response["data"]["error_code"] == ErrorCode.INVALID_CONFIG

    def test_experiment_mismatch(self, tmp_path):
        assert main(["train", "--config", write_config(tmp_path, {"experiment": "sweep"})]) == EXIT_CONFIG

    def test_missing_config_file(self, tmp_path):
        assert main(["check", "--config", str(tmp_path / "absent.yaml")]) == EXIT_CONFIG

    def test_training_divergence(self, tmp_path, monkeypatch):
        monkeypatch.chdir(tmp_path)
        config = {"train": {"n_steps": 50, "batch_size": 8, "epochs": 1, "lr": 1e200, "hidden": [4]}}
        assert main(["train", "--config", write_config(tmp_path, config)]) == EXIT_NUMERICAL

    def test_failed_check(self, tmp_path, capsys):
        config = {"check": {"steps": 3, "members": 20, "particles": 100, "samples": 100, "sde_steps": 20,
                            "n_sigma": 1e-12}}
        code = main(["check", "--config", write_config(tmp_path, config), "--out", str(tmp_path), "--tag", "c"])
        assert code == EXIT_ACCEPTANCE
        assert (tmp_path / "linear_gaussian_check" / "c" / "check.csv").is_file()
        assert last_response(capsys)["data"]["error_code"] == ErrorCode.ACCEPTANCE_FAILED

    def test_train_writes_model(self, tmp_path, capsys):
        model_path = tmp_path / "drift.bin"
        config = {"train": {"n_steps": 100, "epochs": 1, "hidden": [4], "model_path": str(model_path)}}
        code = main(["train", "--config", write_config(tmp_path, config), "--out", str(tmp_path), "--tag", "t"])
        assert code == EXIT_OK
        assert model_path.is_file()
        assert (tmp_path / "train" / "t" / "history.csv").is_file()
        assert last_response(capsys)["data"]["dims"] == [4, 4, 3]


class TestCommandProcessor:
    def test_unknown_command(self):
        processor = CommandProcessor(parse_config({"experiment": "train"}))
        with pytest.raises(ConfigError):
            processor.process_command("serve")
