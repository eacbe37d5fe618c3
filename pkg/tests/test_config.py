"""Pruebas de la configuración resuelta: archivo INI, entorno y flags."""

import json
from pathlib import Path

import pytest

from src.domain.exceptions import InvalidConfigError
from src.infrastructure.config import RUN_CONFIG_FILENAME, load_run_config, write_run_config


def _ini(tmp_path: Path, text: str) -> str:
	path = tmp_path / "run.ini"
	path.write_text(text, encoding="utf-8")
	return str(path)


def test_defaults_without_file() -> None:
	config = load_run_config()
	assert config.model.hidden == 64
	assert config.train.lambdas == (1.0, 1.0, 0.1)
	assert config.label.k == 3
	assert config.synth.n_recipes == 2000


def test_environment_supplies_threads_and_log_level(monkeypatch) -> None:
	monkeypatch.setenv("DGN_THREADS", "2")
	monkeypatch.setenv("DGN_LOG_LEVEL", "debug")
	config = load_run_config()
	assert config.threads == 2
	assert config.log_level == "DEBUG"


def test_file_values_and_flag_precedence(tmp_path: Path, monkeypatch) -> None:
	monkeypatch.setenv("DGN_THREADS", "2")
	path = _ini(tmp_path, "[run]\nseed = 5\nthreads = 3\n[model]\nhidden = 32\nfusion = cat\n[train]\nepochs = 4\n")
	config = load_run_config(path, {"train.epochs": 9, "seed": None})
	assert config.seed == 5
	assert config.threads == 3
	assert config.model.hidden == 32 and config.model.fusion == "cat"
	assert config.train.epochs == 9


@pytest.mark.parametrize(
	"text, overrides",
	[
		("[mystery]\nx = 1\n", {}),
		("[model]\nhidden = 30\nn_head = 4\n", {}),
		("[model]\nfusion = sum\n", {}),
		("", {"train.lr": -1.0}),
		("", {"log_level": "chatty"}),
		("", {"nowhere.k": 2}),
		("not an ini file", {}),
	],
)
def test_invalid_configuration_is_rejected(tmp_path: Path, text: str, overrides) -> None:
	with pytest.raises(InvalidConfigError):
		load_run_config(_ini(tmp_path, text), overrides)


def test_run_config_snapshot_is_written(tmp_path: Path) -> None:
	config = load_run_config(None, {"seed": 11, "model.n_generators": 2})
	path = write_run_config(config, str(tmp_path / "out"))
	assert path.name == RUN_CONFIG_FILENAME
	snapshot = json.loads(path.read_text(encoding="utf-8"))
	assert snapshot["seed"] == 11
	assert snapshot["model"]["n_generators"] == 2
