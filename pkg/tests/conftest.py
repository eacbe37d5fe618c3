"""Fixtures compartidas por las pruebas del modelo y del pipeline."""

from __future__ import annotations

from typing import List

import pytest

from src.application.corpus import build_vocab
from src.cli import deps
from src.domain.entities import RecipeRecord, Vocabulary
from src.infrastructure.config import ModelConfig
from tests.factories import labeled_corpus, tiny_model_config


@pytest.fixture(autouse=True)
def _configure_logging():
	# La CLI configura structlog con el stderr capturado de cada prueba; se reconfigura
	# antes de cada prueba para que ninguna escriba en el flujo cerrado de otra.
	deps.configure_logging("INFO")
	yield


@pytest.fixture
def records() -> List[RecipeRecord]:
	return labeled_corpus()


@pytest.fixture
def vocab(records: List[RecipeRecord]) -> Vocabulary:
	return build_vocab(records)


@pytest.fixture
def model_config() -> ModelConfig:
	return tiny_model_config()
