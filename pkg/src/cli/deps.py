"""
Dependencias compartidas de la CLI.

Define el store global y funciones que construyen los casos de uso a partir
de una RunConfig ya resuelta.
"""

from __future__ import annotations

import logging
import sys
from typing import Sequence, Tuple

import structlog

from src.application.corpus import tokenize
from src.application.training import model_from_checkpoint
from src.application.use_cases import (
	CompareVariantsUseCase,
	EvaluateModelUseCase,
	GenerateRecipesUseCase,
	OverfitCheckUseCase,
	PhaseLabelingUseCase,
	SynthesizeCorpusUseCase,
	TrainModelUseCase,
)
from src.infrastructure.config import RunConfig
from src.infrastructure.corpus_store import JsonlCorpusStore

# Instancia global del almacén JSONL con el tokenizador del corpus.
_store = JsonlCorpusStore(tokenizer=tokenize)


def configure_logging(level: str) -> None:
	"""Configura structlog una sola vez; los eventos van a stderr para no mezclarse con la salida."""
	structlog.configure(
		processors=[
			structlog.processors.add_log_level,
			structlog.processors.TimeStamper(fmt="iso"),
			structlog.dev.ConsoleRenderer(colors=False),
		],
		wrapper_class=structlog.make_filtering_bound_logger(logging.getLevelName(level.upper())),
		logger_factory=structlog.PrintLoggerFactory(sys.stderr),
		cache_logger_on_first_use=False,
	)


def get_store() -> JsonlCorpusStore:
	"""
	Devuelve la instancia global del almacén de corpus.
	"""
	return _store


def get_synth_use_case() -> SynthesizeCorpusUseCase:
	return SynthesizeCorpusUseCase(store=_store)


def get_labeling_use_case(config: RunConfig) -> PhaseLabelingUseCase:
	return PhaseLabelingUseCase(
		store=_store,
		config=config.label,
		split_seed=config.seed,
		val_fraction=config.train.val_fraction,
	)


def get_training_use_case(config: RunConfig) -> TrainModelUseCase:
	return TrainModelUseCase(store=_store, config=config)


def get_generation_use_case(
	checkpoint_path: str,
	*,
	threads: int,
	order: str = "predicted",
	seed: int = 0,
) -> Tuple[GenerateRecipesUseCase, RunConfig]:
	"""
	Carga el checkpoint y devuelve el caso de uso de generación junto con la configuración guardada.
	"""
	model, run_config = model_from_checkpoint(checkpoint_path)
	return GenerateRecipesUseCase(model=model, threads=threads, order=order, seed=seed), run_config


def get_evaluation_use_case(checkpoint_path: str, *, threads: int) -> Tuple[EvaluateModelUseCase, RunConfig]:
	model, run_config = model_from_checkpoint(checkpoint_path)
	generator = GenerateRecipesUseCase(model=model, threads=threads)
	return EvaluateModelUseCase(model=model, generator=generator), run_config


def get_experiment_use_case(config: RunConfig, *, variants: Sequence[str]) -> CompareVariantsUseCase:
	return CompareVariantsUseCase(store=_store, config=config, variants=variants)


def get_overfit_use_case(
	config: RunConfig,
	*,
	n_recipes: int,
	max_epochs: int,
	threshold: float,
) -> OverfitCheckUseCase:
	return OverfitCheckUseCase(
		store=_store,
		config=config,
		n_recipes=n_recipes,
		max_epochs=max_epochs,
		threshold=threshold,
	)
