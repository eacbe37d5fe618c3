"""Constructores de datos de prueba: corpus sintético pequeño ya etiquetado y configuraciones diminutas."""

from __future__ import annotations

import dataclasses
from typing import List

from src.application.corpus import with_phases
from src.application.synthetic import generate_synthetic
from src.domain.entities import RecipeRecord
from src.infrastructure.config import ModelConfig, SynthConfig


def labeled_corpus(
	n_recipes: int = 12,
	seed: int = 0,
	image_mode: str = "feat",
	**synth_overrides: object,
) -> List[RecipeRecord]:
	# Las pseudo etiquetas se toman de los tipos plantados para no depender del k-means.
	config = SynthConfig(n_recipes=n_recipes, seed=seed, raw_dim=8, image_mode=image_mode, **synth_overrides)
	records = []
	for record in generate_synthetic(config).records:
		phased = with_phases(record)
		records.append(dataclasses.replace(phased, pseudo_labels=phased.planted_types))
	return records


def tiny_model_config(**overrides: object) -> ModelConfig:
	values = dict(
		hidden=16,
		n_head=2,
		n_layer=1,
		n_shared=1,
		n_indep=1,
		image_raw_dim=8,
		max_ingr_tokens=10,
		max_phase_tokens=20,
		max_recipe_tokens=40,
		max_positions=48,
	)
	values.update(overrides)
	return ModelConfig(**values)
