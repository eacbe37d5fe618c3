"""Pruebas del generador de corpus sintético con estructura plantada."""

import json

import numpy as np
import pytest

from src.application.corpus import segment_phases
from src.application.synthetic import (
	PHASE_VERBS,
	PREP,
	generate_synthetic,
	phase_templates,
	template_probabilities,
)
from src.infrastructure.config import SynthConfig


def test_same_seed_gives_same_corpus() -> None:
	first = generate_synthetic(SynthConfig(n_recipes=30, seed=11))
	second = generate_synthetic(SynthConfig(n_recipes=30, seed=11))
	other = generate_synthetic(SynthConfig(n_recipes=30, seed=12))
	assert first.records == second.records
	assert first.records != other.records
	assert first.records[0].id == "synth-000000"


def test_every_step_starts_with_a_verb_of_its_planted_type() -> None:
	corpus = generate_synthetic(SynthConfig(n_recipes=200, seed=0))
	for record in corpus.records:
		spans = segment_phases(record.steps)
		assert len(record.planted_types) == len(spans)
		for span, phase_type in zip(spans, record.planted_types):
			for step in record.steps[span.start:span.end]:
				assert step[0] in PHASE_VERBS[phase_type]
				assert step[-1] == "."


def test_recipes_respect_configured_ranges() -> None:
	config = SynthConfig(n_recipes=200, seed=1)
	for record in generate_synthetic(config).records:
		assert config.min_steps <= len(record.steps) <= config.max_steps
		assert config.min_ingredients <= len(record.ingredients) <= config.max_ingredients
		assert len(set(record.ingredients)) == len(record.ingredients)
		assert len(record.image_feat) == config.raw_dim
		assert record.image_grid is None


def test_dominant_template_frequency() -> None:
	corpus = generate_synthetic(SynthConfig(n_recipes=5000, seed=2))
	share = corpus.template_ids.count(0) / 5000
	assert share == pytest.approx(0.7, abs=0.03)


def test_template_probabilities_sum_to_one() -> None:
	probs = template_probabilities(SynthConfig(dominant_template_prob=0.4))
	assert probs.tolist() == pytest.approx([0.4, 0.2, 0.2, 0.2])
	assert template_probabilities(SynthConfig(n_phase_types=1)).tolist() == [1.0]


def test_single_phase_type_plants_only_prep() -> None:
	corpus = generate_synthetic(SynthConfig(n_recipes=50, seed=3, n_phase_types=1))
	assert all(set(record.planted_types) == {PREP} for record in corpus.records)
	assert phase_templates(1) == ((PREP, PREP, PREP),)


def test_grid_mode_produces_square_grids() -> None:
	corpus = generate_synthetic(SynthConfig(n_recipes=5, seed=4, image_mode="grid", grid_size=6))
	for record in corpus.records:
		assert record.image_feat is None
		assert np.asarray(record.image_grid).shape == (6, 6)


def test_manifest_counts_templates() -> None:
	corpus = generate_synthetic(SynthConfig(n_recipes=40, seed=5))
	manifest = json.loads(corpus.manifest_json())
	assert manifest["n_recipes"] == 40
	assert sum(manifest["template_counts"]) == 40
	assert manifest["phase_types"] == ["PREP", "COOK", "FINISH"]
	assert manifest["config"]["seed"] == 5
