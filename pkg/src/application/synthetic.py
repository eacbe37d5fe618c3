"""Corpus sintético con estructura de fases plantada.

Cada receta sigue una plantilla de tipos de fase (PREP, COOK, FINISH); los pasos
de una fase empiezan siempre por un verbo de su tipo y el vector de imagen
codifica ingredientes, plantilla y número de fases, así la estructura se puede
recuperar desde las entradas.
"""

from __future__ import annotations

import json
from collections import Counter
from dataclasses import dataclass
from typing import Dict, List, Sequence, Tuple

import numpy as np
import structlog

from src.application.corpus import segment_phases
from src.domain.entities import RecipeRecord
from src.infrastructure.config import SynthConfig

logger = structlog.get_logger()

PREP, COOK, FINISH = 0, 1, 2
PHASE_TYPE_NAMES = ("PREP", "COOK", "FINISH")

PHASE_VERBS: Dict[int, Tuple[str, ...]] = {
	PREP: ("chop", "wash", "peel", "slice", "measure"),
	COOK: ("heat", "fry", "boil", "simmer", "bake"),
	FINISH: ("serve", "garnish", "plate", "cool", "sprinkle"),
}

# Complementos propios de cada tipo: dan contexto distinto a cada familia de verbos.
PHASE_TAILS: Dict[int, Tuple[Tuple[str, ...], ...]] = {
	PREP: (
		("into", "small", "pieces"),
		("on", "the", "board"),
		("with", "a", "sharp", "knife"),
		("under", "cold", "water"),
	),
	COOK: (
		("over", "medium", "heat"),
		("in", "a", "large", "pan"),
		("for", "ten", "minutes"),
		("until", "golden", "brown"),
	),
	FINISH: (
		("on", "a", "warm", "plate"),
		("with", "fresh", "herbs"),
		("before", "serving"),
		("at", "room", "temperature"),
	),
}

INGREDIENTS: Tuple[str, ...] = (
	"onion", "garlic", "tomato", "potato", "carrot", "celery", "pepper", "chili",
	"ginger", "lemon", "lime", "apple", "banana", "mushroom", "spinach", "lettuce",
	"cabbage", "broccoli", "zucchini", "eggplant", "cucumber", "corn", "peas", "beans",
	"lentils", "rice", "pasta", "noodles", "bread", "flour", "sugar", "salt",
	"butter", "milk", "cream", "cheese", "yogurt", "egg", "chicken", "beef",
	"pork", "lamb", "salmon", "tuna", "shrimp", "tofu", "oil", "vinegar",
	"honey", "mustard", "basil", "parsley", "cilantro", "thyme", "rosemary", "oregano",
	"cumin", "paprika", "cinnamon", "almonds",
)

_TEMPLATES: Dict[int, Tuple[Tuple[int, ...], ...]] = {
	1: ((PREP, PREP, PREP),),
	2: ((PREP, COOK, COOK), (COOK, PREP, PREP), (PREP, PREP, COOK), (COOK, COOK, PREP)),
	3: ((PREP, COOK, FINISH), (COOK, PREP, FINISH), (PREP, FINISH, COOK), (COOK, FINISH, PREP)),
}


def phase_templates(n_phase_types: int) -> Tuple[Tuple[int, ...], ...]:
	"""Plantillas de orden de fases; la primera es la dominante."""
	return _TEMPLATES[n_phase_types]


def template_probabilities(config: SynthConfig) -> np.ndarray:
	templates = phase_templates(config.n_phase_types)
	if len(templates) == 1:
		return np.ones(1)
	rest = (1.0 - config.dominant_template_prob) / (len(templates) - 1)
	return np.array([config.dominant_template_prob] + [rest] * (len(templates) - 1))


@dataclass
class SyntheticCorpus:
	"""Registros generados junto con el manifiesto de generación."""
	records: List[RecipeRecord]
	template_ids: List[int]
	config: SynthConfig

	def manifest(self) -> Dict[str, object]:
		counts = Counter(self.template_ids)
		templates = phase_templates(self.config.n_phase_types)
		return {
			"config": self.config.model_dump(),
			"n_recipes": len(self.records),
			"phase_types": list(PHASE_TYPE_NAMES[: self.config.n_phase_types]),
			"verbs": {PHASE_TYPE_NAMES[t]: list(PHASE_VERBS[t]) for t in range(self.config.n_phase_types)},
			"templates": [list(template) for template in templates],
			"template_probabilities": template_probabilities(self.config).tolist(),
			"template_counts": [counts.get(idx, 0) for idx in range(len(templates))],
		}

	def manifest_json(self) -> str:
		return json.dumps(self.manifest(), indent=2, sort_keys=True)


class SyntheticRecipeGenerator:
	"""Genera recetas de 2–7 pasos a partir de una gramática de 3 tipos de fase."""

	def __init__(self, config: SynthConfig) -> None:
		self._config = config
		self._templates = phase_templates(config.n_phase_types)
		self._probabilities = template_probabilities(config)
		# Proyecciones fijas del vector de imagen, derivadas de la semilla.
		signature_rng = np.random.default_rng([config.seed, 7919])
		self._ingredient_proj = signature_rng.normal(0.0, 1.0, size=(len(INGREDIENTS), config.raw_dim))
		self._template_proj = signature_rng.normal(0.0, 1.0, size=(len(self._templates), config.raw_dim))
		self._count_proj = signature_rng.normal(0.0, 1.0, size=(3, config.raw_dim))
		self._grid_proj = signature_rng.normal(
			0.0, 1.0 / np.sqrt(config.raw_dim), size=(config.raw_dim, config.grid_size * config.grid_size)
		)

	def generate(self) -> SyntheticCorpus:
		rng = np.random.default_rng(self._config.seed)
		records: List[RecipeRecord] = []
		template_ids: List[int] = []
		for index in range(self._config.n_recipes):
			template_id = int(rng.choice(len(self._templates), p=self._probabilities))
			records.append(self._recipe(rng, f"synth-{index:06d}", template_id))
			template_ids.append(template_id)
		logger.info("synth: corpus generado", n_recipes=len(records), seed=self._config.seed)
		return SyntheticCorpus(records=records, template_ids=template_ids, config=self._config)

	def _recipe(self, rng: np.random.Generator, recipe_id: str, template_id: int) -> RecipeRecord:
		cfg = self._config
		n_ingredients = int(rng.integers(cfg.min_ingredients, cfg.max_ingredients + 1))
		ingredient_ids = sorted(rng.choice(len(INGREDIENTS), size=n_ingredients, replace=False).tolist())
		ingredients = tuple(INGREDIENTS[idx] for idx in ingredient_ids)
		n_steps = int(rng.integers(cfg.min_steps, cfg.max_steps + 1))
		spans = segment_phases(range(n_steps))
		planted = self._templates[template_id][: len(spans)]
		steps: List[Tuple[str, ...]] = []
		for span, phase_type in zip(spans, planted):
			for _ in range(span.size):
				steps.append(self._step(rng, phase_type, ingredients))
		vector = self._image_vector(rng, ingredient_ids, template_id, len(spans))
		if cfg.image_mode == "grid":
			grid = (vector @ self._grid_proj).reshape(cfg.grid_size, cfg.grid_size)
			return RecipeRecord(
				id=recipe_id,
				ingredients=ingredients,
				steps=tuple(steps),
				image_grid=tuple(tuple(float(v) for v in row) for row in grid),
				planted_types=tuple(planted),
			)
		return RecipeRecord(
			id=recipe_id,
			ingredients=ingredients,
			steps=tuple(steps),
			image_feat=tuple(float(v) for v in vector),
			planted_types=tuple(planted),
		)

	def _step(self, rng: np.random.Generator, phase_type: int, ingredients: Sequence[str]) -> Tuple[str, ...]:
		verb = PHASE_VERBS[phase_type][int(rng.integers(len(PHASE_VERBS[phase_type])))]
		ingredient = ingredients[int(rng.integers(len(ingredients)))]
		tail = PHASE_TAILS[phase_type][int(rng.integers(len(PHASE_TAILS[phase_type])))]
		return (verb, "the", ingredient) + tail + (".",)

	def _image_vector(
		self,
		rng: np.random.Generator,
		ingredient_ids: Sequence[int],
		template_id: int,
		n_phases: int,
	) -> np.ndarray:
		vector = self._ingredient_proj[list(ingredient_ids)].mean(axis=0)
		vector = vector + self._template_proj[template_id] + self._count_proj[n_phases - 1]
		return vector + self._config.noise * rng.normal(0.0, 1.0, size=self._config.raw_dim)


def generate_synthetic(config: SynthConfig) -> SyntheticCorpus:
	"""Mismo `config.seed` → mismo corpus."""
	return SyntheticRecipeGenerator(config).generate()
