"""Comparación de variantes a presupuesto de parámetros igualado.

Variantes:
	dgn_attn   DGN con fusión por atención (N = n_generators).
	dgn_cat    DGN con fusión por concatenación.
	dgn_n1     DGN con un solo sub-generador (todas las fases con etiqueta 0).
	baseline   decodificador único con tantos bloques como acerquen su tamaño al de dgn_attn.
"""

from __future__ import annotations

import dataclasses
from dataclasses import dataclass, field
from typing import Dict, List, Optional, Sequence

import structlog

from src.application.clustering import best_label_mapping, template_match_rate
from src.domain.entities import RecipeRecord, Vocabulary
from src.domain.exceptions import InvalidConfigError
from src.infrastructure.config import ModelConfig
from src.model.dgn import BaselineModel, DGNModel

logger = structlog.get_logger()

VARIANTS = ("dgn_attn", "dgn_cat", "dgn_n1", "baseline")
PPL_MARGIN_VS_BASELINE = 0.97
PPL_TOLERANCE_ATTN_VS_CAT = 1.01


@dataclass
class VariantResult:
	name: str
	kind: str
	fusion: str
	n_generators: int
	parameters: int
	perplexity: float
	bleu: float
	rouge_l: float
	avg_length: float
	vocab_size: int
	structure_match: Optional[float] = None
	rouge_l_random_order: Optional[float] = None

	def to_dict(self) -> Dict[str, object]:
		return dataclasses.asdict(self)


@dataclass
class ExperimentReport:
	results: List[VariantResult] = field(default_factory=list)
	trends: Dict[str, bool] = field(default_factory=dict)

	def by_name(self) -> Dict[str, VariantResult]:
		return {result.name: result for result in self.results}

	def to_dict(self) -> Dict[str, object]:
		return {"variants": [result.to_dict() for result in self.results], "trends": dict(self.trends)}


def variant_config(base: ModelConfig, name: str) -> ModelConfig:
	"""ModelConfig de la variante `name` partiendo de la arquitectura base."""
	updates: Dict[str, Dict[str, object]] = {
		"dgn_attn": {"model_kind": "dgn", "fusion": "attn"},
		"dgn_cat": {"model_kind": "dgn", "fusion": "cat"},
		"dgn_n1": {"model_kind": "dgn", "fusion": "attn", "n_generators": 1},
		"baseline": {"model_kind": "baseline"},
	}
	if name not in updates:
		raise InvalidConfigError(f"variante desconocida: {name} (opciones: {', '.join(VARIANTS)})")
	return ModelConfig.model_validate({**base.model_dump(), **updates[name]})


def collapse_labels(records: Sequence[RecipeRecord]) -> List[RecipeRecord]:
	"""Todas las fases al sub-generador 0; los tipos plantados se conservan."""
	return [
		dataclasses.replace(record, pseudo_labels=tuple(0 for _ in record.pseudo_labels))
		for record in records
	]


def match_parameter_budget(config: ModelConfig, vocab: Vocabulary, target: int) -> ModelConfig:
	"""Configuración de línea base cuyo nº de parámetros queda más cerca de `target`.

	Solo varía `n_indep`; cada candidato añade un bloque al decodificador.
	"""
	base = variant_config(config, "baseline")
	ceiling = config.n_shared + config.n_generators * config.n_indep + config.n_layer + 3
	best: Optional[ModelConfig] = None
	best_gap = None
	for n_indep in range(max(0, 1 - base.n_shared), ceiling + 1):
		candidate = ModelConfig.model_validate({**base.model_dump(), "n_indep": n_indep})
		gap = abs(BaselineModel(candidate, vocab).num_parameters() - target)
		if best_gap is None or gap < best_gap:
			best, best_gap = candidate, gap
	logger.debug("experiments: presupuesto igualado", target=target, n_indep=best.n_indep, gap=best_gap)
	return best


def structure_match_rate(model: DGNModel, records: Sequence[RecipeRecord]) -> float:
	"""Fracción de recetas cuya estructura decodificada coincide con la de referencia.

	Si hay tipos plantados se comparan contra ellos, traduciendo las etiquetas con la
	correspondencia cluster → tipo de las pseudo etiquetas; si no, contra las pseudo etiquetas.
	"""
	if not records:
		return 0.0
	max_phases = model.config.max_phases
	predicted = [model.predict_structure(record) for record in records]
	if all(record.planted_types and len(record.planted_types) == len(record.pseudo_labels) for record in records):
		mapping = best_label_mapping(
			[label for record in records for label in record.pseudo_labels],
			[t for record in records for t in record.planted_types],
			model.config.n_generators,
		)
		return template_match_rate(predicted, [record.planted_types[:max_phases] for record in records], mapping)
	hits = sum(1 for labels, record in zip(predicted, records) if labels == list(record.pseudo_labels[:max_phases]))
	return hits / len(records)


def trend_checks(results: Dict[str, VariantResult]) -> Dict[str, bool]:
	"""Tendencias esperadas entre variantes; solo se evalúan las que tienen ambas partes."""
	checks: Dict[str, bool] = {}
	attn = results.get("dgn_attn")
	if attn is None:
		return checks
	baseline = results.get("baseline")
	if baseline is not None:
		checks["perplexity_dgn_below_baseline"] = attn.perplexity <= PPL_MARGIN_VS_BASELINE * baseline.perplexity
		checks["length_dgn_above_baseline"] = attn.avg_length > baseline.avg_length
		checks["vocab_dgn_above_baseline"] = attn.vocab_size > baseline.vocab_size
	cat = results.get("dgn_cat")
	if cat is not None:
		checks["perplexity_attn_not_worse_than_cat"] = attn.perplexity <= cat.perplexity * PPL_TOLERANCE_ATTN_VS_CAT
	single = results.get("dgn_n1")
	if single is not None:
		checks["perplexity_several_generators_below_one"] = attn.perplexity < single.perplexity
	return checks
