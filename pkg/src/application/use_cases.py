"""Casos de uso del pipeline: sintetizar, etiquetar, entrenar, generar, evaluar y comparar variantes.

Persistencia:
	Los corpus se leen y escriben con un CorpusRepository (JSONL); los modelos
	viajan en checkpoints `.dgnc`.
"""

from __future__ import annotations

import asyncio
import json
from dataclasses import dataclass, field
from pathlib import Path
from typing import Dict, List, Optional, Sequence

import numpy as np
import structlog

from src.application.clustering import best_label_mapping, cluster_purity, kmeans_fit, template_match_rate
from src.application.corpus import build_vocab, split_corpus, with_phases
from src.application.experiments import (
	VARIANTS,
	ExperimentReport,
	VariantResult,
	collapse_labels,
	match_parameter_budget,
	structure_match_rate,
	trend_checks,
	variant_config,
)
from src.application.metrics import bleu, corpus_rouge_l, corpus_stats, perplexity
from src.application.phase_labeler import (
	VerbLexicon,
	assign_pseudo_labels,
	load_verb_embeddings,
	phase_representations,
	train_verb_embeddings,
)
from src.application.synthetic import SyntheticCorpus, generate_synthetic
from src.application.training import EpochMetrics, Trainer
from src.domain.entities import EvalReport, GeneratedRecipe, KMeansModel, RecipeRecord, Vocabulary
from src.domain.exceptions import CorpusFormatError, UnlabeledCorpusError
from src.domain.interfaces import CorpusRepository, RecipeModel
from src.infrastructure.checkpoint import save_checkpoint
from src.infrastructure.config import LabelConfig, ModelConfig, RunConfig, SynthConfig
from src.infrastructure.corpus_store import write_json
from src.model.dgn import DGNModel, build_model

logger = structlog.get_logger()

MODEL_CHECKPOINT = "model.dgnc"
BEST_CHECKPOINT = "best.dgnc"
METRICS_LOG = "metrics.jsonl"
EXPERIMENTS_REPORT = "experiments.json"


class SynthesizeCorpusUseCase:
	"""Genera el corpus plantado y lo guarda junto a su manifiesto."""
	def __init__(self, *, store: CorpusRepository) -> None:
		self._store = store

	def execute(self, *, config: SynthConfig, out_path: str) -> SyntheticCorpus:
		corpus = generate_synthetic(config)
		self._store.save(out_path, corpus.records)
		manifest_path = Path(out_path).with_suffix(".manifest.json")
		write_json(str(manifest_path), corpus.manifest())
		return corpus


@dataclass
class LabelingResult:
	records: List[RecipeRecord]
	model: KMeansModel
	purity: Optional[float] = None
	template_match: Optional[float] = None


class PhaseLabelingUseCase:
	"""Segmenta, ajusta k-means sobre las fases del split de entrenamiento y etiqueta todo el corpus."""

	def __init__(
		self,
		*,
		store: CorpusRepository,
		config: LabelConfig,
		split_seed: int = 0,
		val_fraction: float = 0.1,
	) -> None:
		self._store = store
		self._config = config
		self._split_seed = split_seed
		self._val_fraction = val_fraction
		self._lexicon = VerbLexicon.from_file(config.lexicon_path) if config.lexicon_path else VerbLexicon.default()

	def label(self, records: Sequence[RecipeRecord]) -> LabelingResult:
		segmented = [with_phases(record) for record in records]
		train, _ = split_corpus(segmented, val_fraction=self._val_fraction, seed=self._split_seed)
		if self._config.embeddings_path:
			embeddings = load_verb_embeddings(self._config.embeddings_path)
		else:
			embeddings = train_verb_embeddings(
				train, self._lexicon, dim=self._config.embedding_dim, window=self._config.window
			)
		points = np.array([rep.vector for rep in phase_representations(train, self._lexicon, embeddings)])
		model = kmeans_fit(points, self._config.k, seed=self._config.seed, n_init=self._config.n_init)
		labeled = assign_pseudo_labels(segmented, model, self._lexicon, embeddings)
		result = LabelingResult(records=labeled, model=model)
		if all(len(record.planted_types) == len(record.phases) for record in labeled):
			flat_labels = [label for record in labeled for label in record.pseudo_labels]
			flat_types = [t for record in labeled for t in record.planted_types]
			mapping = best_label_mapping(flat_labels, flat_types, model.k)
			result.purity = cluster_purity(flat_labels, flat_types)
			result.template_match = template_match_rate(
				[record.pseudo_labels for record in labeled],
				[record.planted_types for record in labeled],
				mapping,
			)
		logger.info(
			"labeler: corpus etiquetado",
			recipes=len(labeled),
			k=model.k,
			purity=result.purity,
			template_match=result.template_match,
		)
		return result

	def execute(self, *, corpus_path: str, out_path: str, centroids_path: str, labels_path: str) -> LabelingResult:
		result = self.label(self._store.load(corpus_path))
		self._store.save(out_path, result.records)
		self._store.save_labels(labels_path, result.records)
		write_json(
			centroids_path,
			{
				"k": result.model.k,
				"centroids": result.model.centroids.tolist(),
				"inertia_history": result.model.inertia_history,
				"n_iter": result.model.n_iter,
				"purity": result.purity,
				"template_match": result.template_match,
			},
		)
		return result


@dataclass
class TrainingResult:
	history: List[EpochMetrics] = field(default_factory=list)
	best_val_ppl: float = float("inf")
	model_path: Optional[Path] = None
	best_path: Optional[Path] = None


class TrainModelUseCase:
	"""Entrena DGN o la línea base; escribe metrics.jsonl, best.dgnc y model.dgnc."""

	def __init__(self, *, store: CorpusRepository, config: RunConfig) -> None:
		self._store = store
		self._config = config

	def prepare(self, records: Sequence[RecipeRecord]):
		"""(train, val, vocab) con la misma partición que usa el etiquetado."""
		segmented = [with_phases(record) for record in records]
		if self._config.model.model_kind == "dgn" and not all(record.is_labeled for record in segmented):
			raise UnlabeledCorpusError("train: el corpus no tiene pseudo etiquetas (ejecutar `label` antes)")
		train, val = split_corpus(segmented, val_fraction=self._config.train.val_fraction, seed=self._config.seed)
		vocab = build_vocab(train, min_freq=self._config.train.min_freq)
		return train, val, vocab

	def execute(self, *, corpus_path: str, out_dir: str) -> TrainingResult:
		train, val, vocab = self.prepare(self._store.load(corpus_path))
		model = build_model(self._config.model, vocab, seed=self._config.seed)
		trainer = Trainer(model, self._config.train, run_config=self._config)
		out = Path(out_dir)
		out.mkdir(parents=True, exist_ok=True)
		result = TrainingResult()
		with open(out / METRICS_LOG, "w", encoding="utf-8") as log_handle:
			for _ in range(self._config.train.epochs):
				metrics = trainer.fit_epoch(train, val)
				result.history.append(metrics)
				log_handle.write(_json_line(metrics.to_dict()))
				log_handle.flush()
				if metrics.val_ppl < result.best_val_ppl:
					result.best_val_ppl = metrics.val_ppl
					result.best_path = save_checkpoint(
						str(out / BEST_CHECKPOINT),
						trainer.checkpoint_state(metadata={"val_ppl": metrics.val_ppl}),
					)
		result.model_path = save_checkpoint(
			str(out / MODEL_CHECKPOINT),
			trainer.checkpoint_state(metadata={"best_val_ppl": result.best_val_ppl}),
		)
		return result


class GenerateRecipesUseCase:
	"""Inferencia en dos etapas por receta; el lote se reparte en hilos acotados por DGN_THREADS."""

	def __init__(self, *, model: RecipeModel, threads: int = 4, order: str = "predicted", seed: int = 0) -> None:
		self._model = model
		self._threads = max(1, threads)
		self._order = order
		self._seed = seed

	def execute(self, record: RecipeRecord, *, index: int = 0) -> GeneratedRecipe:
		rng = np.random.default_rng([self._seed, index])
		return self._model.generate(record, order=self._order, rng=rng)

	async def execute_many(self, records: Sequence[RecipeRecord]) -> List[GeneratedRecipe]:
		"""Genera todas las recetas conservando el orden de entrada."""
		semaphore = asyncio.Semaphore(self._threads)

		async def _one(index: int, record: RecipeRecord) -> GeneratedRecipe:
			async with semaphore:
				return await asyncio.to_thread(self.execute, record, index=index)

		results = await asyncio.gather(*(_one(index, record) for index, record in enumerate(records)))
		logger.info("generator: recetas generadas", count=len(results), order=self._order)
		return list(results)


class EvaluateModelUseCase:
	"""Perplejidad con teacher forcing + BLEU/ROUGE-L/estadísticas sobre la generación voraz."""

	def __init__(self, *, model: RecipeModel, generator: GenerateRecipesUseCase) -> None:
		self._model = model
		self._generator = generator

	async def execute(self, records: Sequence[RecipeRecord]) -> EvalReport:
		segmented = [with_phases(record) for record in records]
		ppl = perplexity(self._model, segmented)
		generated = await self._generator.execute_many(segmented)
		hypotheses = [item.tokens for item in generated]
		references = [record.instruction_tokens() for record in segmented]
		avg_length, vocab_size = corpus_stats(hypotheses)
		report = EvalReport(
			perplexity=ppl,
			bleu=bleu(hypotheses, references),
			rouge_l=corpus_rouge_l(hypotheses, references),
			avg_length=avg_length,
			vocab_size=vocab_size,
		)
		logger.info("evaluator: reporte", **report.to_dict())
		return report


class CompareVariantsUseCase:
	"""Entrena cada variante sobre la misma partición y la evalúa en el split retenido.

	La línea base se dimensiona para igualar el nº de parámetros de dgn_attn.
	"""

	def __init__(
		self,
		*,
		store: CorpusRepository,
		config: RunConfig,
		variants: Sequence[str] = VARIANTS,
	) -> None:
		self._store = store
		self._config = config
		self._variants = tuple(variants)

	async def run(self, records: Sequence[RecipeRecord]) -> ExperimentReport:
		dgn_config = self._config.model_copy(update={"model": variant_config(self._config.model, "dgn_attn")})
		train, val, vocab = TrainModelUseCase(store=self._store, config=dgn_config).prepare(records)
		if not val:
			raise CorpusFormatError("experiment: el split de validación está vacío (subir val_fraction)")
		target = DGNModel(dgn_config.model, vocab, seed=self._config.seed).num_parameters()
		results: Dict[str, VariantResult] = {}
		for name in self._variants:
			model_config = variant_config(self._config.model, name)
			if name == "baseline":
				model_config = match_parameter_budget(self._config.model, vocab, target)
			train_v, val_v = train, val
			if name == "dgn_n1":
				train_v, val_v = collapse_labels(train), collapse_labels(val)
			results[name] = await self._run_variant(name, model_config, vocab, train_v, val_v)
		report = ExperimentReport(results=list(results.values()), trends=trend_checks(results))
		logger.info("experiments: comparación terminada", **report.trends)
		return report

	async def _run_variant(
		self,
		name: str,
		model_config: ModelConfig,
		vocab: Vocabulary,
		train: Sequence[RecipeRecord],
		val: Sequence[RecipeRecord],
	) -> VariantResult:
		run_config = self._config.model_copy(update={"model": model_config})
		model = build_model(model_config, vocab, seed=self._config.seed)
		trainer = Trainer(model, self._config.train, run_config=run_config)
		for _ in range(self._config.train.epochs):
			trainer.train_epoch(train)
		model.eval()
		generator = GenerateRecipesUseCase(model=model, threads=self._config.threads)
		report = await EvaluateModelUseCase(model=model, generator=generator).execute(val)
		result = VariantResult(
			name=name,
			kind=model_config.model_kind,
			fusion=model_config.fusion,
			n_generators=model_config.n_generators,
			parameters=model.num_parameters(),
			**report.to_dict(),
		)
		if isinstance(model, DGNModel):
			result.structure_match = structure_match_rate(model, val)
			shuffled = GenerateRecipesUseCase(
				model=model, threads=self._config.threads, order="random", seed=self._config.seed
			)
			generated = await shuffled.execute_many(val)
			result.rouge_l_random_order = corpus_rouge_l(
				[item.tokens for item in generated],
				[record.instruction_tokens() for record in val],
			)
		logger.info("experiments: variante evaluada", **result.to_dict())
		return result

	async def execute(self, *, corpus_path: str, out_dir: str) -> ExperimentReport:
		report = await self.run(self._store.load(corpus_path))
		write_json(str(Path(out_dir) / EXPERIMENTS_REPORT), report.to_dict())
		return report


@dataclass
class OverfitResult:
	epochs: int
	initial_perplexity: float
	final_perplexity: float
	threshold: float
	passed: bool

	def to_dict(self) -> Dict[str, object]:
		return {
			"epochs": self.epochs,
			"initial_perplexity": self.initial_perplexity,
			"final_perplexity": self.final_perplexity,
			"threshold": self.threshold,
			"passed": self.passed,
		}


class OverfitCheckUseCase:
	"""Comprobación de cordura: DGN debe memorizar un subconjunto pequeño del corpus.

	Se entrena sobre las primeras `n_recipes` recetas hasta que la perplejidad de
	entrenamiento baje de `threshold` o se agoten `max_epochs` épocas.
	"""

	def __init__(
		self,
		*,
		store: CorpusRepository,
		config: RunConfig,
		n_recipes: int = 16,
		max_epochs: int = 200,
		threshold: float = 1.3,
	) -> None:
		self._store = store
		self._config = config
		self._n_recipes = n_recipes
		self._max_epochs = max_epochs
		self._threshold = threshold

	def run(self, records: Sequence[RecipeRecord]) -> OverfitResult:
		subset = [with_phases(record) for record in records[: self._n_recipes]]
		if not subset:
			raise CorpusFormatError("overfit: corpus vacío")
		if not all(record.is_labeled for record in subset):
			raise UnlabeledCorpusError("overfit: el corpus no tiene pseudo etiquetas (ejecutar `label` antes)")
		model_config = self._config.model.model_copy(update={"model_kind": "dgn"})
		model = build_model(model_config, build_vocab(subset), seed=self._config.seed)
		trainer = Trainer(model, self._config.train, run_config=self._config)
		_, initial = trainer.evaluate(subset)
		current = initial
		epochs = 0
		while current >= self._threshold and epochs < self._max_epochs:
			trainer.train_epoch(subset)
			epochs += 1
			_, current = trainer.evaluate(subset)
			logger.debug("overfit: época", epoch=epochs, perplexity=current)
		result = OverfitResult(
			epochs=epochs,
			initial_perplexity=initial,
			final_perplexity=current,
			threshold=self._threshold,
			passed=current < self._threshold,
		)
		logger.info("overfit: resultado", **result.to_dict())
		return result

	def execute(self, *, corpus_path: str) -> OverfitResult:
		return self.run(self._store.load(corpus_path))


def _json_line(payload: Dict[str, object]) -> str:
	return json.dumps(payload, sort_keys=True) + "\n"
