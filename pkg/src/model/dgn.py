"""Modelos completos: DGN (estructura + sub-generadores) y la línea base de un solo decodificador."""

from __future__ import annotations

import dataclasses
from dataclasses import dataclass
from typing import List, Optional, Sequence, Tuple

import numpy as np
import structlog

from src.domain.entities import GeneratedRecipe, RecipeRecord, Vocabulary
from src.domain.exceptions import TargetIndexError, UnlabeledCorpusError
from src.infrastructure.config import ModelConfig
from src.model.encoders import ImageEncoder, IngredientEncoder, build_condition
from src.model.generator_ensemble import Decoder, GeneratorEnsemble, PhaseAwareFeature
from src.model.structure_predictor import StructurePrediction, StructurePredictor
from src.nn.layers import Embedding, Linear, TransformerBlock
from src.nn.module import Module
from src.nn.tensor import Tensor, cross_entropy, no_grad, set_default_dtype, zeros

logger = structlog.get_logger()


DEFAULT_LAMBDAS = (1.0, 1.0, 0.1)
SENTENCE_END = "."


@dataclass
class LossBundle:
	"""Componentes L_pre, L_gen, L_pos de un ejemplo o batch, sus pesos λ1..λ3 y el nº de tokens generados.

	`boundary_nll`/`n_boundaries` son la NLL y la cantidad de los [EOPHASE] intermedios:
	la perplejidad los descuenta para puntuar un solo terminador por receta, igual que la línea base.
	"""
	l_pre: Tensor
	l_gen: Tensor
	l_pos: Tensor
	n_tokens: int = 0
	weights: Tuple[float, float, float] = DEFAULT_LAMBDAS
	boundary_nll: float = 0.0
	n_boundaries: int = 0

	def with_weights(self, weights: Tuple[float, float, float]) -> "LossBundle":
		return dataclasses.replace(self, weights=tuple(weights))

	@property
	def scored_nll(self) -> float:
		return float(self.l_gen.data) - self.boundary_nll

	@property
	def scored_tokens(self) -> int:
		return self.n_tokens - self.n_boundaries


class _EncodedInputs(Module):
	"""Codificadores compartidos por ambos modelos, con la ablación de entradas."""

	def _build_encoders(self, config: ModelConfig, vocab: Vocabulary, rng: np.random.Generator) -> None:
		self.image_encoder = ImageEncoder(
			raw_dim=config.image_raw_dim,
			hidden=config.hidden,
			rng=rng,
			conv_channels=config.conv_channels,
			regions=config.image_regions,
		)
		self.ingredient_encoder = IngredientEncoder(
			vocab_size=len(vocab),
			hidden=config.hidden,
			rng=rng,
			max_tokens=config.max_ingr_tokens,
			unk_id=vocab.unk_id,
		)
		if config.freeze_image_encoder:
			self.image_encoder.freeze()

	def encode(self, record: RecipeRecord) -> Tuple[Tensor, Tensor]:
		"""Filas de imagen y de ingredientes; la entrada ablada se sustituye por una fila cero."""
		hidden = self.config.hidden
		if self.config.inputs == "ingredients":
			image_rows = zeros(1, hidden)
		else:
			image_rows = self.image_encoder(image_feat=record.image_feat, image_grid=record.image_grid).rows
		if self.config.inputs == "image":
			ingredient_rows = zeros(1, hidden)
		else:
			ingredient_rows = self.ingredient_encoder(self.vocab.encode(record.ingredients)).rows
		return image_rows, ingredient_rows


class DGNModel(_EncodedInputs):
	"""Predicción global de estructura + N sub-generadores sobre rasgos por fase."""

	def __init__(self, config: ModelConfig, vocab: Vocabulary, *, seed: int = 0) -> None:
		self.config = config
		self.vocab = vocab
		self.rng = np.random.default_rng(seed)
		self._build_encoders(config, vocab, self.rng)
		self.structure = StructurePredictor(
			n_generators=config.n_generators,
			hidden=config.hidden,
			n_head=config.n_head,
			n_layer=config.n_layer,
			max_phases=config.max_phases,
			rng=self.rng,
			ffn_mult=config.ffn_mult,
			dropout_rate=config.dropout,
		)
		self.ensemble = GeneratorEnsemble(
			n_generators=config.n_generators,
			vocab_size=len(vocab),
			hidden=config.hidden,
			n_head=config.n_head,
			n_shared=config.n_shared,
			n_indep=config.n_indep,
			max_positions=config.max_positions,
			fusion=config.fusion,
			rng=self.rng,
			ffn_mult=config.ffn_mult,
			dropout_rate=config.dropout,
		)

	def phase_targets(self, record: RecipeRecord, index: int) -> Tuple[List[int], List[int]]:
		"""Entrada [START] t_1..t_M y objetivos t_1..t_M [EOPHASE] de una fase."""
		ids = self.vocab.encode(record.phase_tokens(index))[: self.config.max_phase_tokens]
		return [self.vocab.start_id] + ids, ids + [self.vocab.eophase_id]

	def compute_losses(self, record: RecipeRecord) -> LossBundle:
		"""Forward con teacher forcing: cada fase se enruta al sub-generador de su pseudo etiqueta."""
		if not record.is_labeled:
			raise UnlabeledCorpusError(f"la receta {record.id} no tiene pseudo etiquetas")
		labels = list(record.pseudo_labels[: self.config.max_phases])
		if min(labels) < 0 or max(labels) >= self.config.n_generators:
			raise TargetIndexError(
				f"la receta {record.id} tiene etiquetas {labels} fuera de [0, {self.config.n_generators})"
			)
		image_rows, ingredient_rows = self.encode(record)
		f_kv = build_condition(image_rows, ingredient_rows, self.config.hidden)
		prediction = self.structure.forward_teacher_forced(f_kv, [self.structure.start_id] + labels)
		l_pre = self.structure.structure_loss(prediction, self.structure.targets_for(labels))
		gen_terms: List[Tensor] = []
		pos_terms: List[Tensor] = []
		n_tokens = 0
		boundary_nll = 0.0
		for index, g_id in enumerate(labels):
			feature = self._phase_feature(image_rows, ingredient_rows, prediction, slot=index, position=index)
			inputs, targets = self.phase_targets(record, index)
			logits = self.ensemble.generator_forward(g_id, inputs, feature.memory)
			gen_terms.append(self.ensemble.generation_loss(logits, targets, pad_id=self.vocab.pad_id))
			pos_terms.append(self.ensemble.position_loss(feature, index))
			n_tokens += len(targets)
			if index < len(labels) - 1:
				boundary_nll += _row_nll(logits.data[-1], targets[-1])
		return LossBundle(
			l_pre=l_pre,
			l_gen=_sum(gen_terms),
			l_pos=_sum(pos_terms),
			n_tokens=n_tokens,
			boundary_nll=boundary_nll,
			n_boundaries=len(labels) - 1,
		)

	def _phase_feature(
		self,
		image_rows: Tensor,
		ingredient_rows: Tensor,
		prediction: StructurePrediction,
		*,
		slot: int,
		position: int,
	) -> PhaseAwareFeature:
		f_pos = self.ensemble.position_feature(position).projected
		f_phase = prediction.phase_vectors[slot:slot + 1]
		return self.ensemble.fuse(image_rows, ingredient_rows, f_pos, f_phase)

	def token_nll(self, record: RecipeRecord) -> Tuple[float, int]:
		"""NLL y nº de tokens puntuados: contenido de las fases más un único terminador final."""
		with no_grad():
			bundle = self.compute_losses(record)
		return bundle.scored_nll, bundle.scored_tokens

	def predict_structure(self, record: RecipeRecord) -> List[int]:
		"""Solo la primera etapa de inferencia: secuencia voraz de sub-generadores."""
		with no_grad():
			image_rows, ingredient_rows = self.encode(record)
			f_kv = build_condition(image_rows, ingredient_rows, self.config.hidden)
			return self.structure.decode_structure(f_kv).labels

	def generate(
		self,
		record: RecipeRecord,
		*,
		order: str = "predicted",
		rng: Optional[np.random.Generator] = None,
	) -> GeneratedRecipe:
		"""Inferencia en dos etapas: estructura voraz y luego cada fase con su sub-generador."""
		with no_grad():
			image_rows, ingredient_rows = self.encode(record)
			f_kv = build_condition(image_rows, ingredient_rows, self.config.hidden)
			prediction = self.structure.decode_structure(f_kv)
			slots = list(range(len(prediction.labels)))
			if order == "random":
				slots = list((rng or np.random.default_rng(0)).permutation(slots))
			elif order != "predicted":
				raise ValueError(f"orden desconocido: {order}")
			structure = [prediction.labels[slot] for slot in slots]
			phases: List[List[str]] = []
			for position, slot in enumerate(slots):
				feature = self._phase_feature(image_rows, ingredient_rows, prediction, slot=slot, position=position)
				ids = self.ensemble.decode_phase(
					prediction.labels[slot],
					feature.memory,
					start_id=self.vocab.start_id,
					stop_ids=(self.vocab.eophase_id, self.vocab.end_id),
					max_tokens=self.config.max_phase_tokens,
				)
				phases.append(self.vocab.decode(ids))
		tokens = join_phases(phases, self.config.max_recipe_tokens)
		return GeneratedRecipe(id=record.id, structure=structure, phases=phases, tokens=tokens)


class BaselineModel(_EncodedInputs):
	"""Un solo decodificador que genera la instrucción completa condicionado a F_kv."""

	def __init__(self, config: ModelConfig, vocab: Vocabulary, *, seed: int = 0) -> None:
		self.config = config
		self.vocab = vocab
		self.rng = np.random.default_rng(seed)
		self._build_encoders(config, vocab, self.rng)
		self.decoder = Decoder(
			token_embed=Embedding(len(vocab), config.hidden, self.rng),
			pos_embed=Embedding(config.max_positions, config.hidden, self.rng),
			blocks=[
				TransformerBlock(
					config.hidden,
					config.n_head,
					self.rng,
					ffn_mult=config.ffn_mult,
					dropout_rate=config.dropout,
				)
				for _ in range(config.n_shared + config.n_indep)
			],
			out=Linear(config.hidden, len(vocab), self.rng),
		)

	def compute_losses(self, record: RecipeRecord) -> LossBundle:
		ids = self.vocab.encode(record.instruction_tokens())[: self.config.max_recipe_tokens]
		inputs = [self.vocab.start_id] + ids
		targets = ids + [self.vocab.end_id]
		image_rows, ingredient_rows = self.encode(record)
		f_kv = build_condition(image_rows, ingredient_rows, self.config.hidden)
		logits = self.decoder.logits(inputs, f_kv)
		l_gen = cross_entropy(logits, targets, reduction="sum")
		return LossBundle(l_pre=zeros(), l_gen=l_gen, l_pos=zeros(), n_tokens=len(targets))

	def token_nll(self, record: RecipeRecord) -> Tuple[float, int]:
		with no_grad():
			bundle = self.compute_losses(record)
		return bundle.scored_nll, bundle.scored_tokens

	def generate(
		self,
		record: RecipeRecord,
		*,
		order: str = "predicted",
		rng: Optional[np.random.Generator] = None,
	) -> GeneratedRecipe:
		with no_grad():
			image_rows, ingredient_rows = self.encode(record)
			f_kv = build_condition(image_rows, ingredient_rows, self.config.hidden)
			ids = self.decoder.greedy(
				f_kv,
				start_id=self.vocab.start_id,
				stop_ids=(self.vocab.end_id,),
				max_tokens=self.config.max_recipe_tokens,
			)
		tokens = self.vocab.decode(ids)
		return GeneratedRecipe(id=record.id, structure=[0], phases=[tokens], tokens=tokens)


def build_model(config: ModelConfig, vocab: Vocabulary, *, seed: int = 0):
	"""Construye el modelo indicado por `config.model_kind` con la precisión configurada."""
	set_default_dtype(np.float32 if config.precision == "float32" else np.float64)
	model_cls = DGNModel if config.model_kind == "dgn" else BaselineModel
	model = model_cls(config, vocab, seed=seed)
	logger.info(
		"model: construido",
		kind=config.model_kind,
		fusion=config.fusion,
		n_generators=config.n_generators,
		parameters=model.num_parameters(),
	)
	return model


def _sum(terms: List[Tensor]) -> Tensor:
	if not terms:
		return zeros()
	total = terms[0]
	for term in terms[1:]:
		total = total + term
	return total


def _row_nll(row: np.ndarray, target: int) -> float:
	shift = float(row.max())
	return shift + float(np.log(np.exp(row - shift).sum())) - float(row[target])


def join_phases(phases: Sequence[Sequence[str]], max_tokens: int) -> List[str]:
	"""Concatena las fases no vacías; entre dos fases va un "." si la anterior no termina en punto."""
	tokens: List[str] = []
	for phase in phases:
		if not phase:
			continue
		if tokens and tokens[-1] != SENTENCE_END:
			tokens.append(SENTENCE_END)
		tokens.extend(phase)
	return tokens[:max_tokens]
