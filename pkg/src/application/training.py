"""Objetivo combinado, calendario de learning rate y bucle de entrenamiento con teacher forcing."""

from __future__ import annotations

from dataclasses import dataclass
from typing import Dict, List, Optional, Sequence, Tuple

import numpy as np
import structlog

from src.application.metrics import perplexity_from_nll
from src.domain.entities import RecipeRecord, Vocabulary
from src.domain.exceptions import NumericalError, UnlabeledCorpusError
from src.infrastructure.checkpoint import CheckpointState, load_checkpoint
from src.infrastructure.config import RunConfig, TrainConfig
from src.infrastructure.optimizer import Adam, clip_grad_norm
from src.model.dgn import LossBundle, build_model
from src.nn.tensor import Tensor, no_grad

logger = structlog.get_logger()


def total_loss(bundle: LossBundle) -> Tensor:
	"""L = λ1·L_pre + λ2·L_gen + λ3·L_pos."""
	lambda_pre, lambda_gen, lambda_pos = bundle.weights
	return bundle.l_pre * lambda_pre + bundle.l_gen * lambda_gen + bundle.l_pos * lambda_pos


def learning_rate(config: TrainConfig, epoch: int) -> float:
	"""lr inicial × decay^epoch."""
	return config.lr * config.lr_decay ** epoch


def bucket_batches(
	records: Sequence[RecipeRecord],
	batch_size: int,
	rng: np.random.Generator,
) -> List[List[int]]:
	"""Índices agrupados por número de fases, barajados dentro de cada bucket y luego por batch."""
	buckets: Dict[int, List[int]] = {}
	for idx, record in enumerate(records):
		buckets.setdefault(len(record.phases), []).append(idx)
	batches: List[List[int]] = []
	for n_phases in sorted(buckets):
		members = [buckets[n_phases][i] for i in rng.permutation(len(buckets[n_phases]))]
		batches.extend(members[start:start + batch_size] for start in range(0, len(members), batch_size))
	return [batches[i] for i in rng.permutation(len(batches))]


def batch_losses(model, records: Sequence[RecipeRecord], weights: Tuple[float, float, float]) -> LossBundle:
	"""Media sobre recetas de las pérdidas sumadas por receta, en orden fijo."""
	bundles = [model.compute_losses(record) for record in records]
	count = float(len(bundles))
	l_pre, l_gen, l_pos = bundles[0].l_pre, bundles[0].l_gen, bundles[0].l_pos
	for bundle in bundles[1:]:
		l_pre = l_pre + bundle.l_pre
		l_gen = l_gen + bundle.l_gen
		l_pos = l_pos + bundle.l_pos
	return LossBundle(
		l_pre=l_pre / count,
		l_gen=l_gen / count,
		l_pos=l_pos / count,
		n_tokens=sum(bundle.n_tokens for bundle in bundles),
		weights=weights,
	)


@dataclass
class EpochMetrics:
	epoch: int
	train_loss: float
	val_loss: float
	val_ppl: float
	lr: float

	def to_dict(self) -> Dict[str, float]:
		return {
			"epoch": self.epoch,
			"train_loss": self.train_loss,
			"val_loss": self.val_loss,
			"val_ppl": self.val_ppl,
			"lr": self.lr,
		}


class Trainer:
	"""Un único escritor: forward con teacher forcing, backward, recorte y paso de Adam."""

	def __init__(self, model, config: TrainConfig, *, run_config: Optional[RunConfig] = None) -> None:
		self.model = model
		self.config = config
		self.run_config = run_config
		self.epoch = 0
		self.shuffle_rng = np.random.default_rng(config.seed)
		self.optimizer = Adam(
			model.trainable_parameters(),
			lr=config.lr,
			beta1=config.beta1,
			beta2=config.beta2,
			eps=config.adam_eps,
		)

	def step(self, records: Sequence[RecipeRecord], lr: float) -> float:
		self.model.train()
		self.optimizer.zero_grad()
		loss = total_loss(batch_losses(self.model, records, self.config.lambdas))
		value = float(loss.data)
		if not np.isfinite(value):
			logger.error("trainer: pérdida no finita", epoch=self.epoch, loss=value)
			raise NumericalError(f"pérdida no finita en la época {self.epoch}")
		loss.backward()
		clip_grad_norm(self.optimizer.params, self.config.clip_norm)
		self.optimizer.lr = lr
		self.optimizer.step()
		return value

	def train_epoch(self, records: Sequence[RecipeRecord]) -> Tuple[float, float]:
		"""Una época completa; devuelve (pérdida media por receta, lr usado)."""
		if self.model.config.model_kind == "dgn" and not all(record.is_labeled for record in records):
			raise UnlabeledCorpusError("train: el corpus no tiene pseudo etiquetas (ejecutar `label` antes)")
		lr = learning_rate(self.config, self.epoch)
		total = 0.0
		for batch_ids in bucket_batches(records, self.config.batch_size, self.shuffle_rng):
			batch = [records[idx] for idx in batch_ids]
			total += self.step(batch, lr) * len(batch)
		self.epoch += 1
		return total / max(len(records), 1), lr

	def evaluate(self, records: Sequence[RecipeRecord]) -> Tuple[float, float]:
		"""(pérdida total media por receta, perplejidad por token) con teacher forcing."""
		self.model.eval()
		loss_sum = 0.0
		nll_sum = 0.0
		n_tokens = 0
		with no_grad():
			for record in records:
				bundle = self.model.compute_losses(record).with_weights(self.config.lambdas)
				loss_sum += float(total_loss(bundle).data)
				nll_sum += bundle.scored_nll
				n_tokens += bundle.scored_tokens
		self.model.train()
		return loss_sum / max(len(records), 1), perplexity_from_nll(nll_sum, n_tokens)

	def fit_epoch(self, train: Sequence[RecipeRecord], val: Sequence[RecipeRecord]) -> EpochMetrics:
		train_loss, lr = self.train_epoch(train)
		val_loss, val_ppl = self.evaluate(val or train)
		metrics = EpochMetrics(epoch=self.epoch, train_loss=train_loss, val_loss=val_loss, val_ppl=val_ppl, lr=lr)
		logger.info("trainer: época completada", **metrics.to_dict())
		return metrics

	def checkpoint_state(self, *, metadata: Optional[Dict[str, object]] = None) -> CheckpointState:
		return CheckpointState(
			config=self.run_config.model_dump() if self.run_config else {"model": self.model.config.model_dump()},
			vocab=list(self.model.vocab.tokens),
			epoch=self.epoch,
			parameters=self.model.state_dict(),
			optimizer=self.optimizer.state_dict(),
			rng_state={
				"model": self.model.rng.bit_generator.state,
				"shuffle": self.shuffle_rng.bit_generator.state,
			},
			metadata=metadata or {},
		)

	def restore(self, state: CheckpointState) -> None:
		self.model.load_state_dict(state.parameters)
		if state.optimizer is not None:
			self.optimizer.load_state_dict(state.optimizer)
		if "model" in state.rng_state:
			self.model.rng.bit_generator.state = state.rng_state["model"]
		if "shuffle" in state.rng_state:
			self.shuffle_rng.bit_generator.state = state.rng_state["shuffle"]
		self.epoch = state.epoch


def model_from_checkpoint(path: str):
	"""Reconstruye (modelo, RunConfig) desde un checkpoint `.dgnc`."""
	state = load_checkpoint(path)
	run_config = RunConfig.model_validate(state.config)
	model = build_model(run_config.model, Vocabulary(list(state.vocab)), seed=run_config.seed)
	model.load_state_dict(state.parameters)
	model.eval()
	return model, run_config
