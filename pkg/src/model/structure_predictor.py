"""Predicción global de estructura: transformer autoregresivo sobre etiquetas de fase.

Ids de etiqueta: 0..N-1 sub-generadores, N = [END], N+1 = [START], N+2 = [PAD].
La salida clasifica sobre N+1 clases (N etiquetas + [END]).
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import List, Sequence

import numpy as np

from src.domain.exceptions import TargetIndexError
from src.nn.layers import Embedding, Linear, TransformerBlock
from src.nn.module import Module
from src.nn.tensor import IGNORE_INDEX, Tensor, cross_entropy, softmax


@dataclass
class StructurePrediction:
	"""Secuencia de etiquetas, vectores de fase F_phase [S×H] y p^gen por fila."""
	labels: List[int]
	phase_vectors: Tensor
	logits: Tensor
	probabilities: Tensor


class StructurePredictor(Module):
	def __init__(
		self,
		*,
		n_generators: int,
		hidden: int,
		n_head: int,
		n_layer: int,
		max_phases: int,
		rng: np.random.Generator,
		ffn_mult: int = 4,
		dropout_rate: float = 0.0,
	) -> None:
		self.n_generators = n_generators
		self.max_phases = max_phases
		self.end_id = n_generators
		self.start_id = n_generators + 1
		self.pad_id = n_generators + 2
		self.label_embed = Embedding(n_generators + 3, hidden, rng)
		self.pos_embed = Embedding(max_phases + 1, hidden, rng)
		self.blocks = [
			TransformerBlock(hidden, n_head, rng, ffn_mult=ffn_mult, dropout_rate=dropout_rate)
			for _ in range(n_layer)
		]
		self.out = Linear(hidden, n_generators + 1, rng)

	def forward_teacher_forced(self, f_kv: Tensor, gold: Sequence[int]) -> StructurePrediction:
		"""Forward causal sobre [START], g_1..g_k condicionado a F_kv.

		La fila i de phase_vectors es H_cond^attn del último bloque en la posición
		que predice g_{i+1}; hay una fila por etiqueta de entrada.
		"""
		labels = list(gold)
		if not labels or labels[0] != self.start_id:
			raise TargetIndexError("forward_teacher_forced: la secuencia debe empezar con [START]")
		if len(labels) > self.max_phases + 1:
			raise TargetIndexError(
				f"forward_teacher_forced: {len(labels)} etiquetas superan max_phases+1={self.max_phases + 1}"
			)
		if min(labels) < 0 or max(labels) > self.pad_id:
			raise TargetIndexError(f"forward_teacher_forced: etiqueta fuera de rango [0, {self.pad_id}]")
		z = self.label_embed(labels) + self.pos_embed(list(range(len(labels))))
		h_cond = z
		for block in self.blocks:
			z, h_cond = block.forward_with_cond(z, f_kv, causal=True)
		logits = self.out(h_cond)
		probabilities = softmax(logits, axis=-1)
		return StructurePrediction(
			labels=[int(i) for i in np.argmax(logits.data, axis=-1)],
			phase_vectors=h_cond,
			logits=logits,
			probabilities=probabilities,
		)

	def targets_for(self, phase_labels: Sequence[int]) -> List[int]:
		"""Objetivos desplazados: g_1..g_S, [END]."""
		return [int(label) for label in phase_labels] + [self.end_id]

	def structure_loss(self, prediction: StructurePrediction, targets: Sequence[int]) -> Tensor:
		"""L_pre: suma de entropías cruzadas por fila; [PAD] se ignora."""
		tgt = [IGNORE_INDEX if t == self.pad_id else int(t) for t in targets]
		return cross_entropy(prediction.logits, tgt, reduction="sum")

	def decode_structure(self, f_kv: Tensor) -> StructurePrediction:
		"""Decodificación voraz hasta [END] o max_phases; siempre devuelve ≥ 1 etiqueta."""
		labels: List[int] = []
		prediction = self.forward_teacher_forced(f_kv, [self.start_id])
		while True:
			row = prediction.logits.data[len(labels)]
			choice = int(np.argmax(row))
			if choice == self.end_id:
				if not labels:
					# [END] inmediato: se emite la siguiente mejor etiqueta una vez y se para.
					labels.append(int(np.argmax(row[: self.end_id])))
				break
			labels.append(choice)
			if len(labels) >= self.max_phases:
				break
			prediction = self.forward_teacher_forced(f_kv, [self.start_id] + labels)
		steps = len(labels)
		return StructurePrediction(
			labels=labels,
			phase_vectors=prediction.phase_vectors[:steps],
			logits=prediction.logits[:steps],
			probabilities=prediction.probabilities[:steps],
		)
