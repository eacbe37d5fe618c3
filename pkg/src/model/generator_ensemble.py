"""Fusión de rasgos por fase, clasificador de posición y N sub-generadores.

Cada sub-generador es el tronco compartido (n_shared bloques) seguido de sus
n_indep bloques propios. La memoria r que consumen tiene siempre 5 filas:
[r_fusionado; imagen; ingredientes; F_pos; F_phase], con cualquier modo de fusión.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import List, Optional, Sequence

import numpy as np

from src.domain.exceptions import ShapeError, TargetIndexError
from src.nn.layers import Embedding, Linear, TransformerBlock
from src.nn.module import Module
from src.nn.tensor import IGNORE_INDEX, Tensor, concat, cross_entropy, matmul, no_grad, softmax

FUSION_MODES = ("cat", "attn")
N_POSITIONS = 3


@dataclass
class PositionFeature:
	one_hot: np.ndarray
	projected: Tensor


@dataclass
class PhaseAwareFeature:
	"""Memoria r para la atención cruzada; `fused` es la fila que lee el clasificador de posición."""
	mode: str
	memory: Tensor
	fused: Tensor
	image_weights: Optional[Tensor] = None
	ingredient_weights: Optional[Tensor] = None


def position_one_hot(index: int) -> np.ndarray:
	if not 0 <= index < N_POSITIONS:
		raise TargetIndexError(f"posición de fase {index} fuera de [0, {N_POSITIONS})")
	vec = np.zeros(N_POSITIONS)
	vec[index] = 1.0
	return vec


class Decoder(Module):
	"""Decodificador causal: embedding + posiciones + bloques + salida sobre el vocabulario.

	Se usa como línea base monolítica y como vista de un sub-generador.
	"""

	def __init__(
		self,
		*,
		token_embed: Embedding,
		pos_embed: Embedding,
		blocks: List[TransformerBlock],
		out: Linear,
	) -> None:
		self.token_embed = token_embed
		self.pos_embed = pos_embed
		self.blocks = blocks
		self.out = out

	def logits(self, tokens: Sequence[int], memory: Tensor) -> Tensor:
		ids = list(tokens)
		if len(ids) > self.pos_embed.table.shape[0]:
			raise ShapeError(f"decoder: {len(ids)} tokens superan las {self.pos_embed.table.shape[0]} posiciones")
		h = self.token_embed(ids) + self.pos_embed(list(range(len(ids))))
		for block in self.blocks:
			h = block(h, memory, causal=True)
		return self.out(h)

	def greedy(
		self,
		memory: Tensor,
		*,
		start_id: int,
		stop_ids: Sequence[int],
		max_tokens: int,
	) -> List[int]:
		"""Decodificación voraz desde [START] hasta un token de parada o max_tokens (sin incluirlo)."""
		tokens = [start_id]
		generated: List[int] = []
		with no_grad():
			while len(generated) < max_tokens:
				logits = self.logits(tokens, memory)
				choice = int(np.argmax(logits.data[-1]))
				if choice in stop_ids:
					break
				generated.append(choice)
				tokens.append(choice)
		return generated


class GeneratorEnsemble(Module):
	def __init__(
		self,
		*,
		n_generators: int,
		vocab_size: int,
		hidden: int,
		n_head: int,
		n_shared: int,
		n_indep: int,
		max_positions: int,
		fusion: str,
		rng: np.random.Generator,
		ffn_mult: int = 4,
		dropout_rate: float = 0.0,
	) -> None:
		if fusion not in FUSION_MODES:
			raise ValueError(f"modo de fusión desconocido: {fusion}")
		self.n_generators = n_generators
		self.fusion = fusion
		self.hidden = hidden
		self.token_embed = Embedding(vocab_size, hidden, rng)
		self.pos_embed = Embedding(max_positions, hidden, rng)
		self.position_proj = Linear(N_POSITIONS, hidden, rng)
		if fusion == "cat":
			self.fuse_proj = Linear(4 * hidden, hidden, rng)
		else:
			self.w_img = Linear(2 * hidden, hidden, rng, bias=False)
			self.w_ingr = Linear(2 * hidden, hidden, rng, bias=False)
			self.fuse_proj = Linear(2 * hidden, hidden, rng)
		self.position_classifier = Linear(hidden, N_POSITIONS, rng)
		self.position_classifier.weight.data[...] = 0.0
		self.shared = [
			TransformerBlock(hidden, n_head, rng, ffn_mult=ffn_mult, dropout_rate=dropout_rate)
			for _ in range(n_shared)
		]
		self.independent = [
			[
				TransformerBlock(hidden, n_head, rng, ffn_mult=ffn_mult, dropout_rate=dropout_rate)
				for _ in range(n_indep)
			]
			for _ in range(n_generators)
		]
		self.out = Linear(hidden, vocab_size, rng)

	def position_feature(self, index: int) -> PositionFeature:
		one_hot = position_one_hot(index)
		return PositionFeature(one_hot=one_hot, projected=self.position_proj(Tensor(one_hot[None, :])))

	def fuse(
		self,
		image_rows: Tensor,
		ingredient_rows: Tensor,
		f_pos: Tensor,
		f_phase: Tensor,
	) -> PhaseAwareFeature:
		if self.fusion == "cat":
			return self.fuse_cat(image_rows, ingredient_rows, f_pos, f_phase)
		return self.fuse_attn(image_rows, ingredient_rows, f_pos, f_phase)

	def fuse_cat(
		self,
		image_rows: Tensor,
		ingredient_rows: Tensor,
		f_pos: Tensor,
		f_phase: Tensor,
	) -> PhaseAwareFeature:
		"""r_cat = W·cat(F_img, F_ingr, F_pos, F_phase) sobre las versiones agrupadas."""
		self._check_constituents(image_rows, ingredient_rows, f_pos, f_phase)
		img = image_rows.mean(axis=0, keepdims=True)
		ingr = ingredient_rows.mean(axis=0, keepdims=True)
		fused = self.fuse_proj(concat([img, ingr, f_pos, f_phase], axis=-1))
		memory = concat([fused, img, ingr, f_pos, f_phase], axis=0)
		return PhaseAwareFeature(mode="cat", memory=memory, fused=fused)

	def fuse_attn(
		self,
		image_rows: Tensor,
		ingredient_rows: Tensor,
		f_pos: Tensor,
		f_phase: Tensor,
	) -> PhaseAwareFeature:
		"""F_x^attn = softmax_j(x_j · W(cat(F_pos, F_phase)))·x para imagen e ingredientes."""
		self._check_constituents(image_rows, ingredient_rows, f_pos, f_phase)
		query = concat([f_pos, f_phase], axis=-1)
		img_weights = softmax(matmul(self.w_img(query), image_rows.transpose()), axis=-1)
		ingr_weights = softmax(matmul(self.w_ingr(query), ingredient_rows.transpose()), axis=-1)
		img_attn = matmul(img_weights, image_rows)
		ingr_attn = matmul(ingr_weights, ingredient_rows)
		fused = self.fuse_proj(concat([img_attn, ingr_attn], axis=-1))
		memory = concat([fused, img_attn, ingr_attn, f_pos, f_phase], axis=0)
		return PhaseAwareFeature(
			mode="attn",
			memory=memory,
			fused=fused,
			image_weights=img_weights,
			ingredient_weights=ingr_weights,
		)

	def _check_constituents(self, *parts: Optional[Tensor]) -> None:
		for part in parts:
			if part is None:
				raise ShapeError("fusión: falta un constituyente de r")
			if part.ndim != 2 or part.shape[0] == 0 or part.shape[1] != self.hidden:
				raise ShapeError(f"fusión: constituyente {part.shape} no es [n×{self.hidden}] con n ≥ 1")

	def position_logits(self, feature: PhaseAwareFeature) -> Tensor:
		return self.position_classifier(feature.fused)

	def position_classify(self, feature: PhaseAwareFeature) -> Tensor:
		"""Probabilidades sobre las 3 posiciones de fase."""
		return softmax(self.position_logits(feature), axis=-1)

	def position_loss(self, feature: PhaseAwareFeature, index: int) -> Tensor:
		return cross_entropy(self.position_logits(feature), [index], reduction="sum")

	def generator(self, g_id: int) -> Decoder:
		"""Vista del sub-generador g_id (comparte parámetros con el ensemble)."""
		if not 0 <= g_id < self.n_generators:
			raise TargetIndexError(f"sub-generador {g_id} fuera de [0, {self.n_generators})")
		return Decoder(
			token_embed=self.token_embed,
			pos_embed=self.pos_embed,
			blocks=self.shared + self.independent[g_id],
			out=self.out,
		)

	def generator_forward(self, g_id: int, tokens: Sequence[int], memory: Tensor) -> Tensor:
		"""Logits por posición; p^token = softmax de cada fila."""
		return self.generator(g_id).logits(tokens, memory)

	def generation_loss(self, logits: Tensor, targets: Sequence[int], pad_id: int = 0) -> Tensor:
		"""L_gen de una fase: suma de entropías cruzadas sobre sus M tokens."""
		tgt = [IGNORE_INDEX if t == pad_id else int(t) for t in targets]
		return cross_entropy(logits, tgt, reduction="sum")

	def decode_phase(
		self,
		g_id: int,
		memory: Tensor,
		*,
		start_id: int,
		stop_ids: Sequence[int],
		max_tokens: int,
	) -> List[int]:
		"""Decodificación voraz del sub-generador g_id sobre la memoria r."""
		return self.generator(g_id).greedy(memory, start_id=start_id, stop_ids=stop_ids, max_tokens=max_tokens)
