"""Bloques transformer reutilizables: atención, multi-cabeza y bloque condicional.

El bloque tiene tres subcapas (auto-atención, atención cruzada sobre la
condición y feed-forward), cada una con residual y layer norm posterior.
"""

from __future__ import annotations

from typing import List, Optional, Tuple

import numpy as np

from src.domain.exceptions import ShapeError
from src.nn.module import Module, Parameter
from src.nn.tensor import (
	Tensor,
	causal_mask,
	concat,
	dropout,
	embedding,
	gelu,
	im2col,
	layer_norm,
	linear,
	masked_fill_additive,
	matmul,
	softmax,
)


def _init_matrix(rng: np.random.Generator, fan_in: int, fan_out: int) -> np.ndarray:
	return rng.normal(0.0, 1.0 / np.sqrt(fan_in), size=(fan_in, fan_out))


class Linear(Module):
	"""Mapa afín x·W + b con W de forma [in × out]."""

	def __init__(self, in_dim: int, out_dim: int, rng: np.random.Generator, *, bias: bool = True) -> None:
		self.weight = Parameter(_init_matrix(rng, in_dim, out_dim))
		self.bias = Parameter(np.zeros(out_dim)) if bias else None

	def __call__(self, x: Tensor) -> Tensor:
		if x.shape[-1] != self.weight.shape[0]:
			raise ShapeError(f"Linear: entrada {x.shape} incompatible con pesos {self.weight.shape}")
		return linear(x, self.weight, self.bias)


class Embedding(Module):
	def __init__(self, num_embeddings: int, dim: int, rng: np.random.Generator) -> None:
		self.table = Parameter(rng.normal(0.0, 1.0 / np.sqrt(dim), size=(num_embeddings, dim)))

	def __call__(self, indices) -> Tensor:
		return embedding(self.table, indices)


class LayerNorm(Module):
	def __init__(self, dim: int, eps: float = 1e-5) -> None:
		self.gain = Parameter(np.ones(dim))
		self.bias = Parameter(np.zeros(dim))
		self.eps = eps

	def __call__(self, x: Tensor) -> Tensor:
		return layer_norm(x, self.gain, self.bias, self.eps)


class FeedForward(Module):
	"""Dos mapas lineales H → mult·H → H con GELU en medio."""

	def __init__(self, dim: int, rng: np.random.Generator, *, mult: int = 4) -> None:
		self.inner = Linear(dim, mult * dim, rng)
		self.outer = Linear(mult * dim, dim, rng)

	def __call__(self, x: Tensor) -> Tensor:
		return self.outer(gelu(self.inner(x)))


def attention(
	q: Tensor,
	k: Tensor,
	v: Tensor,
	mask: Optional[np.ndarray] = None,
) -> Tuple[Tensor, Tensor]:
	"""softmax(QKᵀ/√d_k + mask)·V. Devuelve (salida, pesos)."""
	if q.shape[-1] != k.shape[-1]:
		raise ShapeError(f"attention: d_k de Q {q.shape} distinto de K {k.shape}")
	if k.shape[-2] != v.shape[-2]:
		raise ShapeError(f"attention: K {k.shape} y V {v.shape} con distinta longitud")
	scores = matmul(q, k.transpose()) * (1.0 / float(np.sqrt(q.shape[-1])))
	weights = softmax(masked_fill_additive(scores, mask), axis=-1)
	return matmul(weights, v), weights


class MultiHeadAttention(Module):
	"""Atención multi-cabeza.

	W^Q, W^K y W^V guardan las proyecciones de todas las cabezas en bloques de
	columnas: las columnas [i·d_k, (i+1)·d_k) son W^Q_i. W^O es [n_head·d_v × H].
	"""

	def __init__(self, dim: int, n_head: int, rng: np.random.Generator) -> None:
		if dim % n_head != 0:
			raise ShapeError(f"H={dim} no es divisible entre n_head={n_head}")
		self.n_head = n_head
		self.d_k = dim // n_head
		self.w_q = Parameter(_init_matrix(rng, dim, dim))
		self.w_k = Parameter(_init_matrix(rng, dim, dim))
		self.w_v = Parameter(_init_matrix(rng, dim, dim))
		self.w_o = Parameter(_init_matrix(rng, dim, dim))

	def __call__(self, x_q: Tensor, x_kv: Tensor, mask: Optional[np.ndarray] = None) -> Tensor:
		return self.forward_with_weights(x_q, x_kv, mask)[0]

	def forward_with_weights(
		self,
		x_q: Tensor,
		x_kv: Tensor,
		mask: Optional[np.ndarray] = None,
	) -> Tuple[Tensor, List[Tensor]]:
		dim = self.w_q.shape[0]
		if x_q.shape[-1] != dim or x_kv.shape[-1] != dim:
			raise ShapeError(f"multi_head: se esperaba H={dim}, recibido {x_q.shape} y {x_kv.shape}")
		q = matmul(x_q, self.w_q)
		k = matmul(x_kv, self.w_k)
		v = matmul(x_kv, self.w_v)
		heads: List[Tensor] = []
		weights: List[Tensor] = []
		for head in range(self.n_head):
			cols = (slice(None), slice(head * self.d_k, (head + 1) * self.d_k))
			out, w = attention(q[cols], k[cols], v[cols], mask)
			heads.append(out)
			weights.append(w)
		merged = heads[0] if self.n_head == 1 else concat(heads, axis=-1)
		return matmul(merged, self.w_o), weights


class TransformerBlock(Module):
	"""Bloque condicional: auto-atención → atención cruzada → feed-forward."""

	def __init__(
		self,
		dim: int,
		n_head: int,
		rng: np.random.Generator,
		*,
		ffn_mult: int = 4,
		dropout_rate: float = 0.0,
	) -> None:
		self.self_attn = MultiHeadAttention(dim, n_head, rng)
		self.cross_attn = MultiHeadAttention(dim, n_head, rng)
		self.ffn = FeedForward(dim, rng, mult=ffn_mult)
		self.norm_self = LayerNorm(dim)
		self.norm_cross = LayerNorm(dim)
		self.norm_ffn = LayerNorm(dim)
		self.dropout_rate = dropout_rate
		self.rng = rng

	def __call__(self, z: Tensor, cond: Tensor, *, causal: bool = True) -> Tensor:
		return self.forward_with_cond(z, cond, causal=causal)[0]

	def forward_with_cond(self, z: Tensor, cond: Tensor, *, causal: bool = True) -> Tuple[Tensor, Tensor]:
		"""Devuelve (salida del bloque, H_cond^attn normalizado)."""
		if cond.shape[0] == 0:
			raise ShapeError("block_forward: la condición no puede estar vacía")
		mask = causal_mask(z.shape[0]) if causal else None
		h_self = self.norm_self(z + self._drop(self.self_attn(z, z, mask)))
		h_cond = self.norm_cross(h_self + self._drop(self.cross_attn(h_self, cond)))
		out = self.norm_ffn(h_cond + self._drop(self.ffn(h_cond)))
		return out, h_cond

	def _drop(self, x: Tensor) -> Tensor:
		return dropout(x, self.dropout_rate, self.rng, self.training)


class Conv2d(Module):
	"""Convolución k×k con padding 'same' sobre mapas [C_in, H, W]."""

	def __init__(self, in_channels: int, out_channels: int, rng: np.random.Generator, *, kernel: int = 3) -> None:
		self.kernel = kernel
		self.weight = Parameter(_init_matrix(rng, in_channels * kernel * kernel, out_channels))
		self.bias = Parameter(np.zeros(out_channels))

	def __call__(self, x: Tensor) -> Tensor:
		_, height, width = x.shape
		cols = im2col(x, self.kernel)
		out = linear(cols, self.weight, self.bias)
		return out.transpose().reshape(self.weight.shape[1], height, width)
