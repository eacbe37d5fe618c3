"""Codificadores de imagen e ingredientes (F_img, F_ingr) entrenables a escala de escritorio."""

from __future__ import annotations

from dataclasses import dataclass
from typing import Optional, Sequence

import numpy as np
import structlog

from src.domain.exceptions import ShapeError
from src.nn.layers import Conv2d, Embedding, Linear
from src.nn.module import Module
from src.nn.tensor import Tensor, concat, gelu

logger = structlog.get_logger()


@dataclass
class ImageFeature:
	"""Filas de región [seq_img × H] y su media."""
	rows: Tensor
	pooled: Tensor


@dataclass
class IngredientFeature:
	"""Vectores por token [seq_ingr × H] y su media (invariante a permutaciones)."""
	rows: Tensor
	pooled: Tensor


class ImageEncoder(Module):
	"""Vector crudo → un mapa lineal a H; rejilla → 2 convoluciones + pooling por regiones + lineal a H."""

	def __init__(
		self,
		*,
		raw_dim: int,
		hidden: int,
		rng: np.random.Generator,
		conv_channels: int = 8,
		regions: int = 2,
	) -> None:
		self.raw_dim = raw_dim
		self.regions = regions
		self.raw_proj = Linear(raw_dim, hidden, rng)
		self.conv1 = Conv2d(1, conv_channels, rng)
		self.conv2 = Conv2d(conv_channels, conv_channels, rng)
		self.grid_proj = Linear(conv_channels, hidden, rng)

	def __call__(
		self,
		*,
		image_feat: Optional[Sequence[float]] = None,
		image_grid: Optional[Sequence[Sequence[float]]] = None,
	) -> ImageFeature:
		if (image_feat is None) == (image_grid is None):
			raise ShapeError("encode_image: se necesita exactamente uno de image_feat o image_grid")
		if image_feat is not None:
			vector = np.asarray(image_feat, dtype=float)
			if vector.ndim != 1 or vector.shape[0] != self.raw_dim:
				raise ShapeError(f"encode_image: se esperaba un vector de {self.raw_dim}, recibido {vector.shape}")
			rows = self.raw_proj(Tensor(vector[None, :]))
			return ImageFeature(rows=rows, pooled=rows.mean(axis=0, keepdims=True))
		return self._encode_grid(np.asarray(image_grid, dtype=float))

	def _encode_grid(self, grid: np.ndarray) -> ImageFeature:
		if grid.ndim != 2 or grid.shape[0] % self.regions or grid.shape[1] % self.regions:
			raise ShapeError(
				f"encode_image: rejilla {grid.shape} no divisible en {self.regions}x{self.regions} regiones"
			)
		fmap = gelu(self.conv2(gelu(self.conv1(Tensor(grid[None, :, :])))))
		channels, height, width = fmap.shape
		rh, rw = height // self.regions, width // self.regions
		# Pooling medio por región: [C, R, rh, R, rw] → [R·R, C]
		blocks = fmap.reshape(channels, self.regions, rh, self.regions, rw).transpose(1, 3, 0, 2, 4)
		pooled_regions = blocks.reshape(self.regions * self.regions, channels, rh * rw).mean(axis=-1)
		rows = self.grid_proj(pooled_regions)
		return ImageFeature(rows=rows, pooled=rows.mean(axis=0, keepdims=True))


class IngredientEncoder(Module):
	"""Capa de embedding + proyección a H; la media da el vector global."""

	def __init__(
		self,
		*,
		vocab_size: int,
		hidden: int,
		rng: np.random.Generator,
		max_tokens: int = 30,
		unk_id: int = 4,
	) -> None:
		self.max_tokens = max_tokens
		self.unk_id = unk_id
		self.embed = Embedding(vocab_size, hidden, rng)
		self.proj = Linear(hidden, hidden, rng)

	def __call__(self, token_ids: Sequence[int]) -> IngredientFeature:
		ids = list(token_ids)
		if len(ids) > self.max_tokens:
			logger.warning("ingredient_encoder: ingredientes truncados", received=len(ids), max_tokens=self.max_tokens)
			ids = ids[: self.max_tokens]
		if not ids:
			ids = [self.unk_id]
		rows = self.proj(self.embed(ids))
		return IngredientFeature(rows=rows, pooled=rows.mean(axis=0, keepdims=True))


def build_condition(image_rows: Tensor, ingredient_rows: Tensor, hidden: int) -> Tensor:
	"""F_kv: filas de imagen seguidas de filas de ingredientes."""
	for name, rows in (("imagen", image_rows), ("ingredientes", ingredient_rows)):
		if rows.ndim != 2 or rows.shape[1] != hidden:
			raise ShapeError(f"build_condition: filas de {name} {rows.shape} no tienen dimensión H={hidden}")
	return concat([image_rows, ingredient_rows], axis=0)
