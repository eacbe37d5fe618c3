"""Protocols abstractos para almacenes de corpus y modelos de recetas."""

from __future__ import annotations

from typing import Any, Iterable, List, Optional, Protocol, Tuple

from src.domain.entities import GeneratedRecipe, RecipeRecord


class CorpusRepository(Protocol):
	"""Contrato de lectura/escritura de corpus y de sus productos derivados."""
	def load(self, path: str) -> List[RecipeRecord]: ...

	def save(self, path: str, records: Iterable[RecipeRecord]) -> None: ...

	def save_labels(self, path: str, records: Iterable[RecipeRecord]) -> None: ...

	def save_generations(self, path: str, generated: Iterable[GeneratedRecipe]) -> None: ...


class RecipeModel(Protocol):
	"""Interfaz común del DGN y de la línea base de un solo decodificador."""
	def compute_losses(self, record: RecipeRecord) -> Any: ...

	def token_nll(self, record: RecipeRecord) -> Tuple[float, int]: ...

	def generate(self, record: RecipeRecord, *, order: str = "predicted", rng: Optional[Any] = None) -> GeneratedRecipe: ...
