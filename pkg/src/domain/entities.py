"""Entidades centrales del dominio de generación de recetas por fases.

Los registros del corpus son inmutables (dataclasses congeladas con tuplas):
las etapas del pipeline devuelven copias con `dataclasses.replace`.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Dict, Iterable, List, Optional, Tuple

import numpy as np

PAD, START, END, EOPHASE, UNK = "[PAD]", "[START]", "[END]", "[EOPHASE]", "[UNK]"
RESERVED_TOKENS: Tuple[str, ...] = (PAD, START, END, EOPHASE, UNK)

Tokens = Tuple[str, ...]


@dataclass(frozen=True)
class PhaseSpan:
	"""Rango [start, end) de pasos que forman una fase."""
	start: int
	end: int

	@property
	def size(self) -> int:
		return self.end - self.start


@dataclass(frozen=True)
class RecipeRecord:
	"""Un ejemplo: imagen (vector o rejilla), ingredientes, pasos tokenizados y fases."""
	id: str
	ingredients: Tokens
	steps: Tuple[Tokens, ...]
	image_feat: Optional[Tuple[float, ...]] = None
	image_grid: Optional[Tuple[Tuple[float, ...], ...]] = None
	phases: Tuple[PhaseSpan, ...] = ()
	pseudo_labels: Tuple[int, ...] = ()
	planted_types: Tuple[int, ...] = ()

	@property
	def is_labeled(self) -> bool:
		return bool(self.phases) and len(self.pseudo_labels) == len(self.phases)

	def phase_steps(self, index: int) -> Tuple[Tokens, ...]:
		span = self.phases[index]
		return self.steps[span.start:span.end]

	def phase_tokens(self, index: int) -> List[str]:
		return [token for step in self.phase_steps(index) for token in step]

	def instruction_tokens(self) -> List[str]:
		return [token for step in self.steps for token in step]


@dataclass
class Vocabulary:
	"""Mapa token→id con los reservados en 0..4."""
	tokens: List[str]
	index: Dict[str, int] = field(init=False)

	def __post_init__(self) -> None:
		if tuple(self.tokens[: len(RESERVED_TOKENS)]) != RESERVED_TOKENS:
			raise ValueError("los tokens reservados deben ocupar los ids 0..4")
		self.index = {token: idx for idx, token in enumerate(self.tokens)}
		if len(self.index) != len(self.tokens):
			raise ValueError("tokens duplicados en el vocabulario")

	def __len__(self) -> int:
		return len(self.tokens)

	def __contains__(self, token: str) -> bool:
		return token in self.index

	@property
	def pad_id(self) -> int:
		return 0

	@property
	def start_id(self) -> int:
		return 1

	@property
	def end_id(self) -> int:
		return 2

	@property
	def eophase_id(self) -> int:
		return 3

	@property
	def unk_id(self) -> int:
		return 4

	def encode(self, tokens: Iterable[str]) -> List[int]:
		return [self.index.get(token, self.unk_id) for token in tokens]

	def decode(self, ids: Iterable[int], *, skip_reserved: bool = True) -> List[str]:
		out = []
		for idx in ids:
			if skip_reserved and idx < len(RESERVED_TOKENS):
				continue
			out.append(self.tokens[idx])
		return out


@dataclass
class PhaseRepresentation:
	"""Media de los embeddings de los verbos de una fase."""
	phase_id: str
	vector: np.ndarray
	verb_count: int


@dataclass
class KMeansModel:
	"""Centroides k×E; asignación al más cercano (euclídeo, desempate por menor índice)."""
	centroids: np.ndarray
	inertia_history: List[float] = field(default_factory=list)
	n_iter: int = 0

	@property
	def k(self) -> int:
		return int(self.centroids.shape[0])

	def predict(self, points: np.ndarray) -> np.ndarray:
		pts = np.atleast_2d(np.asarray(points, dtype=float))
		distances = ((pts[:, None, :] - self.centroids[None, :, :]) ** 2).sum(axis=-1)
		return np.argmin(distances, axis=1)


@dataclass
class GeneratedRecipe:
	"""Salida de inferencia: estructura decodificada y tokens concatenados."""
	id: str
	structure: List[int]
	phases: List[List[str]]
	tokens: List[str]

	@property
	def text(self) -> str:
		return " ".join(self.tokens)


@dataclass
class EvalReport:
	perplexity: float
	bleu: float
	rouge_l: float
	avg_length: float
	vocab_size: int

	def to_dict(self) -> Dict[str, float]:
		return {
			"perplexity": self.perplexity,
			"bleu": self.bleu,
			"rouge_l": self.rouge_l,
			"avg_length": self.avg_length,
			"vocab_size": self.vocab_size,
		}
