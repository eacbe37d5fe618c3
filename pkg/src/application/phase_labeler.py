"""Pseudo etiquetado de fases: verbos → representación media → cluster más cercano.

Los embeddings de verbos salen de una matriz de co-ocurrencia PPMI reducida por
SVD (dimensión E) o de una tabla provista por el usuario.
"""

from __future__ import annotations

import dataclasses
from dataclasses import dataclass
from pathlib import Path
from typing import Dict, FrozenSet, Iterable, List, Optional, Sequence

import numpy as np
import structlog

from src.application.synthetic import PHASE_VERBS
from src.domain.entities import KMeansModel, PhaseRepresentation, RecipeRecord
from src.domain.exceptions import CorpusFormatError, NotFittedError

logger = structlog.get_logger()

_COMMON_VERBS = (
	"add", "bake", "beat", "blend", "boil", "bring", "brown", "chill", "chop", "combine",
	"cook", "cool", "cover", "cut", "dice", "drain", "drizzle", "fold", "fry", "garnish",
	"grate", "grill", "heat", "knead", "marinate", "mash", "measure", "melt", "mince", "mix",
	"peel", "place", "plate", "pour", "preheat", "reduce", "remove", "rinse", "roast", "saute",
	"season", "serve", "simmer", "slice", "sprinkle", "stir", "strain", "toss", "wash", "whisk",
)


@dataclass(frozen=True)
class VerbLexicon:
	"""Conjunto de formas verbales en minúsculas."""
	verbs: FrozenSet[str]

	def __post_init__(self) -> None:
		if not self.verbs:
			raise CorpusFormatError("el léxico de verbos está vacío")

	def __contains__(self, token: str) -> bool:
		return token in self.verbs

	@classmethod
	def default(cls) -> "VerbLexicon":
		planted = {verb for verbs in PHASE_VERBS.values() for verb in verbs}
		return cls(frozenset(planted | set(_COMMON_VERBS)))

	@classmethod
	def from_file(cls, path: str) -> "VerbLexicon":
		"""Un verbo por línea, UTF-8; se ignoran líneas vacías."""
		lines = Path(path).read_text(encoding="utf-8").splitlines()
		return cls(frozenset(line.strip().lower() for line in lines if line.strip()))


def extract_verbs(tokens: Sequence[str], lexicon: VerbLexicon) -> List[str]:
	return [token for token in tokens if token in lexicon]


def train_verb_embeddings(
	records: Iterable[RecipeRecord],
	lexicon: VerbLexicon,
	*,
	dim: int = 32,
	window: int = 5,
) -> Dict[str, np.ndarray]:
	"""PPMI de verbo × contexto (ventana dentro de cada paso) + SVD truncada, filas normalizadas."""
	verb_index: Dict[str, int] = {}
	context_index: Dict[str, int] = {}
	pairs: Dict[tuple, float] = {}
	for record in records:
		for step in record.steps:
			for position, token in enumerate(step):
				if token not in lexicon:
					continue
				row = verb_index.setdefault(token, len(verb_index))
				lo, hi = max(0, position - window), min(len(step), position + window + 1)
				for other in range(lo, hi):
					if other == position:
						continue
					col = context_index.setdefault(step[other], len(context_index))
					pairs[(row, col)] = pairs.get((row, col), 0.0) + 1.0
	if not verb_index:
		raise CorpusFormatError("ningún verbo del léxico aparece en el corpus")
	counts = np.zeros((len(verb_index), max(1, len(context_index))))
	for (row, col), value in pairs.items():
		counts[row, col] = value
	total = counts.sum()
	row_sum = counts.sum(axis=1, keepdims=True)
	col_sum = counts.sum(axis=0, keepdims=True)
	with np.errstate(divide="ignore", invalid="ignore"):
		pmi = np.log(counts * total / (row_sum * col_sum))
	ppmi = np.where(np.isfinite(pmi) & (pmi > 0.0), pmi, 0.0)
	u, s, _ = np.linalg.svd(ppmi, full_matrices=False)
	rank = min(dim, s.shape[0])
	vectors = np.zeros((len(verb_index), dim))
	vectors[:, :rank] = u[:, :rank] * s[:rank]
	norms = np.linalg.norm(vectors, axis=1, keepdims=True)
	vectors = np.divide(vectors, norms, out=np.zeros_like(vectors), where=norms > 0)
	logger.info("phase_labeler: embeddings de verbos entrenados", verbs=len(verb_index), dim=dim)
	return {verb: vectors[row] for verb, row in verb_index.items()}


def load_verb_embeddings(path: str) -> Dict[str, np.ndarray]:
	"""Tabla de texto `verbo v1 … vE` por línea."""
	table: Dict[str, np.ndarray] = {}
	dim: Optional[int] = None
	for line_number, line in enumerate(Path(path).read_text(encoding="utf-8").splitlines(), start=1):
		parts = line.split()
		if not parts:
			continue
		try:
			vector = np.array([float(value) for value in parts[1:]])
		except ValueError as exc:
			raise CorpusFormatError(f"valor no numérico en la tabla de embeddings: {exc}", line_number=line_number) from exc
		if dim is None:
			dim = vector.shape[0]
		if vector.shape[0] != dim or dim == 0:
			raise CorpusFormatError(f"se esperaban {dim} componentes", line_number=line_number)
		table[parts[0].lower()] = vector
	if not table:
		raise CorpusFormatError(f"tabla de embeddings vacía: {path}")
	return table


def phase_representation(
	phase_id: str,
	steps: Sequence[Sequence[str]],
	lexicon: VerbLexicon,
	embeddings: Dict[str, np.ndarray],
) -> PhaseRepresentation:
	"""Media de los embeddings de los verbos de la fase; vector cero con count 0 si no hay verbos."""
	dim = len(next(iter(embeddings.values())))
	vectors = []
	for step in steps:
		for verb in extract_verbs(step, lexicon):
			vector = embeddings.get(verb)
			if vector is None:
				logger.warning("phase_labeler: verbo sin embedding", verb=verb, phase_id=phase_id)
				continue
			vectors.append(vector)
	if not vectors:
		return PhaseRepresentation(phase_id=phase_id, vector=np.zeros(dim), verb_count=0)
	return PhaseRepresentation(phase_id=phase_id, vector=np.mean(vectors, axis=0), verb_count=len(vectors))


def phase_representations(
	records: Sequence[RecipeRecord],
	lexicon: VerbLexicon,
	embeddings: Dict[str, np.ndarray],
) -> List[PhaseRepresentation]:
	reps = []
	for record in records:
		for index in range(len(record.phases)):
			reps.append(
				phase_representation(f"{record.id}#{index}", record.phase_steps(index), lexicon, embeddings)
			)
	return reps


def assign_pseudo_labels(
	records: Sequence[RecipeRecord],
	model: Optional[KMeansModel],
	lexicon: VerbLexicon,
	embeddings: Dict[str, np.ndarray],
) -> List[RecipeRecord]:
	"""Etiqueta cada fase con su centroide más cercano (empate → menor índice)."""
	if model is None:
		raise NotFittedError("assign_pseudo_labels: el modelo k-means no está ajustado")
	labeled = []
	for record in records:
		if not record.phases:
			raise CorpusFormatError(f"la receta {record.id} no tiene fases segmentadas")
		labels = []
		for index in range(len(record.phases)):
			rep = phase_representation(f"{record.id}#{index}", record.phase_steps(index), lexicon, embeddings)
			if rep.verb_count == 0:
				logger.warning("phase_labeler: fase sin verbos, se asigna por el vector cero", phase_id=rep.phase_id)
			labels.append(int(model.predict(rep.vector)[0]))
		labeled.append(dataclasses.replace(record, pseudo_labels=tuple(labels)))
	return labeled
