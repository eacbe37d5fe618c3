"""Tokenización, segmentación en fases y vocabulario del corpus de recetas."""

from __future__ import annotations

import dataclasses
from collections import Counter
from typing import Iterable, List, Sequence, Tuple

import numpy as np
import structlog
from nltk.tokenize import RegexpTokenizer

from src.domain.entities import RESERVED_TOKENS, PhaseSpan, RecipeRecord, Vocabulary
from src.domain.exceptions import CorpusFormatError

logger = structlog.get_logger()

MAX_PHASES = 3

_TOKENIZER = RegexpTokenizer(r"\w+|[^\w\s]")


def tokenize(text: str) -> List[str]:
	"""Minúsculas y separación por espacios y signos de puntuación ("Heat oil." → heat, oil, .)."""
	return _TOKENIZER.tokenize(text.lower())


def segment_phases(steps: Sequence[object], max_phases: int = MAX_PHASES) -> List[PhaseSpan]:
	"""Parte los pasos en min(3, n) fases contiguas; las primeras reciben el sobrante."""
	n_steps = len(steps)
	if n_steps == 0:
		raise CorpusFormatError("segment_phases: la receta no tiene pasos")
	n_phases = min(max_phases, n_steps)
	base, remainder = divmod(n_steps, n_phases)
	spans: List[PhaseSpan] = []
	start = 0
	for index in range(n_phases):
		size = base + (1 if index < remainder else 0)
		spans.append(PhaseSpan(start=start, end=start + size))
		start += size
	return spans


def with_phases(record: RecipeRecord) -> RecipeRecord:
	"""Copia del registro con sus fases segmentadas (las pseudo etiquetas previas se conservan si encajan)."""
	phases = tuple(segment_phases(record.steps))
	labels = record.pseudo_labels if len(record.pseudo_labels) == len(phases) else ()
	return dataclasses.replace(record, phases=phases, pseudo_labels=labels)


def split_corpus(
	records: Sequence[RecipeRecord],
	*,
	val_fraction: float,
	seed: int,
) -> Tuple[List[RecipeRecord], List[RecipeRecord]]:
	"""Partición determinista (train, val); val vacío si val_fraction es 0 o el corpus es de un registro."""
	order = np.random.default_rng(seed).permutation(len(records))
	n_val = min(int(round(len(records) * val_fraction)), max(len(records) - 1, 0))
	val_ids = set(order[:n_val].tolist())
	train = [record for idx, record in enumerate(records) if idx not in val_ids]
	val = [record for idx, record in enumerate(records) if idx in val_ids]
	return train, val


def build_vocab(records: Iterable[RecipeRecord], *, min_freq: int = 1) -> Vocabulary:
	"""Vocabulario de ingredientes + instrucciones ordenado por frecuencia; lo raro queda como [UNK]."""
	counts: Counter = Counter()
	n_records = 0
	for record in records:
		n_records += 1
		counts.update(record.ingredients)
		for step in record.steps:
			counts.update(step)
	if n_records == 0:
		raise CorpusFormatError("build_vocab: corpus vacío")
	kept = sorted(
		(token for token, freq in counts.items() if freq >= min_freq and token not in RESERVED_TOKENS),
		key=lambda token: (-counts[token], token),
	)
	logger.info("corpus: vocabulario construido", size=len(kept) + len(RESERVED_TOKENS), dropped=len(counts) - len(kept))
	return Vocabulary(list(RESERVED_TOKENS) + kept)
