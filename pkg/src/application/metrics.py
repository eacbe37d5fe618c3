"""Métricas de evaluación: perplejidad, BLEU de corpus, ROUGE-L y estadísticas de salida."""

from __future__ import annotations

import math
from typing import Sequence, Tuple

import structlog
from nltk.translate.bleu_score import brevity_penalty, modified_precision

from src.domain.entities import RecipeRecord
from src.domain.exceptions import CorpusFormatError, NumericalError
from src.domain.interfaces import RecipeModel

logger = structlog.get_logger()

ROUGE_BETA_SQ = 12.0
BLEU_MAX_N = 4


def perplexity_from_nll(total_nll: float, n_tokens: int) -> float:
	if n_tokens <= 0:
		raise CorpusFormatError("perplexity: no hay tokens que evaluar")
	try:
		value = math.exp(total_nll / n_tokens)
	except OverflowError:
		value = math.inf
	if not math.isfinite(value):
		raise NumericalError(f"perplexity no finita (nll={total_nll}, tokens={n_tokens})")
	return value


def perplexity(model: RecipeModel, records: Sequence[RecipeRecord]) -> float:
	"""exp(NLL media por token generado con teacher forcing); las etiquetas de estructura no cuentan."""
	if not records:
		raise CorpusFormatError("perplexity: corpus vacío")
	total_nll = 0.0
	total_tokens = 0
	for record in records:
		nll, count = model.token_nll(record)
		total_nll += nll
		total_tokens += count
	return perplexity_from_nll(total_nll, total_tokens)


def _ngram_counts(hypothesis: Sequence[str], reference: Sequence[str], n: int) -> Tuple[int, int]:
	"""(coincidencias recortadas, nº real de n-gramas de la hipótesis)."""
	total = max(len(hypothesis) - n + 1, 0)
	if total == 0:
		return 0, 0
	# modified_precision acota el denominador a 1; con total ≥ 1 el producto es exacto.
	clipped = modified_precision([list(reference)], list(hypothesis), n) * total
	return int(clipped), total


def bleu(hypotheses: Sequence[Sequence[str]], references: Sequence[Sequence[str]]) -> float:
	"""BLEU de corpus ×100 (n = 1..4, penalización por brevedad).

	Para n ≥ 2 se suma 1 al numerador y al denominador agregados del corpus,
	así un orden sin n-gramas aporta (0+1)/(0+1) = 1.
	"""
	if len(hypotheses) != len(references):
		raise ValueError(f"bleu: {len(hypotheses)} hipótesis para {len(references)} referencias")
	if not references or any(len(reference) == 0 for reference in references):
		raise CorpusFormatError("bleu: referencia vacía")
	matches = [0] * BLEU_MAX_N
	totals = [0] * BLEU_MAX_N
	for hypothesis, reference in zip(hypotheses, references):
		for n in range(1, BLEU_MAX_N + 1):
			clipped, total = _ngram_counts(hypothesis, reference, n)
			matches[n - 1] += clipped
			totals[n - 1] += total
	if matches[0] == 0:
		return 0.0
	log_precision = math.log(matches[0] / totals[0])
	for n in range(2, BLEU_MAX_N + 1):
		log_precision += math.log((matches[n - 1] + 1) / (totals[n - 1] + 1))
	hyp_length = sum(len(hypothesis) for hypothesis in hypotheses)
	ref_length = sum(len(reference) for reference in references)
	penalty = brevity_penalty(ref_length, hyp_length)
	return 100.0 * penalty * math.exp(log_precision / BLEU_MAX_N)


def lcs_length(a: Sequence[str], b: Sequence[str]) -> int:
	if not a or not b:
		return 0
	previous = [0] * (len(b) + 1)
	for token_a in a:
		current = [0]
		for j, token_b in enumerate(b, start=1):
			current.append(previous[j - 1] + 1 if token_a == token_b else max(previous[j], current[j - 1]))
		previous = current
	return previous[-1]


def rouge_l(hypothesis: Sequence[str], reference: Sequence[str], *, beta_sq: float = ROUGE_BETA_SQ) -> float:
	"""F-score sobre la LCS con β² = 12 (favorece recall); 0 si alguna secuencia está vacía."""
	lcs = lcs_length(hypothesis, reference)
	if lcs == 0:
		return 0.0
	precision = lcs / len(hypothesis)
	recall = lcs / len(reference)
	return (1.0 + beta_sq) * precision * recall / (recall + beta_sq * precision)


def corpus_rouge_l(hypotheses: Sequence[Sequence[str]], references: Sequence[Sequence[str]]) -> float:
	if not hypotheses:
		return 0.0
	return sum(rouge_l(h, r) for h, r in zip(hypotheses, references)) / len(hypotheses)


def corpus_stats(texts: Sequence[Sequence[str]]) -> Tuple[float, int]:
	"""(longitud media en tokens, nº de tokens distintos)."""
	if not texts:
		return 0.0, 0
	avg_length = sum(len(text) for text in texts) / len(texts)
	vocab = {token for text in texts for token in text}
	return avg_length, len(vocab)
