"""JsonlCorpusStore: persistencia del corpus como JSONL, un registro por línea.

Esquema base: {"id", "image_feat" | "image_grid", "ingredients", "steps"}; los
pasos se guardan como texto y se tokenizan al cargar. Las etapas posteriores
añaden campos opcionales: "phases" ([[inicio, fin]]), "pseudo_labels" y
"planted_types".
"""

from __future__ import annotations

import json
from pathlib import Path
from typing import Any, Callable, Dict, Iterable, List, Optional

import structlog

from src.domain.entities import GeneratedRecipe, PhaseSpan, RecipeRecord
from src.domain.exceptions import CorpusFormatError, MissingFieldError

logger = structlog.get_logger()

Tokenizer = Callable[[str], List[str]]

_REQUIRED_FIELDS = ("id", "ingredients", "steps")
_LIST_FIELDS = ("ingredients", "steps", "phases", "pseudo_labels", "planted_types", "image_feat", "image_grid")


class JsonlCorpusStore:
	def __init__(self, *, tokenizer: Tokenizer) -> None:
		self._tokenizer = tokenizer

	def load(self, path: str) -> List[RecipeRecord]:
		records: List[RecipeRecord] = []
		with open(path, encoding="utf-8") as handle:
			for line_number, line in enumerate(handle, start=1):
				if not line.strip():
					continue
				try:
					raw = json.loads(line)
				except json.JSONDecodeError as exc:
					raise CorpusFormatError(f"JSON mal formado ({exc.msg})", line_number=line_number) from exc
				records.append(self._parse(raw, line_number))
		logger.info("corpus_store: corpus cargado", path=str(path), records=len(records))
		return records

	def save(self, path: str, records: Iterable[RecipeRecord]) -> None:
		target = Path(path)
		target.parent.mkdir(parents=True, exist_ok=True)
		count = 0
		with open(target, "w", encoding="utf-8") as handle:
			for record in records:
				handle.write(json.dumps(self._serialize(record), ensure_ascii=False) + "\n")
				count += 1
		logger.info("corpus_store: corpus guardado", path=str(target), records=count)

	def save_labels(self, path: str, records: Iterable[RecipeRecord]) -> None:
		"""Volcado de etiquetas: {"id", "labels"} por línea."""
		_write_jsonl(path, ({"id": record.id, "labels": list(record.pseudo_labels)} for record in records))

	def save_generations(self, path: str, generated: Iterable[GeneratedRecipe]) -> None:
		_write_jsonl(
			path,
			({"id": item.id, "structure": list(item.structure), "text": item.text} for item in generated),
		)

	def _parse(self, raw: Any, line_number: int) -> RecipeRecord:
		if not isinstance(raw, dict):
			raise CorpusFormatError("cada línea debe ser un objeto JSON", line_number=line_number)
		for name in _REQUIRED_FIELDS:
			if name not in raw:
				raise MissingFieldError(name, line_number=line_number)
		image_feat = raw.get("image_feat")
		image_grid = raw.get("image_grid")
		if (image_feat is None) == (image_grid is None):
			raise CorpusFormatError("exactamente uno de image_feat / image_grid debe ser no nulo", line_number=line_number)
		for name in _LIST_FIELDS:
			if raw.get(name) is not None and not isinstance(raw[name], list):
				raise CorpusFormatError(f"el campo {name} debe ser una lista", line_number=line_number)
		try:
			steps = tuple(tuple(self._tokenizer(str(step))) for step in raw["steps"])
			ingredients = tuple(token for item in raw["ingredients"] for token in self._tokenizer(str(item)))
			phases = tuple(_phase_span(span) for span in raw.get("phases") or ())
			labels = tuple(int(label) for label in raw.get("pseudo_labels") or ())
			planted = tuple(int(t) for t in raw.get("planted_types") or ())
			feat = None if image_feat is None else tuple(float(v) for v in image_feat)
			grid = None if image_grid is None else tuple(tuple(float(v) for v in row) for row in image_grid)
		except (TypeError, ValueError) as exc:
			raise CorpusFormatError(f"valor inválido: {exc}", line_number=line_number) from exc
		if not steps:
			raise CorpusFormatError(f"la receta {raw['id']} no tiene pasos", line_number=line_number)
		_check_phases(phases, labels, len(steps), line_number)
		return RecipeRecord(
			id=str(raw["id"]),
			ingredients=ingredients,
			steps=steps,
			image_feat=feat,
			image_grid=grid,
			phases=phases,
			pseudo_labels=labels,
			planted_types=planted,
		)

	@staticmethod
	def _serialize(record: RecipeRecord) -> Dict[str, Any]:
		payload: Dict[str, Any] = {
			"id": record.id,
			"image_feat": None if record.image_feat is None else list(record.image_feat),
			"image_grid": None if record.image_grid is None else [list(row) for row in record.image_grid],
			"ingredients": list(record.ingredients),
			"steps": [" ".join(step) for step in record.steps],
		}
		if record.phases:
			payload["phases"] = [[span.start, span.end] for span in record.phases]
		if record.pseudo_labels:
			payload["pseudo_labels"] = list(record.pseudo_labels)
		if record.planted_types:
			payload["planted_types"] = list(record.planted_types)
		return payload


def write_json(path: str, payload: Dict[str, Any]) -> Path:
	target = Path(path)
	target.parent.mkdir(parents=True, exist_ok=True)
	target.write_text(json.dumps(payload, indent=2, sort_keys=True), encoding="utf-8")
	return target


def _write_jsonl(path: str, rows: Iterable[Dict[str, Any]]) -> None:
	target = Path(path)
	target.parent.mkdir(parents=True, exist_ok=True)
	with open(target, "w", encoding="utf-8") as handle:
		for row in rows:
			handle.write(json.dumps(row, ensure_ascii=False) + "\n")


def _check_phases(phases: tuple, labels: tuple, n_steps: int, line_number: Optional[int]) -> None:
	if not phases:
		if labels:
			raise CorpusFormatError("pseudo_labels sin fases", line_number=line_number)
		return
	if len(phases) > 3:
		raise CorpusFormatError(f"{len(phases)} fases (máximo 3)", line_number=line_number)
	expected_start = 0
	for span in phases:
		if span.start != expected_start or span.end <= span.start:
			raise CorpusFormatError("las fases deben partir los pasos en orden", line_number=line_number)
		expected_start = span.end
	if expected_start != n_steps:
		raise CorpusFormatError("las fases no cubren todos los pasos", line_number=line_number)
	if labels and len(labels) != len(phases):
		raise CorpusFormatError("|pseudo_labels| debe ser igual a |phases|", line_number=line_number)


def _phase_span(raw: Any) -> PhaseSpan:
	if not isinstance(raw, list) or len(raw) != 2:
		raise ValueError(f"fase {raw!r}: se esperaba [inicio, fin]")
	return PhaseSpan(int(raw[0]), int(raw[1]))
