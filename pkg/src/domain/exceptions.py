"""Excepciones de dominio para la aplicación."""

from __future__ import annotations

from typing import Optional


class DomainError(Exception):
	"""Error base de dominio."""


class ShapeError(DomainError):
	"""Dimensiones incompatibles entre tensores o entradas."""


class TargetIndexError(DomainError):
	"""Índice de objetivo, etiqueta o token fuera de rango."""


class CorpusFormatError(DomainError):
	"""Línea JSONL mal formada o registro que viola los invariantes del corpus."""

	def __init__(self, message: str, *, line_number: Optional[int] = None) -> None:
		self.line_number = line_number
		prefix = f"línea {line_number}: " if line_number is not None else ""
		super().__init__(f"{prefix}{message}")


class MissingFieldError(CorpusFormatError):
	"""Falta un campo obligatorio en un registro."""

	def __init__(self, field_name: str, *, line_number: Optional[int] = None) -> None:
		self.field_name = field_name
		super().__init__(f"falta el campo obligatorio '{field_name}'", line_number=line_number)


class InvalidConfigError(DomainError):
	"""Configuración inválida o incompleta."""


class InsufficientPointsError(DomainError):
	"""Hay menos puntos que clusters solicitados."""


class NotFittedError(DomainError):
	"""Se usó un modelo que todavía no está ajustado."""


class UnlabeledCorpusError(DomainError):
	"""El corpus no tiene pseudo etiquetas asignadas."""


class NumericalError(DomainError):
	"""Gradientes o pérdidas no finitas."""


class CheckpointFormatError(DomainError):
	"""Archivo de checkpoint corrupto o de versión desconocida."""
