"""Configuración de ejecución: modelos pydantic, archivo INI por secciones y variables de entorno.

Prioridad: flags de la CLI > archivo de configuración > variables de entorno
(`DGN_THREADS`, `DGN_LOG_LEVEL`, cargadas también desde `.env`) > valores por defecto.
"""

from __future__ import annotations

import configparser
import json
import os
from pathlib import Path
from typing import Any, Dict, Mapping, Optional, Tuple

from dotenv import load_dotenv
from pydantic import BaseModel, Field, ValidationError, field_validator, model_validator

from src.domain.exceptions import InvalidConfigError

load_dotenv()

RUN_CONFIG_FILENAME = "run_config.json"


class ModelConfig(BaseModel):
	"""Hiperparámetros de arquitectura (defaults de escritorio)."""
	model_kind: str = "dgn"
	hidden: int = Field(64, gt=0)
	n_head: int = Field(4, gt=0)
	n_layer: int = Field(2, gt=0)
	n_shared: int = Field(2, ge=0)
	n_indep: int = Field(1, ge=0)
	n_generators: int = Field(3, gt=0)
	max_phases: int = Field(3, ge=1, le=3)
	fusion: str = "attn"
	inputs: str = "both"
	ffn_mult: int = Field(4, gt=0)
	dropout: float = Field(0.0, ge=0.0, lt=1.0)
	max_ingr_tokens: int = Field(30, gt=0)
	max_phase_tokens: int = Field(60, gt=0)
	max_recipe_tokens: int = Field(150, gt=0)
	max_positions: int = Field(160, gt=1)
	image_raw_dim: int = Field(32, gt=0)
	conv_channels: int = Field(8, gt=0)
	image_regions: int = Field(2, gt=0)
	freeze_image_encoder: bool = False
	precision: str = "float64"

	@field_validator("model_kind")
	@classmethod
	def _check_kind(cls, value: str) -> str:
		if value not in ("dgn", "baseline"):
			raise ValueError("model_kind debe ser 'dgn' o 'baseline'")
		return value

	@field_validator("fusion")
	@classmethod
	def _check_fusion(cls, value: str) -> str:
		if value not in ("cat", "attn"):
			raise ValueError("fusion debe ser 'cat' o 'attn'")
		return value

	@field_validator("inputs")
	@classmethod
	def _check_inputs(cls, value: str) -> str:
		if value not in ("both", "image", "ingredients"):
			raise ValueError("inputs debe ser 'both', 'image' o 'ingredients'")
		return value

	@field_validator("precision")
	@classmethod
	def _check_precision(cls, value: str) -> str:
		if value not in ("float64", "float32"):
			raise ValueError("precision debe ser 'float64' o 'float32'")
		return value

	@model_validator(mode="after")
	def _check_dims(self) -> "ModelConfig":
		if self.hidden % self.n_head != 0:
			raise ValueError(f"n_head·d_k debe ser H: {self.hidden} no es divisible entre {self.n_head}")
		if self.n_shared + self.n_indep == 0:
			raise ValueError("el generador necesita al menos un bloque")
		if self.max_positions <= max(self.max_recipe_tokens, self.max_phase_tokens):
			raise ValueError("max_positions debe superar el tope de tokens decodificados")
		return self

	@property
	def d_k(self) -> int:
		return self.hidden // self.n_head


class TrainConfig(BaseModel):
	"""Optimizador, calendario y pesos de la pérdida combinada."""
	lr: float = Field(0.001, gt=0.0)
	lr_decay: float = Field(0.99, gt=0.0, le=1.0)
	epochs: int = Field(30, ge=0)
	batch_size: int = Field(16, gt=0)
	seed: int = 0
	lambda_pre: float = 1.0
	lambda_gen: float = 1.0
	lambda_pos: float = 0.1
	beta1: float = Field(0.9, ge=0.0, lt=1.0)
	beta2: float = Field(0.999, ge=0.0, lt=1.0)
	adam_eps: float = Field(1e-8, gt=0.0)
	clip_norm: float = Field(5.0, gt=0.0)
	val_fraction: float = Field(0.1, ge=0.0, lt=1.0)
	min_freq: int = Field(1, ge=1)

	@property
	def lambdas(self) -> Tuple[float, float, float]:
		return (self.lambda_pre, self.lambda_gen, self.lambda_pos)


class LabelConfig(BaseModel):
	"""Pseudo etiquetado por k-means sobre representaciones de fase."""
	k: int = Field(3, gt=0)
	n_init: int = Field(4, gt=0)
	seed: int = 0
	embedding_dim: int = Field(32, gt=0)
	window: int = Field(5, gt=0)
	lexicon_path: Optional[str] = None
	embeddings_path: Optional[str] = None


class SynthConfig(BaseModel):
	"""Corpus sintético con estructura plantada."""
	seed: int = 0
	n_recipes: int = Field(2000, ge=1)
	n_phase_types: int = Field(3, ge=1, le=3)
	image_mode: str = "feat"
	raw_dim: int = Field(32, gt=0)
	grid_size: int = Field(8, gt=0)
	noise: float = Field(0.1, ge=0.0)
	min_steps: int = Field(2, ge=1)
	max_steps: int = Field(7, ge=1)
	min_ingredients: int = Field(3, ge=1)
	max_ingredients: int = Field(8, ge=1)
	dominant_template_prob: float = Field(0.7, gt=0.0, le=1.0)

	@field_validator("image_mode")
	@classmethod
	def _check_mode(cls, value: str) -> str:
		if value not in ("feat", "grid"):
			raise ValueError("image_mode debe ser 'feat' o 'grid'")
		return value

	@model_validator(mode="after")
	def _check_ranges(self) -> "SynthConfig":
		if self.min_steps > self.max_steps:
			raise ValueError("min_steps no puede superar max_steps")
		if self.min_ingredients > self.max_ingredients:
			raise ValueError("min_ingredients no puede superar max_ingredients")
		return self


class RunConfig(BaseModel):
	"""Vista resuelta de archivo + flags + entorno; se serializa junto a las salidas."""
	seed: int = 0
	threads: int = Field(default_factory=lambda: int(os.getenv("DGN_THREADS", "4")), gt=0)
	log_level: str = Field(default_factory=lambda: os.getenv("DGN_LOG_LEVEL", "INFO"))
	model: ModelConfig = Field(default_factory=ModelConfig)
	train: TrainConfig = Field(default_factory=TrainConfig)
	label: LabelConfig = Field(default_factory=LabelConfig)
	synth: SynthConfig = Field(default_factory=SynthConfig)

	@field_validator("log_level")
	@classmethod
	def _check_level(cls, value: str) -> str:
		level = value.upper()
		if level not in ("DEBUG", "INFO", "WARNING", "ERROR", "CRITICAL"):
			raise ValueError(f"log_level desconocido: {value}")
		return level


_SECTIONS = ("model", "train", "label", "synth")


def load_run_config(
	path: Optional[str] = None,
	overrides: Optional[Mapping[str, Any]] = None,
) -> RunConfig:
	"""Fusiona el archivo INI (secciones [run], [model], [train], [label], [synth]) con overrides.

	Las claves de `overrides` usan notación con punto (`train.epochs`) o nombres
	de primer nivel (`seed`); los valores None se ignoran.
	"""
	raw: Dict[str, Any] = {section: {} for section in _SECTIONS}
	if path:
		parser = configparser.ConfigParser()
		try:
			with open(path, encoding="utf-8") as handle:
				parser.read_file(handle)
		except configparser.Error as exc:
			raise InvalidConfigError(f"archivo de configuración inválido {path}: {exc}") from exc
		for section in parser.sections():
			values = dict(parser.items(section))
			if section == "run":
				raw.update(values)
			elif section in _SECTIONS:
				raw[section].update(values)
			else:
				raise InvalidConfigError(f"sección desconocida [{section}] en {path}")
	for key, value in (overrides or {}).items():
		if value is None:
			continue
		if "." in key:
			section, field_name = key.split(".", 1)
			if section not in _SECTIONS:
				raise InvalidConfigError(f"override con sección desconocida: {key}")
			raw[section][field_name] = value
		else:
			raw[key] = value
	try:
		return RunConfig.model_validate(raw)
	except ValidationError as exc:
		raise InvalidConfigError(str(exc)) from exc


def write_run_config(config: RunConfig, directory: str) -> Path:
	"""Escribe la instantánea resuelta `run_config.json` en el directorio de salida."""
	target = Path(directory)
	target.mkdir(parents=True, exist_ok=True)
	path = target / RUN_CONFIG_FILENAME
	path.write_text(json.dumps(config.model_dump(), indent=2, sort_keys=True), encoding="utf-8")
	return path
