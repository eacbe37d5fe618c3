"""Checkpoint binario de un solo archivo.

Disposición (little-endian):
	"DGNC" | u32 versión | u32 len + JSON (config, vocabulario, época, metadatos)
	| tabla de parámetros | estado del optimizador | u32 len + JSON del estado RNG

Tabla: u32 n_entradas y, por entrada, u32 len + nombre UTF-8, u32 rango,
rango × u32 dimensiones y los valores como float64. El optimizador guarda
u32 t, f64 lr y una tabla con entradas "m/<param>" y "v/<param>".
"""

from __future__ import annotations

import json
import struct
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, BinaryIO, Dict, List, Optional

import numpy as np
import structlog

from src.domain.exceptions import CheckpointFormatError

logger = structlog.get_logger()

MAGIC = b"DGNC"
FORMAT_VERSION = 1


@dataclass
class CheckpointState:
	config: Dict[str, Any]
	vocab: List[str]
	epoch: int
	parameters: Dict[str, np.ndarray]
	optimizer: Optional[Dict[str, Any]] = None
	rng_state: Dict[str, Any] = field(default_factory=dict)
	metadata: Dict[str, Any] = field(default_factory=dict)


def save_checkpoint(path: str, state: CheckpointState) -> Path:
	target = Path(path)
	target.parent.mkdir(parents=True, exist_ok=True)
	header = {"config": state.config, "vocab": state.vocab, "epoch": state.epoch, "metadata": state.metadata}
	tmp = target.with_suffix(target.suffix + ".tmp")
	with open(tmp, "wb") as handle:
		handle.write(MAGIC)
		handle.write(struct.pack("<I", FORMAT_VERSION))
		_write_blob(handle, json.dumps(header, sort_keys=True).encode("utf-8"))
		_write_table(handle, state.parameters)
		optimizer = state.optimizer or {"t": 0, "lr": 0.0, "m": {}, "v": {}}
		handle.write(struct.pack("<Id", int(optimizer["t"]), float(optimizer["lr"])))
		moments = {f"m/{name}": value for name, value in optimizer["m"].items()}
		moments.update({f"v/{name}": value for name, value in optimizer["v"].items()})
		_write_table(handle, moments)
		_write_blob(handle, json.dumps(state.rng_state, sort_keys=True).encode("utf-8"))
	tmp.replace(target)
	logger.info("checkpoint: guardado", path=str(target), epoch=state.epoch, tensors=len(state.parameters))
	return target


def load_checkpoint(path: str) -> CheckpointState:
	with open(path, "rb") as handle:
		magic = handle.read(4)
		if magic != MAGIC:
			raise CheckpointFormatError(f"{path}: magic {magic!r} no es {MAGIC!r}")
		(version,) = _unpack(handle, "<I")
		if version != FORMAT_VERSION:
			raise CheckpointFormatError(f"{path}: versión {version} no soportada")
		try:
			header = json.loads(_read_blob(handle).decode("utf-8"))
			parameters = _read_table(handle)
			step, lr = _unpack(handle, "<Id")
			moments = _read_table(handle)
			rng_state = json.loads(_read_blob(handle).decode("utf-8"))
		except (UnicodeDecodeError, json.JSONDecodeError) as exc:
			raise CheckpointFormatError(f"{path}: cabecera corrupta ({exc})") from exc
	optimizer = None
	if step or moments:
		optimizer = {
			"t": step,
			"lr": lr,
			"m": {name[2:]: value for name, value in moments.items() if name.startswith("m/")},
			"v": {name[2:]: value for name, value in moments.items() if name.startswith("v/")},
		}
	return CheckpointState(
		config=header["config"],
		vocab=header["vocab"],
		epoch=int(header["epoch"]),
		parameters=parameters,
		optimizer=optimizer,
		rng_state=rng_state,
		metadata=header.get("metadata", {}),
	)


def _write_blob(handle: BinaryIO, payload: bytes) -> None:
	handle.write(struct.pack("<I", len(payload)))
	handle.write(payload)


def _read_blob(handle: BinaryIO) -> bytes:
	(length,) = _unpack(handle, "<I")
	payload = handle.read(length)
	if len(payload) != length:
		raise CheckpointFormatError("archivo truncado")
	return payload


def _write_table(handle: BinaryIO, table: Dict[str, np.ndarray]) -> None:
	handle.write(struct.pack("<I", len(table)))
	for name, value in table.items():
		array = np.asarray(value)
		_write_blob(handle, name.encode("utf-8"))
		handle.write(struct.pack("<I", array.ndim))
		if array.ndim:
			handle.write(struct.pack(f"<{array.ndim}I", *array.shape))
		handle.write(np.ascontiguousarray(array, dtype="<f8").tobytes())


def _read_table(handle: BinaryIO) -> Dict[str, np.ndarray]:
	(count,) = _unpack(handle, "<I")
	table: Dict[str, np.ndarray] = {}
	for _ in range(count):
		name = _read_blob(handle).decode("utf-8")
		(rank,) = _unpack(handle, "<I")
		shape = _unpack(handle, f"<{rank}I") if rank else ()
		size = int(np.prod(shape)) if rank else 1
		raw = handle.read(8 * size)
		if len(raw) != 8 * size:
			raise CheckpointFormatError(f"valores truncados para {name}")
		table[name] = np.frombuffer(raw, dtype="<f8").reshape(shape).astype(np.float64)
	return table


def _unpack(handle: BinaryIO, fmt: str) -> tuple:
	size = struct.calcsize(fmt)
	raw = handle.read(size)
	if len(raw) != size:
		raise CheckpointFormatError("archivo truncado")
	return struct.unpack(fmt, raw)
