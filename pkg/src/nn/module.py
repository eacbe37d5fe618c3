"""Parámetros entrenables y contenedor de módulos con nombres jerárquicos."""

from __future__ import annotations

from typing import Dict, Iterator, List, Tuple

import numpy as np

from src.nn.tensor import Tensor


class Parameter(Tensor):
	"""Hoja entrenable del grafo."""

	def __init__(self, data: np.ndarray) -> None:
		super().__init__(data, requires_grad=True)


class Module:
	"""Base de los bloques del modelo.

	Los parámetros se descubren recorriendo los atributos en orden de
	asignación (Parameter, Module o listas de Module), así los nombres son
	estables entre ejecuciones y sirven como claves del checkpoint.
	"""

	training: bool = True

	def named_parameters(self, prefix: str = "") -> Iterator[Tuple[str, Parameter]]:
		for name, value in vars(self).items():
			yield from _walk_parameters(value, f"{prefix}{name}")

	def parameters(self) -> List[Parameter]:
		return [param for _, param in self.named_parameters()]

	def trainable_parameters(self) -> List[Tuple[str, Parameter]]:
		return [(name, param) for name, param in self.named_parameters() if param.requires_grad]

	def num_parameters(self) -> int:
		return int(sum(param.data.size for param in self.parameters()))

	def zero_grad(self) -> None:
		for param in self.parameters():
			param.zero_grad()

	def modules(self) -> Iterator["Module"]:
		yield self
		for value in vars(self).values():
			yield from _walk_modules(value)

	def train(self, mode: bool = True) -> "Module":
		for module in self.modules():
			module.training = mode
		return self

	def eval(self) -> "Module":
		return self.train(False)

	def freeze(self) -> None:
		for param in self.parameters():
			param.requires_grad = False

	def state_dict(self) -> Dict[str, np.ndarray]:
		return {name: param.data.copy() for name, param in self.named_parameters()}

	def load_state_dict(self, state: Dict[str, np.ndarray]) -> None:
		params = dict(self.named_parameters())
		missing = set(params) - set(state)
		if missing:
			raise KeyError(f"faltan parámetros en el estado: {sorted(missing)[:5]}")
		for name, param in params.items():
			value = np.asarray(state[name])
			if value.shape != param.data.shape:
				raise ValueError(f"shape distinto para {name}: {value.shape} vs {param.data.shape}")
			param.data = value.astype(param.data.dtype, copy=True)


def _walk_parameters(value: object, name: str) -> Iterator[Tuple[str, Parameter]]:
	if isinstance(value, Parameter):
		yield name, value
	elif isinstance(value, Module):
		yield from value.named_parameters(prefix=f"{name}.")
	elif isinstance(value, (list, tuple)):
		for idx, item in enumerate(value):
			yield from _walk_parameters(item, f"{name}.{idx}")


def _walk_modules(value: object) -> Iterator[Module]:
	if isinstance(value, Module):
		yield from value.modules()
	elif isinstance(value, (list, tuple)):
		for item in value:
			yield from _walk_modules(item)
