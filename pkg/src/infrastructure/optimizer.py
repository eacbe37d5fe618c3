"""Adam con corrección de sesgo y recorte de gradiente por norma global."""

from __future__ import annotations

from typing import Dict, List, Sequence, Tuple

import numpy as np
import structlog

from src.domain.exceptions import NumericalError
from src.nn.module import Parameter

logger = structlog.get_logger()

NamedParameters = Sequence[Tuple[str, Parameter]]


class Adam:
	"""m ← β1·m + (1−β1)·g; v ← β2·v + (1−β2)·g²; θ ← θ − lr·m̂ / (√v̂ + ε).

	Los parámetros sin gradiente en el paso (p. ej. un sub-generador sin fases
	en el batch) no actualizan sus momentos.
	"""

	def __init__(
		self,
		params: NamedParameters,
		*,
		lr: float = 1e-3,
		beta1: float = 0.9,
		beta2: float = 0.999,
		eps: float = 1e-8,
	) -> None:
		self.params: List[Tuple[str, Parameter]] = list(params)
		self.lr = lr
		self.beta1 = beta1
		self.beta2 = beta2
		self.eps = eps
		self.t = 0
		self.m: Dict[str, np.ndarray] = {name: np.zeros_like(p.data) for name, p in self.params}
		self.v: Dict[str, np.ndarray] = {name: np.zeros_like(p.data) for name, p in self.params}

	def step(self) -> None:
		check_finite_grads(self.params)
		self.t += 1
		correction1 = 1.0 - self.beta1 ** self.t
		correction2 = 1.0 - self.beta2 ** self.t
		for name, param in self.params:
			if param.grad is None:
				continue
			grad = param.grad
			self.m[name] = self.beta1 * self.m[name] + (1.0 - self.beta1) * grad
			self.v[name] = self.beta2 * self.v[name] + (1.0 - self.beta2) * grad * grad
			m_hat = self.m[name] / correction1
			v_hat = self.v[name] / correction2
			param.data = param.data - self.lr * m_hat / (np.sqrt(v_hat) + self.eps)

	def zero_grad(self) -> None:
		for _, param in self.params:
			param.zero_grad()

	def state_dict(self) -> Dict[str, object]:
		return {
			"t": self.t,
			"lr": self.lr,
			"m": {name: value.copy() for name, value in self.m.items()},
			"v": {name: value.copy() for name, value in self.v.items()},
		}

	def load_state_dict(self, state: Dict[str, object]) -> None:
		self.t = int(state["t"])
		self.lr = float(state["lr"])
		for key in ("m", "v"):
			moments = state[key]
			target = getattr(self, key)
			for name in target:
				if name not in moments:
					raise KeyError(f"falta el momento '{key}' de {name}")
				target[name] = np.asarray(moments[name]).astype(target[name].dtype, copy=True)


def check_finite_grads(params: NamedParameters) -> None:
	for name, param in params:
		if param.grad is not None and not np.all(np.isfinite(param.grad)):
			logger.error("optimizer: gradiente no finito", parameter=name)
			raise NumericalError(f"gradiente no finito en {name}")


def clip_grad_norm(params: NamedParameters, max_norm: float) -> float:
	"""Escala los gradientes si su norma global supera max_norm; devuelve la norma previa."""
	check_finite_grads(params)
	grads = [param.grad for _, param in params if param.grad is not None]
	total = float(np.sqrt(sum(float((g * g).sum()) for g in grads)))
	if total > max_norm:
		scale = max_norm / (total + 1e-12)
		for _, param in params:
			if param.grad is not None:
				param.grad = param.grad * scale
	return total
