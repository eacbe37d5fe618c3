"""Núcleo numérico denso con diferenciación automática en modo reverso.

Cada operación diferenciable es una subclase de `Function` con `forward` y
`backward` sobre arrays de numpy. `Function.apply` envuelve el resultado en un
`Tensor` que recuerda a su creador; `Tensor.backward` recorre el grafo en orden
topológico inverso y acumula gradientes (suma) en las hojas con requires_grad.
"""

from __future__ import annotations

import threading
from contextlib import contextmanager
from typing import Any, Iterator, List, Optional, Sequence, Tuple, Union

import numpy as np

from src.domain.exceptions import ShapeError, TargetIndexError

ArrayLike = Union[np.ndarray, float, int, Sequence[Any]]

IGNORE_INDEX = -100
MASK_VALUE = -1e9

_DEFAULT_DTYPE: type = np.float64
_grad_state = threading.local()


def set_default_dtype(dtype: type) -> None:
	"""Cambia la precisión por defecto (float64 o float32)."""
	global _DEFAULT_DTYPE
	if dtype not in (np.float64, np.float32):
		raise ValueError(f"dtype no soportado: {dtype}")
	_DEFAULT_DTYPE = dtype


def get_default_dtype() -> type:
	return _DEFAULT_DTYPE


def is_grad_enabled() -> bool:
	return getattr(_grad_state, "enabled", True)


@contextmanager
def no_grad() -> Iterator[None]:
	"""Desactiva la construcción del grafo en el hilo actual (inferencia)."""
	previous = is_grad_enabled()
	_grad_state.enabled = False
	try:
		yield
	finally:
		_grad_state.enabled = previous


class Function:
	"""Operación diferenciable; guarda sus padres y lo necesario para backward."""

	def __init__(self, *parents: "Tensor") -> None:
		self.parents = parents

	def forward(self, *args: np.ndarray, **kwargs: Any) -> np.ndarray:
		raise NotImplementedError

	def backward(self, grad: np.ndarray) -> Tuple[Optional[np.ndarray], ...]:
		raise NotImplementedError

	@classmethod
	def apply(cls, *tensors: "Tensor", **kwargs: Any) -> "Tensor":
		func = cls(*tensors)
		out_data = func.forward(*(t.data for t in tensors), **kwargs)
		requires_grad = is_grad_enabled() and any(t.requires_grad for t in tensors)
		return Tensor(out_data, requires_grad=requires_grad, _creator=func if requires_grad else None)

	@staticmethod
	def unbroadcast(grad: np.ndarray, shape: Tuple[int, ...]) -> np.ndarray:
		"""Suma las dimensiones añadidas por broadcasting hasta recuperar `shape`."""
		if grad.shape == shape:
			return grad
		while grad.ndim > len(shape):
			grad = grad.sum(axis=0)
		for axis, dim in enumerate(shape):
			if dim == 1 and grad.shape[axis] != 1:
				grad = grad.sum(axis=axis, keepdims=True)
		return grad


class Tensor:
	"""Array denso (row-major) con gradiente opcional y referencia a su creador."""

	__array_priority__ = 100

	def __init__(
		self,
		data: ArrayLike,
		*,
		requires_grad: bool = False,
		dtype: Optional[type] = None,
		_creator: Optional[Function] = None,
	) -> None:
		array = np.asarray(data)
		if dtype is not None:
			array = array.astype(dtype, copy=False)
		elif not np.issubdtype(array.dtype, np.floating) or array.dtype != _DEFAULT_DTYPE:
			array = array.astype(_DEFAULT_DTYPE, copy=False)
		self.data: np.ndarray = array
		self.requires_grad = requires_grad
		self.grad: Optional[np.ndarray] = None
		self._creator = _creator

	@property
	def shape(self) -> Tuple[int, ...]:
		return self.data.shape

	@property
	def ndim(self) -> int:
		return self.data.ndim

	@property
	def dtype(self) -> np.dtype:
		return self.data.dtype

	@property
	def T(self) -> "Tensor":
		return self.transpose()

	def __repr__(self) -> str:
		return f"Tensor(shape={self.shape}, requires_grad={self.requires_grad})"

	def __len__(self) -> int:
		return self.shape[0]

	def numpy(self) -> np.ndarray:
		return self.data

	def item(self) -> float:
		return float(self.data.reshape(-1)[0]) if self.data.size == 1 else float("nan")

	def zero_grad(self) -> None:
		self.grad = None

	def backward(self) -> None:
		"""Propaga d(self)/d(hoja) a todas las hojas con requires_grad.

		Los gradientes de las hojas se acumulan entre llamadas; los nodos
		intermedios solo viven durante el recorrido.
		"""
		if self.data.size != 1:
			raise ShapeError(f"backward requiere una pérdida escalar, shape recibido {self.shape}")
		if not self.requires_grad:
			return
		order = self._topological_order()
		grads = {id(self): np.ones_like(self.data)}
		for node in reversed(order):
			grad = grads.pop(id(node), None)
			if grad is None:
				continue
			if node._creator is None:
				node.grad = grad.copy() if node.grad is None else node.grad + grad
				continue
			parent_grads = node._creator.backward(grad)
			for parent, parent_grad in zip(node._creator.parents, parent_grads):
				if parent_grad is None or not parent.requires_grad:
					continue
				key = id(parent)
				if key in grads:
					grads[key] = grads[key] + parent_grad
				else:
					grads[key] = parent_grad

	def _topological_order(self) -> List["Tensor"]:
		# DFS iterativo: los grafos de decodificación son profundos.
		order: List[Tensor] = []
		visited = set()
		stack: List[Tuple[Tensor, bool]] = [(self, False)]
		while stack:
			node, expanded = stack.pop()
			if expanded:
				order.append(node)
				continue
			if id(node) in visited:
				continue
			visited.add(id(node))
			stack.append((node, True))
			if node._creator is not None:
				for parent in node._creator.parents:
					if parent.requires_grad and id(parent) not in visited:
						stack.append((parent, False))
		return order

	# Operadores

	def __add__(self, other: Any) -> "Tensor":
		return Add.apply(self, as_tensor(other))

	def __radd__(self, other: Any) -> "Tensor":
		return Add.apply(as_tensor(other), self)

	def __sub__(self, other: Any) -> "Tensor":
		return Add.apply(self, Neg.apply(as_tensor(other)))

	def __rsub__(self, other: Any) -> "Tensor":
		return Add.apply(as_tensor(other), Neg.apply(self))

	def __mul__(self, other: Any) -> "Tensor":
		if isinstance(other, (int, float)):
			return Scale.apply(self, factor=float(other))
		return Mul.apply(self, as_tensor(other))

	def __rmul__(self, other: Any) -> "Tensor":
		return self.__mul__(other)

	def __truediv__(self, other: Any) -> "Tensor":
		if isinstance(other, (int, float)):
			return Scale.apply(self, factor=1.0 / float(other))
		return Mul.apply(self, Reciprocal.apply(as_tensor(other)))

	def __neg__(self) -> "Tensor":
		return Neg.apply(self)

	def __matmul__(self, other: "Tensor") -> "Tensor":
		return matmul(self, other)

	def __getitem__(self, index: Any) -> "Tensor":
		return GetItem.apply(self, index=index)

	def sum(self, axis: Optional[int] = None, keepdims: bool = False) -> "Tensor":
		return Sum.apply(self, axis=axis, keepdims=keepdims)

	def mean(self, axis: Optional[int] = None, keepdims: bool = False) -> "Tensor":
		return Mean.apply(self, axis=axis, keepdims=keepdims)

	def reshape(self, *shape: int) -> "Tensor":
		return Reshape.apply(self, shape=shape)

	def transpose(self, *axes: int) -> "Tensor":
		return Transpose.apply(self, axes=axes or None)


def as_tensor(value: Any) -> Tensor:
	return value if isinstance(value, Tensor) else Tensor(value)


def zeros(*shape: int) -> Tensor:
	return Tensor(np.zeros(shape, dtype=_DEFAULT_DTYPE))


# --- Operaciones elementales ---

class Add(Function):
	def forward(self, a: np.ndarray, b: np.ndarray) -> np.ndarray:
		self.shapes = (a.shape, b.shape)
		return a + b

	def backward(self, grad: np.ndarray) -> Tuple[np.ndarray, np.ndarray]:
		return self.unbroadcast(grad, self.shapes[0]), self.unbroadcast(grad, self.shapes[1])


class Mul(Function):
	def forward(self, a: np.ndarray, b: np.ndarray) -> np.ndarray:
		self.a, self.b = a, b
		return a * b

	def backward(self, grad: np.ndarray) -> Tuple[np.ndarray, np.ndarray]:
		return (
			self.unbroadcast(grad * self.b, self.a.shape),
			self.unbroadcast(grad * self.a, self.b.shape),
		)


class Scale(Function):
	def forward(self, a: np.ndarray, *, factor: float) -> np.ndarray:
		self.factor = factor
		return a * factor

	def backward(self, grad: np.ndarray) -> Tuple[np.ndarray]:
		return (grad * self.factor,)


class Neg(Function):
	def forward(self, a: np.ndarray) -> np.ndarray:
		return -a

	def backward(self, grad: np.ndarray) -> Tuple[np.ndarray]:
		return (-grad,)


class Reciprocal(Function):
	def forward(self, a: np.ndarray) -> np.ndarray:
		self.out = 1.0 / a
		return self.out

	def backward(self, grad: np.ndarray) -> Tuple[np.ndarray]:
		return (-grad * self.out * self.out,)


class Tanh(Function):
	def forward(self, a: np.ndarray) -> np.ndarray:
		self.out = np.tanh(a)
		return self.out

	def backward(self, grad: np.ndarray) -> Tuple[np.ndarray]:
		return (grad * (1.0 - self.out * self.out),)


class Gelu(Function):
	"""GELU con la aproximación tanh."""

	_C = float(np.sqrt(2.0 / np.pi))

	def forward(self, a: np.ndarray) -> np.ndarray:
		self.a = a
		self.t = np.tanh(self._C * (a + 0.044715 * a ** 3))
		return 0.5 * a * (1.0 + self.t)

	def backward(self, grad: np.ndarray) -> Tuple[np.ndarray]:
		a, t = self.a, self.t
		inner = self._C * (1.0 + 3.0 * 0.044715 * a * a)
		return (grad * (0.5 * (1.0 + t) + 0.5 * a * (1.0 - t * t) * inner),)


# --- Álgebra y forma ---

class MatMul(Function):
	def forward(self, a: np.ndarray, b: np.ndarray) -> np.ndarray:
		self.a, self.b = a, b
		return a @ b

	def backward(self, grad: np.ndarray) -> Tuple[np.ndarray, np.ndarray]:
		grad_a = grad @ np.swapaxes(self.b, -1, -2)
		grad_b = np.swapaxes(self.a, -1, -2) @ grad
		return self.unbroadcast(grad_a, self.a.shape), self.unbroadcast(grad_b, self.b.shape)


class Sum(Function):
	def forward(self, a: np.ndarray, *, axis: Optional[int], keepdims: bool) -> np.ndarray:
		self.shape, self.axis, self.keepdims = a.shape, axis, keepdims
		return np.sum(a, axis=axis, keepdims=keepdims)

	def backward(self, grad: np.ndarray) -> Tuple[np.ndarray]:
		if self.axis is not None and not self.keepdims:
			grad = np.expand_dims(grad, self.axis)
		return (np.broadcast_to(grad, self.shape).copy(),)


class Mean(Function):
	def forward(self, a: np.ndarray, *, axis: Optional[int], keepdims: bool) -> np.ndarray:
		self.shape, self.axis, self.keepdims = a.shape, axis, keepdims
		self.count = a.size if axis is None else a.shape[axis]
		return np.mean(a, axis=axis, keepdims=keepdims)

	def backward(self, grad: np.ndarray) -> Tuple[np.ndarray]:
		if self.axis is not None and not self.keepdims:
			grad = np.expand_dims(grad, self.axis)
		return (np.broadcast_to(grad / self.count, self.shape).copy(),)


class Reshape(Function):
	def forward(self, a: np.ndarray, *, shape: Tuple[int, ...]) -> np.ndarray:
		self.shape = a.shape
		return a.reshape(shape)

	def backward(self, grad: np.ndarray) -> Tuple[np.ndarray]:
		return (grad.reshape(self.shape),)


class Transpose(Function):
	def forward(self, a: np.ndarray, *, axes: Optional[Tuple[int, ...]]) -> np.ndarray:
		self.axes = axes
		return np.transpose(a, axes)

	def backward(self, grad: np.ndarray) -> Tuple[np.ndarray]:
		if self.axes is None:
			return (np.transpose(grad),)
		return (np.transpose(grad, np.argsort(self.axes)),)


class GetItem(Function):
	def forward(self, a: np.ndarray, *, index: Any) -> np.ndarray:
		self.shape, self.index = a.shape, index
		return a[index]

	def backward(self, grad: np.ndarray) -> Tuple[np.ndarray]:
		out = np.zeros(self.shape, dtype=grad.dtype)
		np.add.at(out, self.index, grad)
		return (out,)


class Concat(Function):
	def forward(self, *arrays: np.ndarray, axis: int) -> np.ndarray:
		self.axis = axis
		self.sizes = [arr.shape[axis] for arr in arrays]
		return np.concatenate(arrays, axis=axis)

	def backward(self, grad: np.ndarray) -> Tuple[np.ndarray, ...]:
		bounds = np.cumsum(self.sizes)[:-1]
		return tuple(np.split(grad, bounds, axis=self.axis))


class EmbeddingLookup(Function):
	def forward(self, table: np.ndarray, *, indices: np.ndarray) -> np.ndarray:
		self.shape, self.indices = table.shape, indices
		return table[indices]

	def backward(self, grad: np.ndarray) -> Tuple[np.ndarray]:
		out = np.zeros(self.shape, dtype=grad.dtype)
		np.add.at(out, self.indices, grad)
		return (out,)


# --- Normalización y probabilidades ---

class Softmax(Function):
	def forward(self, a: np.ndarray, *, axis: int) -> np.ndarray:
		self.axis = axis
		shifted = a - np.max(a, axis=axis, keepdims=True)
		exp = np.exp(shifted)
		self.out = exp / np.sum(exp, axis=axis, keepdims=True)
		return self.out

	def backward(self, grad: np.ndarray) -> Tuple[np.ndarray]:
		y = self.out
		return (y * (grad - np.sum(grad * y, axis=self.axis, keepdims=True)),)


class LogSoftmax(Function):
	def forward(self, a: np.ndarray, *, axis: int) -> np.ndarray:
		self.axis = axis
		shifted = a - np.max(a, axis=axis, keepdims=True)
		self.out = shifted - np.log(np.sum(np.exp(shifted), axis=axis, keepdims=True))
		return self.out

	def backward(self, grad: np.ndarray) -> Tuple[np.ndarray]:
		soft = np.exp(self.out)
		return (grad - soft * np.sum(grad, axis=self.axis, keepdims=True),)


class CrossEntropy(Function):
	"""NLL de los objetivos sobre logits [n×V]; IGNORE_INDEX no contribuye."""

	def forward(self, logits: np.ndarray, *, targets: np.ndarray, reduction: str) -> np.ndarray:
		shifted = logits - np.max(logits, axis=-1, keepdims=True)
		log_probs = shifted - np.log(np.sum(np.exp(shifted), axis=-1, keepdims=True))
		self.log_probs = log_probs
		self.mask = targets != IGNORE_INDEX
		self.safe_targets = np.where(self.mask, targets, 0)
		rows = np.arange(logits.shape[0])
		picked = log_probs[rows, self.safe_targets] * self.mask
		count = int(self.mask.sum())
		self.divisor = float(max(count, 1)) if reduction == "mean" else 1.0
		return np.asarray(-picked.sum() / self.divisor, dtype=logits.dtype)

	def backward(self, grad: np.ndarray) -> Tuple[np.ndarray]:
		soft = np.exp(self.log_probs)
		rows = np.arange(soft.shape[0])
		soft[rows, self.safe_targets] -= 1.0
		soft *= self.mask[:, None]
		return (soft * (grad / self.divisor),)


class LayerNorm(Function):
	def forward(self, x: np.ndarray, gain: np.ndarray, bias: np.ndarray, *, eps: float) -> np.ndarray:
		mu = x.mean(axis=-1, keepdims=True)
		var = ((x - mu) ** 2).mean(axis=-1, keepdims=True)
		self.inv = 1.0 / np.sqrt(var + eps)
		self.xhat = (x - mu) * self.inv
		self.gain = gain
		self.lead_axes = tuple(range(x.ndim - 1))
		return self.xhat * gain + bias

	def backward(self, grad: np.ndarray) -> Tuple[np.ndarray, np.ndarray, np.ndarray]:
		n = self.xhat.shape[-1]
		dxhat = grad * self.gain
		dx = (self.inv / n) * (
			n * dxhat
			- dxhat.sum(axis=-1, keepdims=True)
			- self.xhat * (dxhat * self.xhat).sum(axis=-1, keepdims=True)
		)
		dgain = (grad * self.xhat).sum(axis=self.lead_axes)
		dbias = grad.sum(axis=self.lead_axes)
		return dx, dgain, dbias


class Dropout(Function):
	def forward(self, a: np.ndarray, *, rate: float, rng: np.random.Generator) -> np.ndarray:
		self.mask = (rng.random(a.shape) >= rate).astype(a.dtype) / (1.0 - rate)
		return a * self.mask

	def backward(self, grad: np.ndarray) -> Tuple[np.ndarray]:
		return (grad * self.mask,)


class Im2Col(Function):
	"""Despliega ventanas k×k (padding 'same') de un mapa [C, H, W] en filas [H·W, C·k·k]."""

	def forward(self, x: np.ndarray, *, kernel: int) -> np.ndarray:
		channels, height, width = x.shape
		pad = kernel // 2
		self.shape, self.kernel, self.pad = x.shape, kernel, pad
		padded = np.pad(x, ((0, 0), (pad, pad), (pad, pad)))
		cols = np.empty((channels, kernel, kernel, height, width), dtype=x.dtype)
		for i in range(kernel):
			for j in range(kernel):
				cols[:, i, j] = padded[:, i:i + height, j:j + width]
		return cols.transpose(3, 4, 0, 1, 2).reshape(height * width, channels * kernel * kernel)

	def backward(self, grad: np.ndarray) -> Tuple[np.ndarray]:
		channels, height, width = self.shape
		k, pad = self.kernel, self.pad
		cols = grad.reshape(height, width, channels, k, k).transpose(2, 3, 4, 0, 1)
		padded = np.zeros((channels, height + 2 * pad, width + 2 * pad), dtype=grad.dtype)
		for i in range(k):
			for j in range(k):
				padded[:, i:i + height, j:j + width] += cols[:, i, j]
		return (padded[:, pad:pad + height, pad:pad + width],)


# --- API funcional ---

def matmul(a: Tensor, b: Tensor) -> Tensor:
	"""Producto matricial; falla con ShapeError si las dimensiones internas no coinciden."""
	if a.ndim < 2 or b.ndim < 2 or a.shape[-1] != b.shape[-2]:
		raise ShapeError(f"matmul: dimensiones incompatibles {a.shape} x {b.shape}")
	return MatMul.apply(a, b)


def softmax(x: Tensor, axis: int = -1) -> Tensor:
	return Softmax.apply(x, axis=axis)


def log_softmax(x: Tensor, axis: int = -1) -> Tensor:
	return LogSoftmax.apply(x, axis=axis)


def tanh(x: Tensor) -> Tensor:
	return Tanh.apply(x)


def gelu(x: Tensor) -> Tensor:
	return Gelu.apply(x)


def concat(tensors: Sequence[Tensor], axis: int = 0) -> Tensor:
	if not tensors:
		raise ShapeError("concat: lista vacía de tensores")
	return Concat.apply(*tensors, axis=axis)


def embedding(table: Tensor, indices: ArrayLike) -> Tensor:
	idx = np.asarray(indices, dtype=np.int64)
	if idx.size and (idx.min() < 0 or idx.max() >= table.shape[0]):
		raise TargetIndexError(f"embedding: índice fuera de rango para tabla {table.shape}")
	return EmbeddingLookup.apply(table, indices=idx)


def linear(x: Tensor, weight: Tensor, bias: Optional[Tensor] = None) -> Tensor:
	out = matmul(x, weight)
	return out + bias if bias is not None else out


def layer_norm(x: Tensor, gain: Tensor, bias: Tensor, eps: float = 1e-5) -> Tensor:
	return LayerNorm.apply(x, gain, bias, eps=eps)


def dropout(x: Tensor, rate: float, rng: np.random.Generator, training: bool) -> Tensor:
	if not training or rate <= 0.0:
		return x
	return Dropout.apply(x, rate=rate, rng=rng)


def im2col(x: Tensor, kernel: int) -> Tensor:
	if x.ndim != 3:
		raise ShapeError(f"im2col espera [C, H, W], recibido {x.shape}")
	return Im2Col.apply(x, kernel=kernel)


def masked_fill_additive(scores: Tensor, mask: Optional[np.ndarray]) -> Tensor:
	"""Suma la máscara aditiva (0 o MASK_VALUE) antes del softmax."""
	if mask is None:
		return scores
	return scores + Tensor(mask, dtype=scores.dtype)


def causal_mask(size: int) -> np.ndarray:
	"""Máscara aditiva triangular: la posición t solo ve posiciones <= t."""
	upper = np.triu(np.ones((size, size), dtype=bool), k=1)
	return np.where(upper, MASK_VALUE, 0.0)


def cross_entropy(logits: Tensor, targets: ArrayLike, reduction: str = "mean") -> Tensor:
	"""Entropía cruzada de logits [n×V] frente a índices; IGNORE_INDEX se omite."""
	if logits.ndim != 2:
		raise ShapeError(f"cross_entropy espera logits [n×V], recibido {logits.shape}")
	tgt = np.asarray(targets, dtype=np.int64).reshape(-1)
	if tgt.shape[0] != logits.shape[0]:
		raise ShapeError(f"cross_entropy: {logits.shape[0]} filas de logits y {tgt.shape[0]} objetivos")
	valid = tgt[tgt != IGNORE_INDEX]
	if valid.size and (valid.min() < 0 or valid.max() >= logits.shape[1]):
		raise TargetIndexError(f"cross_entropy: objetivo fuera de rango [0, {logits.shape[1]})")
	if reduction not in ("mean", "sum"):
		raise ValueError(f"reducción desconocida: {reduction}")
	return CrossEntropy.apply(logits, targets=tgt, reduction=reduction)
