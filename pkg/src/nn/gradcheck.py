"""Comparación de gradientes analíticos contra diferencias finitas centrales.

error relativo = |a − n| / max(|a|, |n|, 1e-4), evaluado en float64 sobre a lo
sumo `max_coords` coordenadas por hoja.
"""

from __future__ import annotations

import time
from dataclasses import dataclass
from typing import Callable, Iterator, List, Sequence, Tuple

import numpy as np
import structlog

from src.application.training import batch_losses, total_loss
from src.domain.entities import RESERVED_TOKENS, PhaseSpan, RecipeRecord, Vocabulary
from src.infrastructure.config import ModelConfig
from src.model.dgn import DEFAULT_LAMBDAS, build_model
from src.nn.layers import Conv2d, MultiHeadAttention, TransformerBlock
from src.nn.tensor import (
	Tensor,
	causal_mask,
	concat,
	cross_entropy,
	dropout,
	embedding,
	gelu,
	get_default_dtype,
	layer_norm,
	log_softmax,
	matmul,
	no_grad,
	set_default_dtype,
	softmax,
	tanh,
)

logger = structlog.get_logger()

DEFAULT_STEP = 1e-5
ERROR_FLOOR = 1e-4
TOLERANCE = 1e-4

LossFn = Callable[[], Tensor]
Leaves = Sequence[Tuple[str, Tensor]]


@dataclass
class GradCheckResult:
	name: str
	max_rel_error: float
	n_checked: int
	worst_leaf: str = ""

	@property
	def passed(self) -> bool:
		return self.max_rel_error < TOLERANCE


def relative_error(analytic: float, numeric: float) -> float:
	return abs(analytic - numeric) / max(abs(analytic), abs(numeric), ERROR_FLOOR)


def check_gradients(
	name: str,
	loss_fn: LossFn,
	leaves: Leaves,
	*,
	h: float = DEFAULT_STEP,
	max_coords: int = 64,
	seed: int = 0,
) -> GradCheckResult:
	for _, leaf in leaves:
		leaf.grad = None
	loss_fn().backward()
	analytic = {
		leaf_name: (leaf.grad.copy() if leaf.grad is not None else np.zeros_like(leaf.data))
		for leaf_name, leaf in leaves
	}
	rng = np.random.default_rng(seed)
	worst, worst_leaf, checked = 0.0, "", 0
	with no_grad():
		for leaf_name, leaf in leaves:
			leaf.data = np.ascontiguousarray(leaf.data)
			flat = leaf.data.reshape(-1)
			coords = np.arange(flat.size)
			if flat.size > max_coords:
				coords = np.sort(rng.choice(flat.size, size=max_coords, replace=False))
			for idx in coords:
				original = flat[idx]
				flat[idx] = original + h
				plus = float(loss_fn().data)
				flat[idx] = original - h
				minus = float(loss_fn().data)
				flat[idx] = original
				numeric = (plus - minus) / (2.0 * h)
				err = relative_error(float(analytic[leaf_name].reshape(-1)[idx]), numeric)
				checked += 1
				if err > worst:
					worst, worst_leaf = err, leaf_name
	return GradCheckResult(name=name, max_rel_error=worst, n_checked=checked, worst_leaf=worst_leaf)


def _leaf(rng: np.random.Generator, *shape: int, positive: bool = False) -> Tensor:
	data = rng.normal(0.0, 1.0, size=shape)
	if positive:
		data = 1.5 + np.abs(data)
	return Tensor(data, requires_grad=True)


def _weighted(out: Tensor, rng_seed: int = 99) -> Tensor:
	"""Reduce a escalar con pesos fijos para que cada salida aporte distinto."""
	weights = np.random.default_rng(rng_seed).normal(0.0, 1.0, size=out.shape)
	return (out * Tensor(weights)).sum()


def operation_cases(seed: int = 0) -> Iterator[Tuple[str, LossFn, Leaves]]:
	rng = np.random.default_rng(seed)

	a, b = _leaf(rng, 3, 4), _leaf(rng, 4, 2)
	yield "matmul", lambda: _weighted(matmul(a, b)), [("a", a), ("b", b)]

	x, bias = _leaf(rng, 3, 4), _leaf(rng, 4)
	yield "add_broadcast", lambda: _weighted(x + bias), [("x", x), ("bias", bias)]

	p, q = _leaf(rng, 3, 4), _leaf(rng, 3, 4, positive=True)
	yield "mul_div", lambda: _weighted(p * q - p / q), [("p", p), ("q", q)]

	t = _leaf(rng, 2, 5)
	yield "tanh", lambda: _weighted(tanh(t)), [("t", t)]
	yield "gelu", lambda: _weighted(gelu(t)), [("t", t)]
	yield "softmax", lambda: _weighted(softmax(t, axis=-1)), [("t", t)]
	yield "log_softmax", lambda: _weighted(log_softmax(t, axis=0)), [("t", t)]

	s = _leaf(rng, 3, 4)
	yield "sum_mean", lambda: _weighted(s.sum(axis=0)) + _weighted(s.mean(axis=1, keepdims=True)), [("s", s)]
	yield "reshape_transpose_getitem", lambda: _weighted(s.reshape(4, 3).transpose()[1:3]), [("s", s)]

	c1, c2 = _leaf(rng, 2, 3), _leaf(rng, 2, 3)
	yield "concat", lambda: _weighted(concat([c1, c2], axis=0)) + _weighted(concat([c1, c2], axis=-1)), [
		("c1", c1),
		("c2", c2),
	]

	table = _leaf(rng, 6, 4)
	yield "embedding", lambda: _weighted(embedding(table, [1, 3, 3, 0])), [("table", table)]

	ln_x, gain, beta = _leaf(rng, 3, 6), _leaf(rng, 6), _leaf(rng, 6)
	yield "layer_norm", lambda: _weighted(layer_norm(ln_x, gain, beta)), [("x", ln_x), ("gain", gain), ("bias", beta)]

	logits = _leaf(rng, 4, 5)
	yield "cross_entropy_mean", lambda: cross_entropy(logits, [0, 4, -100, 2]), [("logits", logits)]
	yield "cross_entropy_sum", lambda: cross_entropy(logits, [1, 1, 3, 2], reduction="sum"), [("logits", logits)]

	d = _leaf(rng, 4, 4)
	yield "dropout", lambda: _weighted(dropout(d, 0.3, np.random.default_rng(3), True)), [("d", d)]

	conv = Conv2d(2, 3, rng)
	image = _leaf(rng, 2, 5, 5)
	yield "conv2d_im2col", lambda: _weighted(conv(image)), [("image", image)] + list(conv.named_parameters())

	mha = MultiHeadAttention(8, 2, rng)
	z, mem = _leaf(rng, 4, 8), _leaf(rng, 3, 8)
	yield "multi_head_causal", lambda: _weighted(mha(z, z, causal_mask(4))), [("z", z)] + list(mha.named_parameters())
	yield "multi_head_cross", lambda: _weighted(mha(z, mem)), [("z", z), ("mem", mem)] + list(mha.named_parameters())

	block = TransformerBlock(8, 2, rng)
	yield "transformer_block", lambda: _weighted(block(z, mem)), [("z", z), ("mem", mem)] + list(block.named_parameters())


def model_cases(seed: int = 0) -> Iterator[Tuple[str, LossFn, Leaves]]:
	"""DGN completo con H=16, dos recetas de dos fases, en ambos modos de fusión, y la línea base."""
	rng = np.random.default_rng(seed)
	records = [
		RecipeRecord(
			id=f"gc-{idx}",
			ingredients=("onion", "oil", "salt"),
			steps=(("chop", "the", "onion", "."), ("fry", "the", "onion", "in", "oil", ".")),
			image_feat=tuple(rng.normal(0.0, 1.0, size=8).tolist()),
			phases=(PhaseSpan(0, 1), PhaseSpan(1, 2)),
			pseudo_labels=labels,
		)
		for idx, labels in enumerate(((0, 1), (2, 1)))
	]
	words = sorted({token for record in records for step in record.steps for token in step} | set(records[0].ingredients))
	vocab = Vocabulary(list(RESERVED_TOKENS) + words)
	for kind, fusion in (("dgn", "attn"), ("dgn", "cat"), ("baseline", "attn")):
		config = ModelConfig(
			model_kind=kind,
			hidden=16,
			n_head=2,
			n_layer=1,
			n_shared=1,
			n_indep=1,
			fusion=fusion,
			image_raw_dim=8,
			max_phase_tokens=12,
			max_recipe_tokens=24,
			max_positions=32,
		)
		model = build_model(config, vocab, seed=seed)
		yield (
			f"{kind}_{fusion}" if kind == "dgn" else kind,
			lambda model=model: total_loss(batch_losses(model, records, DEFAULT_LAMBDAS)),
			model.trainable_parameters(),
		)


def run_gradcheck_suite(*, seed: int = 0, max_coords: int = 64, model_coords: int = 8) -> List[GradCheckResult]:
	"""Corre todos los casos en float64 y restaura la precisión previa."""
	previous = get_default_dtype()
	set_default_dtype(np.float64)
	started = time.perf_counter()
	results: List[GradCheckResult] = []
	try:
		for name, loss_fn, leaves in operation_cases(seed):
			results.append(check_gradients(name, loss_fn, leaves, max_coords=max_coords, seed=seed))
		for name, loss_fn, leaves in model_cases(seed):
			results.append(check_gradients(name, loss_fn, leaves, max_coords=model_coords, seed=seed))
	finally:
		set_default_dtype(previous)
	for result in results:
		log = logger.info if result.passed else logger.warning
		log("gradcheck: caso", case=result.name, max_rel_error=result.max_rel_error, checked=result.n_checked)
	logger.info("gradcheck: suite completada", cases=len(results), seconds=round(time.perf_counter() - started, 2))
	return results
