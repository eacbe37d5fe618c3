"""Pruebas de los bloques de red: atención, bloque transformer, convolución y Module."""

import numpy as np
import pytest

from src.domain.exceptions import ShapeError
from src.nn.layers import Conv2d, Linear, MultiHeadAttention, TransformerBlock, attention
from src.nn.module import Module
from src.nn.tensor import Tensor, causal_mask


def test_attention_weights_are_row_stochastic_and_causal() -> None:
	rng = np.random.default_rng(0)
	q = Tensor(rng.normal(size=(4, 8)))
	out, weights = attention(q, q, q, causal_mask(4))
	assert out.shape == (4, 8)
	assert np.allclose(weights.data.sum(axis=-1), 1.0)
	assert np.all(weights.data[np.triu_indices(4, k=1)] == 0.0)


def test_attention_single_key_returns_its_value() -> None:
	v = Tensor([[1.0, 2.0, 3.0]])
	out, _ = attention(Tensor(np.ones((2, 3))), Tensor(np.ones((1, 3))), v)
	assert np.allclose(out.data, [[1.0, 2.0, 3.0], [1.0, 2.0, 3.0]])


def test_multi_head_rejects_indivisible_hidden() -> None:
	with pytest.raises(ShapeError):
		MultiHeadAttention(10, 3, np.random.default_rng(0))


def test_multi_head_returns_one_weight_matrix_per_head() -> None:
	rng = np.random.default_rng(1)
	mha = MultiHeadAttention(8, 2, rng)
	out, weights = mha.forward_with_weights(Tensor(rng.normal(size=(3, 8))), Tensor(rng.normal(size=(5, 8))))
	assert out.shape == (3, 8)
	assert len(weights) == 2
	assert all(w.shape == (3, 5) for w in weights)


def test_transformer_block_is_causal_over_its_input() -> None:
	# Cambiar la última posición no altera las anteriores.
	rng = np.random.default_rng(2)
	block = TransformerBlock(8, 2, rng)
	cond = Tensor(rng.normal(size=(3, 8)))
	z = rng.normal(size=(4, 8))
	changed = z.copy()
	changed[-1] += 5.0
	first = block(Tensor(z), cond).data
	second = block(Tensor(changed), cond).data
	assert np.allclose(first[:3], second[:3])
	assert not np.allclose(first[3], second[3])


def test_transformer_block_rejects_empty_condition() -> None:
	block = TransformerBlock(8, 2, np.random.default_rng(0))
	with pytest.raises(ShapeError):
		block(Tensor(np.ones((2, 8))), Tensor(np.zeros((0, 8))))


def test_conv2d_keeps_spatial_size() -> None:
	conv = Conv2d(1, 4, np.random.default_rng(0))
	out = conv(Tensor(np.ones((1, 6, 6))))
	assert out.shape == (4, 6, 6)


class _Pair(Module):
	def __init__(self) -> None:
		rng = np.random.default_rng(0)
		self.first = Linear(2, 3, rng)
		self.stack = [[Linear(3, 3, rng, bias=False)], [Linear(3, 1, rng)]]


def test_module_names_are_hierarchical_and_stable() -> None:
	names = [name for name, _ in _Pair().named_parameters()]
	assert names == [
		"first.weight",
		"first.bias",
		"stack.0.0.weight",
		"stack.1.0.weight",
		"stack.1.0.bias",
	]


def test_module_counts_and_restores_parameters() -> None:
	model = _Pair()
	assert model.num_parameters() == 2 * 3 + 3 + 3 * 3 + 3 + 1
	state = model.state_dict()
	for param in model.parameters():
		param.data = param.data + 1.0
	model.load_state_dict(state)
	assert all(np.array_equal(param.data, state[name]) for name, param in model.named_parameters())


def test_freeze_removes_parameters_from_trainable_set() -> None:
	model = _Pair()
	model.first.freeze()
	trainable = [name for name, _ in model.trainable_parameters()]
	assert "first.weight" not in trainable
	assert "stack.0.0.weight" in trainable


def test_train_eval_propagates_to_nested_modules() -> None:
	model = _Pair()
	model.eval()
	assert all(not module.training for module in model.modules())
	model.train()
	assert model.stack[1][0].training


def test_multi_head_output_is_invariant_to_head_permutation() -> None:
	rng = np.random.default_rng(4)
	mha = MultiHeadAttention(8, 2, rng)
	x = Tensor(rng.normal(size=(3, 8)))
	mem = Tensor(rng.normal(size=(5, 8)))
	before = mha(x, mem).data.copy()
	# Intercambia las cabezas 0 y 1: bloques de columnas en W^Q/W^K/W^V y de filas en W^O.
	order = np.r_[4:8, 0:4]
	for weight in (mha.w_q, mha.w_k, mha.w_v):
		weight.data = weight.data[:, order]
	mha.w_o.data = mha.w_o.data[order, :]
	assert np.allclose(mha(x, mem).data, before)
