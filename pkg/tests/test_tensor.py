"""Pruebas del núcleo tensorial con diferenciación automática."""

import math

import numpy as np
import pytest

from src.domain.exceptions import ShapeError, TargetIndexError
from src.nn.tensor import (
	IGNORE_INDEX,
	MASK_VALUE,
	Tensor,
	causal_mask,
	concat,
	cross_entropy,
	embedding,
	get_default_dtype,
	matmul,
	no_grad,
	set_default_dtype,
	softmax,
)


def test_matmul_hand_example_and_identity() -> None:
	# [[1,2],[3,4]] × [[5,6],[7,8]] = [[19,22],[43,50]] y I₂·A = A.
	a = Tensor([[1.0, 2.0], [3.0, 4.0]])
	b = Tensor([[5.0, 6.0], [7.0, 8.0]])
	assert np.array_equal(matmul(a, b).data, np.array([[19.0, 22.0], [43.0, 50.0]]))
	assert np.array_equal(matmul(Tensor(np.eye(2)), a).data, a.data)


def test_matmul_shape_mismatch_names_both_shapes() -> None:
	with pytest.raises(ShapeError) as excinfo:
		matmul(Tensor(np.ones((2, 3))), Tensor(np.ones((2, 3))))
	assert "(2, 3)" in str(excinfo.value)


def test_grad_of_sum_of_product_is_ones_times_b_transpose() -> None:
	rng = np.random.default_rng(0)
	a = Tensor(rng.normal(size=(3, 4)), requires_grad=True)
	b = Tensor(rng.normal(size=(4, 2)), requires_grad=True)
	matmul(a, b).sum().backward()
	assert np.allclose(a.grad, np.ones((3, 2)) @ b.data.T)
	assert np.allclose(b.grad, a.data.T @ np.ones((3, 2)))


def test_softmax_rows_sum_to_one_and_are_shift_invariant() -> None:
	x = Tensor([[1.0, 2.0, 3.0], [1000.0, 1001.0, 1002.0]])
	out = softmax(x, axis=-1).data
	assert np.allclose(out.sum(axis=-1), 1.0)
	assert np.allclose(out[0], out[1])


def test_softmax_with_additive_mask_zeroes_masked_positions() -> None:
	scores = Tensor(np.zeros((3, 3)) + causal_mask(3))
	weights = softmax(scores, axis=-1).data
	assert np.all(weights[np.triu_indices(3, k=1)] == 0.0)
	assert np.allclose(weights[2], [1 / 3, 1 / 3, 1 / 3])
	assert causal_mask(2)[0, 1] == MASK_VALUE


def test_cross_entropy_uniform_logits_is_log_vocab() -> None:
	logits = Tensor(np.zeros((4, 50)))
	loss = cross_entropy(logits, [0, 10, 20, 49])
	assert loss.item() == pytest.approx(math.log(50), abs=1e-12)


def test_cross_entropy_ignores_padding_and_sum_reduction() -> None:
	logits = Tensor(np.zeros((3, 5)))
	mean = cross_entropy(logits, [1, IGNORE_INDEX, 2])
	total = cross_entropy(logits, [1, IGNORE_INDEX, 2], reduction="sum")
	assert mean.item() == pytest.approx(math.log(5))
	assert total.item() == pytest.approx(2 * math.log(5))


def test_cross_entropy_rejects_out_of_range_target() -> None:
	with pytest.raises(TargetIndexError):
		cross_entropy(Tensor(np.zeros((2, 3))), [0, 3])


def test_embedding_rejects_out_of_range_index() -> None:
	with pytest.raises(TargetIndexError):
		embedding(Tensor(np.zeros((4, 2))), [4])


def test_embedding_gradient_accumulates_repeated_rows() -> None:
	table = Tensor(np.ones((4, 2)), requires_grad=True)
	embedding(table, [1, 1, 3]).sum().backward()
	assert np.array_equal(table.grad, np.array([[0, 0], [2, 2], [0, 0], [1, 1]], dtype=float))


def test_backward_requires_scalar() -> None:
	x = Tensor(np.ones((2, 2)), requires_grad=True)
	with pytest.raises(ShapeError):
		(x * 2.0).backward()


def test_leaf_gradients_accumulate_until_zero_grad() -> None:
	x = Tensor([2.0, 3.0], requires_grad=True)
	(x * x).sum().backward()
	(x * x).sum().backward()
	assert np.array_equal(x.grad, np.array([8.0, 12.0]))
	x.zero_grad()
	assert x.grad is None


def test_shared_subexpression_gradient_is_summed_once_per_path() -> None:
	x = Tensor([1.5], requires_grad=True)
	y = x * x
	(y + y).sum().backward()
	assert x.grad[0] == pytest.approx(4 * 1.5)


def test_no_grad_does_not_record_graph() -> None:
	x = Tensor([1.0], requires_grad=True)
	with no_grad():
		y = x * 3.0
	assert not y.requires_grad


def test_concat_splits_gradient_back() -> None:
	a = Tensor(np.ones((1, 2)), requires_grad=True)
	b = Tensor(np.ones((2, 2)), requires_grad=True)
	out = concat([a, b], axis=0)
	(out * Tensor([[1.0, 1.0], [2.0, 2.0], [3.0, 3.0]])).sum().backward()
	assert np.array_equal(a.grad, [[1.0, 1.0]])
	assert np.array_equal(b.grad, [[2.0, 2.0], [3.0, 3.0]])


def test_float32_precision_is_switchable() -> None:
	previous = get_default_dtype()
	try:
		set_default_dtype(np.float32)
		assert Tensor([1.0, 2.0]).dtype == np.float32
	finally:
		set_default_dtype(previous)
	assert Tensor([1.0]).dtype == previous
