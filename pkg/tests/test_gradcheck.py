"""Verificación de gradientes: cada operación y los modelos completos contra diferencias finitas."""

from typing import Tuple

import numpy as np
import pytest

from src.nn.gradcheck import (
	TOLERANCE,
	check_gradients,
	model_cases,
	operation_cases,
	relative_error,
	run_gradcheck_suite,
)
from src.nn.tensor import Function, Tensor

OPERATION_CASES = {name: (loss_fn, leaves) for name, loss_fn, leaves in operation_cases(seed=0)}


class _WrongSquare(Function):
	# Derivada incorrecta a propósito: falta el factor 2.
	def forward(self, a: np.ndarray) -> np.ndarray:
		self.a = a
		return a * a

	def backward(self, grad: np.ndarray) -> Tuple[np.ndarray]:
		return (grad * self.a,)


def test_relative_error_uses_floor_for_tiny_values() -> None:
	assert relative_error(0.0, 0.0) == 0.0
	assert relative_error(1e-6, 0.0) == pytest.approx(1e-2)
	assert relative_error(2.0, 1.0) == pytest.approx(0.5)


@pytest.mark.parametrize("name", sorted(OPERATION_CASES))
def test_operation_gradients_match_finite_differences(name: str) -> None:
	loss_fn, leaves = OPERATION_CASES[name]
	result = check_gradients(name, loss_fn, leaves)
	assert result.n_checked > 0
	assert result.max_rel_error < TOLERANCE, f"{name}: {result.max_rel_error:.2e} en {result.worst_leaf}"


def test_model_gradients_match_finite_differences() -> None:
	names = []
	for name, loss_fn, leaves in model_cases(seed=0):
		result = check_gradients(name, loss_fn, leaves, max_coords=4)
		names.append(name)
		assert result.passed, f"{name}: {result.max_rel_error:.2e} en {result.worst_leaf}"
	assert names == ["dgn_attn", "dgn_cat", "baseline"]


def test_wrong_backward_is_detected() -> None:
	x = Tensor(np.array([0.5, -1.0, 2.0]), requires_grad=True)
	result = check_gradients("wrong_square", lambda: _WrongSquare.apply(x).sum(), [("x", x)])
	assert not result.passed
	assert result.max_rel_error == pytest.approx(0.5)


def test_suite_reports_every_case() -> None:
	results = run_gradcheck_suite(seed=1, max_coords=8, model_coords=2)
	assert len(results) == len(OPERATION_CASES) + 3
	assert all(result.passed for result in results)
