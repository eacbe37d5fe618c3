"""Pruebas del predictor global de estructura."""

import numpy as np
import pytest

from src.domain.exceptions import TargetIndexError
from src.model.structure_predictor import StructurePredictor
from src.nn.tensor import Tensor, log_softmax

N_GENERATORS = 3


def _predictor(seed: int = 0) -> StructurePredictor:
	return StructurePredictor(
		n_generators=N_GENERATORS,
		hidden=16,
		n_head=2,
		n_layer=1,
		max_phases=3,
		rng=np.random.default_rng(seed),
	)


def _condition() -> Tensor:
	return Tensor(np.random.default_rng(5).normal(size=(3, 16)))


def test_special_label_ids_follow_generators() -> None:
	predictor = _predictor()
	assert (predictor.end_id, predictor.start_id, predictor.pad_id) == (3, 4, 5)
	assert predictor.targets_for([0, 2]) == [0, 2, 3]


def test_teacher_forcing_requires_start_and_bounded_length() -> None:
	predictor = _predictor()
	with pytest.raises(TargetIndexError):
		predictor.forward_teacher_forced(_condition(), [0, 1])
	with pytest.raises(TargetIndexError):
		predictor.forward_teacher_forced(_condition(), [predictor.start_id, 0, 1, 2, 0])
	with pytest.raises(TargetIndexError):
		predictor.forward_teacher_forced(_condition(), [predictor.start_id, 9])


def test_teacher_forced_rows_match_inputs() -> None:
	predictor = _predictor()
	prediction = predictor.forward_teacher_forced(_condition(), [predictor.start_id, 0, 1])
	assert prediction.logits.shape == (3, N_GENERATORS + 1)
	assert prediction.phase_vectors.shape == (3, 16)
	assert np.allclose(prediction.probabilities.data.sum(axis=-1), 1.0)


def test_structure_loss_skips_padding_rows() -> None:
	predictor = _predictor()
	prediction = predictor.forward_teacher_forced(_condition(), [predictor.start_id, 0, 1])
	loss = predictor.structure_loss(prediction, [0, predictor.pad_id, predictor.end_id])
	log_probs = log_softmax(prediction.logits).data
	expected = -(log_probs[0, 0] + log_probs[2, predictor.end_id])
	assert loss.item() == pytest.approx(expected)


def test_decode_returns_between_one_and_max_phases_labels() -> None:
	for seed in range(5):
		predictor = _predictor(seed)
		prediction = predictor.decode_structure(_condition())
		assert 1 <= len(prediction.labels) <= 3
		assert all(0 <= label < N_GENERATORS for label in prediction.labels)
		assert prediction.phase_vectors.shape == (len(prediction.labels), 16)


def test_immediate_end_falls_back_to_best_label() -> None:
	# Con [END] siempre ganador, se emite una sola etiqueta: la mejor entre las reales.
	predictor = _predictor()
	predictor.out.bias.data[predictor.end_id] = 1e6
	predictor.out.bias.data[2] = 50.0
	prediction = predictor.decode_structure(_condition())
	assert prediction.labels == [2]


def test_fallback_label_ends_decoding_even_if_later_steps_prefer_labels(monkeypatch) -> None:
	# [END] gana solo en el primer paso; después ganaría la etiqueta 1.
	predictor = _predictor()
	real_forward = predictor.forward_teacher_forced

	def forward(f_kv: Tensor, gold):
		prediction = real_forward(f_kv, gold)
		logits = np.zeros((len(gold), N_GENERATORS + 1))
		logits[:, 1] = 10.0
		logits[0, predictor.end_id] = 20.0
		logits[0, 0] = 15.0
		prediction.logits = Tensor(logits)
		return prediction

	monkeypatch.setattr(predictor, "forward_teacher_forced", forward)
	prediction = predictor.decode_structure(_condition())
	assert prediction.labels == [0]
	assert prediction.phase_vectors.shape == (1, 16)


def test_phase_vectors_are_causal_in_the_label_sequence() -> None:
	predictor = _predictor()
	condition = _condition()
	a = predictor.forward_teacher_forced(condition, [predictor.start_id, 0, 1, 2])
	b = predictor.forward_teacher_forced(condition, [predictor.start_id, 0, 2, 0])
	# Las filas 0 y 1 solo ven [START] y g_1, comunes a ambas secuencias.
	assert np.allclose(a.phase_vectors.data[:2], b.phase_vectors.data[:2])
	assert not np.allclose(a.phase_vectors.data[2], b.phase_vectors.data[2])


def test_decode_stops_at_max_phases_without_end() -> None:
	predictor = _predictor()
	predictor.out.bias.data[predictor.end_id] = -1e6
	predictor.out.bias.data[1] = 1e6
	assert predictor.decode_structure(_condition()).labels == [1, 1, 1]
