"""Pruebas de la fusión por fase, el clasificador de posición y los sub-generadores."""

import math

import numpy as np
import pytest

from src.domain.exceptions import ShapeError, TargetIndexError
from src.model.generator_ensemble import Decoder, GeneratorEnsemble, position_one_hot
from src.nn.layers import Embedding, Linear, TransformerBlock
from src.nn.tensor import Tensor

HIDDEN = 16


def _ensemble(fusion: str = "attn", n_indep: int = 1) -> GeneratorEnsemble:
	return GeneratorEnsemble(
		n_generators=3,
		vocab_size=12,
		hidden=HIDDEN,
		n_head=2,
		n_shared=1,
		n_indep=n_indep,
		max_positions=16,
		fusion=fusion,
		rng=np.random.default_rng(0),
	)


def _constituents():
	rng = np.random.default_rng(3)
	return (
		Tensor(rng.normal(size=(4, HIDDEN))),
		Tensor(rng.normal(size=(3, HIDDEN))),
		Tensor(rng.normal(size=(1, HIDDEN))),
	)


@pytest.mark.parametrize("fusion", ["cat", "attn"])
def test_memory_always_has_five_rows(fusion: str) -> None:
	ensemble = _ensemble(fusion)
	image, ingredients, phase = _constituents()
	feature = ensemble.fuse(image, ingredients, ensemble.position_feature(1).projected, phase)
	assert feature.memory.shape == (5, HIDDEN)
	assert feature.fused.shape == (1, HIDDEN)
	assert np.allclose(feature.memory.data[0], feature.fused.data[0])


def test_attention_fusion_weights_are_distributions() -> None:
	ensemble = _ensemble("attn")
	image, ingredients, phase = _constituents()
	feature = ensemble.fuse(image, ingredients, ensemble.position_feature(0).projected, phase)
	assert feature.image_weights.shape == (1, 4)
	assert feature.ingredient_weights.shape == (1, 3)
	assert feature.image_weights.data.sum() == pytest.approx(1.0)
	assert feature.ingredient_weights.data.sum() == pytest.approx(1.0)


def test_fusion_rejects_empty_constituent() -> None:
	ensemble = _ensemble("cat")
	image, _, phase = _constituents()
	with pytest.raises(ShapeError):
		ensemble.fuse(image, Tensor(np.zeros((0, HIDDEN))), ensemble.position_feature(0).projected, phase)


def test_untrained_position_classifier_is_uniform() -> None:
	ensemble = _ensemble("attn")
	image, ingredients, phase = _constituents()
	for index in range(3):
		feature = ensemble.fuse(image, ingredients, ensemble.position_feature(index).projected, phase)
		assert np.allclose(ensemble.position_classify(feature).data, 1.0 / 3.0)
		assert ensemble.position_loss(feature, index).item() == pytest.approx(math.log(3))


def test_position_one_hot_bounds() -> None:
	assert position_one_hot(2).tolist() == [0.0, 0.0, 1.0]
	with pytest.raises(TargetIndexError):
		position_one_hot(3)


def test_generators_share_trunk_but_not_independent_blocks() -> None:
	ensemble = _ensemble()
	first, second = ensemble.generator(0), ensemble.generator(1)
	assert first.blocks[0] is second.blocks[0]
	assert first.blocks[1] is not second.blocks[1]
	memory = Tensor(np.random.default_rng(4).normal(size=(5, HIDDEN)))
	logits_a = ensemble.generator_forward(0, [1, 5, 6], memory).data
	logits_b = ensemble.generator_forward(1, [1, 5, 6], memory).data
	assert logits_a.shape == (3, 12)
	assert not np.allclose(logits_a, logits_b)
	with pytest.raises(TargetIndexError):
		ensemble.generator(3)


def test_generation_loss_ignores_padding() -> None:
	ensemble = _ensemble()
	logits = Tensor(np.zeros((3, 12)))
	loss = ensemble.generation_loss(logits, [5, 0, 6], pad_id=0)
	assert loss.item() == pytest.approx(2 * math.log(12))


def test_greedy_decoding_stops_on_stop_token_or_limit() -> None:
	ensemble = _ensemble()
	memory = Tensor(np.zeros((5, HIDDEN)))
	ensemble.out.bias.data[3] = 1e6
	assert ensemble.decode_phase(0, memory, start_id=1, stop_ids=(3, 2), max_tokens=10) == []
	ensemble.out.bias.data[3] = 0.0
	ensemble.out.bias.data[7] = 1e6
	assert ensemble.decode_phase(2, memory, start_id=1, stop_ids=(3, 2), max_tokens=4) == [7, 7, 7, 7]


def test_unknown_fusion_mode_is_rejected() -> None:
	with pytest.raises(ValueError):
		_ensemble("sum")


def _memory(seed: int) -> Tensor:
	return Tensor(np.random.default_rng(seed).normal(size=(5, HIDDEN)))


def test_generator_forward_is_causal() -> None:
	ensemble = _ensemble()
	memory = _memory(1)
	a = ensemble.generator_forward(0, [1, 5, 6, 7], memory).data
	b = ensemble.generator_forward(0, [1, 5, 9, 3], memory).data
	assert np.allclose(a[:2], b[:2])
	assert not np.allclose(a[2], b[2])


def _trunk_grads(ensemble: GeneratorEnsemble):
	return [param.grad.copy() for _, param in ensemble.shared[0].named_parameters()]


def test_shared_trunk_gradient_is_sum_of_phase_gradients() -> None:
	ensemble = _ensemble()
	phases = [(0, [1, 5, 6], [5, 6, 3], _memory(1)), (1, [1, 7, 8, 9], [7, 8, 9, 3], _memory(2))]

	def phase_loss(g_id, inputs, targets, memory):
		return ensemble.generation_loss(ensemble.generator_forward(g_id, inputs, memory), targets)

	ensemble.zero_grad()
	(phase_loss(*phases[0]) + phase_loss(*phases[1])).backward()
	joint = _trunk_grads(ensemble)
	separate = []
	for phase in phases:
		ensemble.zero_grad()
		phase_loss(*phase).backward()
		separate.append(_trunk_grads(ensemble))
		# La fase del generador 0 no toca los bloques propios del generador 1.
		if phase[0] == 0:
			assert all(param.grad is None for _, param in ensemble.independent[1][0].named_parameters())
	for total, first, second in zip(joint, *separate):
		assert np.allclose(total, first + second)


def test_single_generator_ensemble_equals_monolithic_decoder() -> None:
	ensemble = GeneratorEnsemble(
		n_generators=1,
		vocab_size=12,
		hidden=HIDDEN,
		n_head=2,
		n_shared=1,
		n_indep=1,
		max_positions=16,
		fusion="cat",
		rng=np.random.default_rng(0),
	)
	rng = np.random.default_rng(9)
	decoder = Decoder(
		token_embed=Embedding(12, HIDDEN, rng),
		pos_embed=Embedding(16, HIDDEN, rng),
		blocks=[TransformerBlock(HIDDEN, 2, rng), TransformerBlock(HIDDEN, 2, rng)],
		out=Linear(HIDDEN, 12, rng),
	)
	ensemble.token_embed.load_state_dict(decoder.token_embed.state_dict())
	ensemble.pos_embed.load_state_dict(decoder.pos_embed.state_dict())
	ensemble.shared[0].load_state_dict(decoder.blocks[0].state_dict())
	ensemble.independent[0][0].load_state_dict(decoder.blocks[1].state_dict())
	ensemble.out.load_state_dict(decoder.out.state_dict())
	memory = _memory(3)
	tokens = [1, 4, 7, 2]
	assert np.allclose(ensemble.generator_forward(0, tokens, memory).data, decoder.logits(tokens, memory).data)
