"""Pruebas de los codificadores de imagen e ingredientes."""

import numpy as np
import pytest

from src.domain.exceptions import ShapeError
from src.model.encoders import ImageEncoder, IngredientEncoder, build_condition
from src.nn.tensor import Tensor


def _image_encoder() -> ImageEncoder:
	return ImageEncoder(raw_dim=8, hidden=16, rng=np.random.default_rng(0), conv_channels=4, regions=2)


def test_image_vector_maps_to_one_row() -> None:
	feature = _image_encoder()(image_feat=np.ones(8))
	assert feature.rows.shape == (1, 16)
	assert np.allclose(feature.pooled.data, feature.rows.data)


def test_image_grid_yields_one_row_per_region() -> None:
	feature = _image_encoder()(image_grid=np.random.default_rng(1).normal(size=(8, 8)))
	assert feature.rows.shape == (4, 16)
	assert np.allclose(feature.pooled.data, feature.rows.data.mean(axis=0, keepdims=True))


@pytest.mark.parametrize(
	"kwargs",
	[
		{},
		{"image_feat": np.ones(8), "image_grid": np.ones((8, 8))},
		{"image_feat": np.ones(5)},
		{"image_grid": np.ones((7, 8))},
	],
)
def test_image_encoder_rejects_bad_inputs(kwargs) -> None:
	with pytest.raises(ShapeError):
		_image_encoder()(**kwargs)


def test_ingredient_pooling_is_permutation_invariant() -> None:
	encoder = IngredientEncoder(vocab_size=20, hidden=16, rng=np.random.default_rng(0))
	first = encoder([5, 6, 7, 8])
	second = encoder([8, 6, 5, 7])
	assert first.rows.shape == (4, 16)
	assert np.allclose(first.pooled.data, second.pooled.data)


def test_ingredients_are_truncated_and_empty_list_uses_unk() -> None:
	encoder = IngredientEncoder(vocab_size=20, hidden=16, rng=np.random.default_rng(0), max_tokens=3, unk_id=4)
	assert encoder(list(range(5, 15))).rows.shape == (3, 16)
	assert np.allclose(encoder([]).rows.data, encoder([4]).rows.data)


def test_build_condition_stacks_image_then_ingredients() -> None:
	image = Tensor(np.zeros((1, 16)))
	ingredients = Tensor(np.ones((3, 16)))
	f_kv = build_condition(image, ingredients, 16)
	assert f_kv.shape == (4, 16)
	assert np.all(f_kv.data[0] == 0.0) and np.all(f_kv.data[1:] == 1.0)
	with pytest.raises(ShapeError):
		build_condition(image, Tensor(np.ones((3, 8))), 16)
