"""Pruebas del pseudo etiquetado de fases."""

from pathlib import Path

import numpy as np
import pytest

from src.application.corpus import with_phases
from src.application.phase_labeler import (
	VerbLexicon,
	assign_pseudo_labels,
	extract_verbs,
	load_verb_embeddings,
	phase_representation,
	phase_representations,
	train_verb_embeddings,
)
from src.domain.entities import KMeansModel, RecipeRecord
from src.domain.exceptions import CorpusFormatError, NotFittedError
from tests.factories import labeled_corpus

LEXICON = VerbLexicon(frozenset({"chop", "fry", "serve"}))
EMBEDDINGS = {"chop": np.array([1.0, 0.0]), "fry": np.array([0.0, 1.0]), "serve": np.array([-1.0, 0.0])}


def _record(steps) -> RecipeRecord:
	return with_phases(
		RecipeRecord(id="r", ingredients=("onion",), steps=tuple(tuple(s) for s in steps), image_feat=(0.0,))
	)


def test_extract_verbs_keeps_order_and_repeats() -> None:
	assert extract_verbs(["chop", "the", "onion", "then", "chop", "garlic"], LEXICON) == ["chop", "chop"]


def test_lexicon_from_file_and_empty_lexicon(tmp_path: Path) -> None:
	path = tmp_path / "verbs.txt"
	path.write_text("Chop\n\n  fry \n", encoding="utf-8")
	lexicon = VerbLexicon.from_file(str(path))
	assert "chop" in lexicon and "fry" in lexicon
	assert len(lexicon.verbs) == 2
	with pytest.raises(CorpusFormatError):
		VerbLexicon(frozenset())
	assert "simmer" in VerbLexicon.default()


def test_representation_is_mean_of_verb_embeddings() -> None:
	rep = phase_representation("r#0", [["chop", "it"], ["fry", "it"]], LEXICON, EMBEDDINGS)
	assert rep.verb_count == 2
	assert np.allclose(rep.vector, [0.5, 0.5])


def test_phase_without_verbs_gives_zero_vector() -> None:
	rep = phase_representation("r#0", [["stir", "well"]], LEXICON, EMBEDDINGS)
	assert rep.verb_count == 0
	assert np.array_equal(rep.vector, np.zeros(2))


def test_verbs_without_embedding_are_skipped() -> None:
	rep = phase_representation("r#0", [["chop"], ["serve"]], LEXICON, {"chop": np.array([2.0, 2.0])})
	assert rep.verb_count == 1
	assert np.allclose(rep.vector, [2.0, 2.0])


def test_one_representation_per_phase() -> None:
	record = _record([["chop"], ["fry"], ["fry"], ["serve"]])
	reps = phase_representations([record], LEXICON, EMBEDDINGS)
	assert [rep.phase_id for rep in reps] == ["r#0", "r#1", "r#2"]
	assert np.allclose(reps[0].vector, [0.5, 0.5])


def test_assignment_requires_fitted_model_and_phases() -> None:
	record = _record([["chop"]])
	with pytest.raises(NotFittedError):
		assign_pseudo_labels([record], None, LEXICON, EMBEDDINGS)
	model = KMeansModel(centroids=np.array([[1.0, 0.0], [0.0, 1.0]]))
	unsegmented = RecipeRecord(id="x", ingredients=(), steps=(("chop",),), image_feat=(0.0,))
	with pytest.raises(CorpusFormatError):
		assign_pseudo_labels([unsegmented], model, LEXICON, EMBEDDINGS)


def test_assignment_is_nearest_centroid_and_idempotent() -> None:
	model = KMeansModel(centroids=np.array([[1.0, 0.0], [0.0, 1.0], [-1.0, 0.0]]))
	record = _record([["chop"], ["fry"], ["serve"]])
	first = assign_pseudo_labels([record], model, LEXICON, EMBEDDINGS)
	again = assign_pseudo_labels(first, model, LEXICON, EMBEDDINGS)
	assert first[0].pseudo_labels == (0, 1, 2)
	assert again[0].pseudo_labels == first[0].pseudo_labels


def test_tied_centroids_choose_lowest_index() -> None:
	model = KMeansModel(centroids=np.array([[0.0, 1.0], [0.0, 1.0]]))
	labeled = assign_pseudo_labels([_record([["fry"]])], model, LEXICON, EMBEDDINGS)
	assert labeled[0].pseudo_labels == (0,)


def test_embedding_table_parsing(tmp_path: Path) -> None:
	path = tmp_path / "emb.txt"
	path.write_text("Chop 1 0\nfry 0 1\n\n", encoding="utf-8")
	table = load_verb_embeddings(str(path))
	assert set(table) == {"chop", "fry"}
	assert np.array_equal(table["fry"], [0.0, 1.0])
	path.write_text("chop 1 0\nfry 0 1 2\n", encoding="utf-8")
	with pytest.raises(CorpusFormatError):
		load_verb_embeddings(str(path))
	path.write_text("\n", encoding="utf-8")
	with pytest.raises(CorpusFormatError):
		load_verb_embeddings(str(path))


def test_trained_embeddings_are_unit_rows_of_dimension_e() -> None:
	records = labeled_corpus(n_recipes=40)
	table = train_verb_embeddings(records, VerbLexicon.default(), dim=8)
	assert "chop" in table and "onion" not in table
	for vector in table.values():
		assert vector.shape == (8,)
		assert np.linalg.norm(vector) == pytest.approx(1.0)


def test_training_embeddings_without_any_verb_fails() -> None:
	record = _record([["stir", "well"]])
	with pytest.raises(CorpusFormatError):
		train_verb_embeddings([record], LEXICON)
