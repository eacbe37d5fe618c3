"""Pruebas de tokenización, segmentación en fases, partición y vocabulario."""

import dataclasses

import pytest

from src.application.corpus import build_vocab, segment_phases, split_corpus, tokenize, with_phases
from src.domain.entities import RESERVED_TOKENS, PhaseSpan, RecipeRecord
from src.domain.exceptions import CorpusFormatError


def _record(record_id: str, steps, ingredients=("salt",)) -> RecipeRecord:
	return RecipeRecord(
		id=record_id,
		ingredients=tuple(ingredients),
		steps=tuple(tuple(step) for step in steps),
		image_feat=(0.0, 1.0),
	)


def test_tokenize_lowercases_and_splits_punctuation() -> None:
	assert tokenize("Heat the Oil, then FRY.") == ["heat", "the", "oil", ",", "then", "fry", "."]


@pytest.mark.parametrize(
	"n_steps, sizes",
	[(1, [1]), (2, [1, 1]), (3, [1, 1, 1]), (5, [2, 2, 1]), (7, [3, 2, 2]), (9, [3, 3, 3])],
)
def test_segment_phases_front_loads_the_remainder(n_steps: int, sizes) -> None:
	spans = segment_phases(list(range(n_steps)))
	assert [span.size for span in spans] == sizes
	assert spans[0].start == 0 and spans[-1].end == n_steps
	assert all(a.end == b.start for a, b in zip(spans, spans[1:]))


def test_segment_phases_rejects_empty_recipe() -> None:
	with pytest.raises(CorpusFormatError):
		segment_phases([])


def test_with_phases_keeps_labels_only_when_they_fit() -> None:
	record = _record("r1", [["chop"], ["fry"], ["serve"]])
	labeled = with_phases(dataclasses.replace(record, pseudo_labels=(0, 1, 2)))
	assert labeled.phases == (PhaseSpan(0, 1), PhaseSpan(1, 2), PhaseSpan(2, 3))
	assert labeled.pseudo_labels == (0, 1, 2)
	stale = with_phases(dataclasses.replace(record, pseudo_labels=(0, 1)))
	assert stale.pseudo_labels == ()
	assert not stale.is_labeled


def test_vocab_reserves_first_ids_and_orders_by_frequency() -> None:
	records = [
		_record("a", [["fry", "the", "onion"], ["serve", "the", "onion"]], ingredients=("onion",)),
		_record("b", [["boil", "the", "egg"]], ingredients=("egg",)),
	]
	vocab = build_vocab(records)
	assert vocab.tokens[: len(RESERVED_TOKENS)] == list(RESERVED_TOKENS)
	# onion: 3, the: 3, egg: 2; los empates se ordenan alfabéticamente.
	assert vocab.tokens[5:8] == ["onion", "the", "egg"]
	assert vocab.encode(["onion", "pizza"]) == [5, vocab.unk_id]
	assert vocab.decode([1, 5, 3, 6]) == ["onion", "the"]


def test_vocab_min_freq_maps_rare_tokens_to_unk() -> None:
	records = [_record("a", [["fry", "the", "onion"], ["fry", "the", "egg"]])]
	vocab = build_vocab(records, min_freq=2)
	assert "fry" in vocab and "onion" not in vocab
	assert vocab.encode(["onion"]) == [vocab.unk_id]


def test_vocab_of_empty_corpus_fails() -> None:
	with pytest.raises(CorpusFormatError):
		build_vocab([])


def test_split_is_deterministic_and_disjoint() -> None:
	records = [_record(f"r{i}", [["fry"]]) for i in range(20)]
	train, val = split_corpus(records, val_fraction=0.25, seed=3)
	again_train, again_val = split_corpus(records, val_fraction=0.25, seed=3)
	assert len(val) == 5 and len(train) == 15
	assert [r.id for r in val] == [r.id for r in again_val]
	assert {r.id for r in train}.isdisjoint({r.id for r in val})
	assert [r.id for r in train] == [r.id for r in again_train]


def test_split_never_empties_training_set() -> None:
	train, val = split_corpus([_record("solo", [["fry"]])], val_fraction=0.5, seed=0)
	assert len(train) == 1 and val == []
