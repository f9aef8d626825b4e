"""Schema validation, corpus generation, IO round trips, vocabulary."""

import json

import pytest

from statetrack.corpus import (
    BUILTIN_SCHEMAS,
    DONTCARE_VALUE,
    EOS,
    MAX_VALUE_TOKENS,
    NULL_VALUE,
    SENTINELS,
    SPECIAL_TOKENS,
    UNK,
    CorpusError,
    Dialogue,
    DialogueState,
    DialogueTurn,
    Schema,
    SchemaError,
    Vocabulary,
    build_vocab,
    cross_reference_schema,
    default_schema,
    generate_corpus,
    load_corpus,
    save_corpus,
    tokenize,
)


def tiny_schema(**overrides) -> Schema:
    kwargs = dict(
        domains=["hotel", "taxi"],
        slots_of={"hotel": ["area", "name"], "taxi": ["when"]},
        value_pool={
            ("hotel", "area"): ["north", "south"],
            ("hotel", "name"): ["acorn house", "avalon"],
            ("taxi", "when"): ["noon", "three"],
        },
        transition_weights={("hotel", "taxi"): 1.0, ("taxi", "hotel"): 1.0},
    )
    kwargs.update(overrides)
    return Schema(**kwargs)


# ---------------------------------------------------------------------------
# Schema
# ---------------------------------------------------------------------------

def test_builtin_schemas_validate():
    for name, factory in BUILTIN_SCHEMAS.items():
        schema = factory()
        schema.validate()
        assert schema.n_pairs == len(schema.pairs())


def test_default_schema_shape():
    schema = default_schema()
    assert len(schema.domains) == 4
    assert schema.n_pairs == 12
    # one slot name per pair across the whole schema: no collisions anywhere
    assert len(set(schema.slot_names())) == 12


@pytest.mark.parametrize("mutate, fragment", [
    (dict(domains=[]), "nonempty"),
    (dict(domains=["hotel", "hotel"]), "duplicate"),
    (dict(domains=["hotel", "Taxi"]), "lowercase"),
    (dict(slots_of={"hotel": ["area", "name"]}), "at least one slot"),
    (dict(value_pool={("hotel", "area"): ["north"],
                      ("hotel", "name"): ["acorn house"]}), "nonempty"),
    (dict(transition_weights={("hotel", "bus"): 1.0}), "unknown domain"),
    (dict(transition_weights={("hotel", "taxi"): -0.5}), "negative"),
    (dict(copy_slots={("taxi", "when"): ("taxi", "when")}), "itself"),
    (dict(copy_slots={("bus", "when"): ("hotel", "name")}), "unknown target"),
    (dict(copy_slots={("taxi", "when"): ("hotel", "name"),
                      ("hotel", "name"): ("hotel", "area")}), "chain"),
])
def test_schema_validation_errors(mutate, fragment):
    with pytest.raises(SchemaError, match=fragment):
        tiny_schema(**mutate)


def test_schema_rejects_long_and_special_values():
    with pytest.raises(SchemaError, match="tokens"):
        tiny_schema(value_pool={
            ("hotel", "area"): ["a b c d"],
            ("hotel", "name"): ["acorn"],
            ("taxi", "when"): ["noon"],
        })
    with pytest.raises(SchemaError, match="special"):
        tiny_schema(value_pool={
            ("hotel", "area"): [NULL_VALUE],
            ("hotel", "name"): ["acorn"],
            ("taxi", "when"): ["noon"],
        })


def test_schema_save_load_round_trip(tmp_path):
    schema = cross_reference_schema()
    path = tmp_path / "schema.json"
    schema.save(str(path))
    loaded = Schema.load(str(path))
    assert loaded.domains == schema.domains
    assert loaded.slots_of == schema.slots_of
    assert loaded.value_pool == schema.value_pool
    assert loaded.transition_weights == schema.transition_weights
    assert loaded.copy_slots == schema.copy_slots
    assert loaded.fingerprint() == schema.fingerprint()


def test_fingerprint_sensitivity():
    a = tiny_schema()
    b = tiny_schema(value_pool={
        ("hotel", "area"): ["north", "west"],
        ("hotel", "name"): ["acorn house", "avalon"],
        ("taxi", "when"): ["noon", "three"],
    })
    assert a.fingerprint() != b.fingerprint()
    assert a.fingerprint() == tiny_schema().fingerprint()


# ---------------------------------------------------------------------------
# DialogueState
# ---------------------------------------------------------------------------

def test_state_replace_is_persistent():
    schema = tiny_schema()
    empty = DialogueState.empty(schema.pairs())
    filled = empty.replace(("hotel", "area"), "north")
    assert empty.get(("hotel", "area")) == NULL_VALUE
    assert filled.get(("hotel", "area")) == "north"
    assert filled.filled_pairs() == [("hotel", "area")]
    assert empty != filled
    assert filled == empty.replace(("hotel", "area"), "north")


def test_state_unknown_pair():
    state = DialogueState.empty(tiny_schema().pairs())
    with pytest.raises(KeyError):
        state.get(("bus", "when"))


# ---------------------------------------------------------------------------
# Generator
# ---------------------------------------------------------------------------

def test_generate_corpus_deterministic():
    schema = default_schema()
    a = generate_corpus(schema, 8, 6, seed=3)
    b = generate_corpus(schema, 8, 6, seed=3)
    c = generate_corpus(schema, 8, 6, seed=4)
    assert [d.turns for d in a] == [d.turns for d in b]
    assert [d.turns for d in a] != [d.turns for d in c]


def test_generate_corpus_counts_and_turn_bounds():
    schema = default_schema()
    dialogues = generate_corpus(schema, 20, 5, seed=0)
    assert len(dialogues) == 20
    assert len({d.dialogue_id for d in dialogues}) == 20
    for d in dialogues:
        assert 2 <= len(d.turns) <= 5


def test_generate_corpus_single_turn():
    dialogues = generate_corpus(default_schema(), 3, 1, seed=0)
    assert all(len(d.turns) == 1 for d in dialogues)
    with pytest.raises(ValueError):
        generate_corpus(default_schema(), 3, 0, seed=0)


def test_one_state_action_per_turn():
    schema = default_schema()
    for dlg in generate_corpus(schema, 30, 8, seed=11):
        prev = DialogueState.empty(schema.pairs())
        for turn in dlg.turns:
            changed = [p for p in schema.pairs()
                       if prev.get(p) != turn.gold_state.get(p)]
            assert len(changed) == 1
            prev = turn.gold_state


def test_new_values_appear_verbatim_in_utterance():
    schema = default_schema()  # no copy slots: every new value is spoken
    for dlg in generate_corpus(schema, 30, 8, seed=5):
        prev = DialogueState.empty(schema.pairs())
        for turn in dlg.turns:
            utt = " ".join(turn.user_utterance)
            for pair in schema.pairs():
                value = turn.gold_state.get(pair)
                if value != prev.get(pair) and value not in SENTINELS:
                    assert value in utt
            prev = turn.gold_state


def test_values_respect_pools_and_length():
    schema = default_schema()
    for dlg in generate_corpus(schema, 30, 8, seed=7):
        for turn in dlg.turns:
            for pair in schema.pairs():
                value = turn.gold_state.get(pair)
                if value not in SENTINELS:
                    assert value in schema.value_pool[pair]
                    assert 1 <= len(tokenize(value)) <= MAX_VALUE_TOKENS


def test_cross_reference_values_come_from_source_pair():
    schema = cross_reference_schema()
    referenced = 0
    for dlg in generate_corpus(schema, 60, 8, seed=2):
        prev = DialogueState.empty(schema.pairs())
        for turn in dlg.turns:
            for tgt, src in schema.copy_slots.items():
                value = turn.gold_state.get(tgt)
                if value != prev.get(tgt) and value not in SENTINELS:
                    referenced += 1
                    # target never spoken: value comes from the stored source
                    assert value == prev.get(src)
                    assert "match" in turn.user_utterance
            prev = turn.gold_state
    assert referenced > 10  # the pattern actually occurs


# ---------------------------------------------------------------------------
# Corpus IO
# ---------------------------------------------------------------------------

def test_corpus_round_trip(tmp_path):
    schema = default_schema()
    dialogues = generate_corpus(schema, 12, 6, seed=9)
    path = tmp_path / "corpus.jsonl"
    save_corpus(dialogues, str(path))
    loaded = load_corpus(str(path), schema)
    assert len(loaded) == len(dialogues)
    for a, b in zip(dialogues, loaded):
        assert a.dialogue_id == b.dialogue_id
        assert a.turns == b.turns


def test_load_corpus_rejects_bad_lines(tmp_path):
    schema = tiny_schema()
    path = tmp_path / "bad.jsonl"

    path.write_text("not json\n")
    with pytest.raises(CorpusError, match="line 1"):
        load_corpus(str(path), schema)

    path.write_text(json.dumps({"turns": []}) + "\n")
    with pytest.raises(CorpusError, match="missing key"):
        load_corpus(str(path), schema)

    path.write_text(json.dumps({"dialogue_id": "d", "turns": []}) + "\n")
    with pytest.raises(CorpusError, match="no turns"):
        load_corpus(str(path), schema)

    turn = {"system": "hi", "user": "yo", "state": [["bus", "when", "noon"]]}
    path.write_text(json.dumps({"dialogue_id": "d", "turns": [turn]}) + "\n")
    with pytest.raises(CorpusError, match="unknown pair"):
        load_corpus(str(path), schema)

    turn = {"system": "hi", "user": "yo", "state": [["hotel", "area"]]}
    path.write_text(json.dumps({"dialogue_id": "d", "turns": [turn]}) + "\n")
    with pytest.raises(CorpusError, match="state entry"):
        load_corpus(str(path), schema)

    turn = {"system": "hi", "state": []}
    path.write_text(json.dumps({"dialogue_id": "d", "turns": [turn]}) + "\n")
    with pytest.raises(CorpusError, match="missing"):
        load_corpus(str(path), schema)


def test_save_corpus_omits_null_pairs(tmp_path):
    schema = tiny_schema()
    state = DialogueState.empty(schema.pairs()).replace(("taxi", "when"), "noon")
    dlg = Dialogue("d0", [DialogueTurn(["hi"], ["the taxi when should be noon"], state)])
    path = tmp_path / "one.jsonl"
    save_corpus([dlg], str(path))
    obj = json.loads(path.read_text())
    assert obj["turns"][0]["state"] == [["taxi", "when", "noon"]]


def test_dontcare_round_trips(tmp_path):
    schema = tiny_schema()
    state = DialogueState.empty(schema.pairs()).replace(("hotel", "area"), DONTCARE_VALUE)
    dlg = Dialogue("d0", [DialogueTurn(["hi"], ["any hotel area is fine"], state)])
    path = tmp_path / "dc.jsonl"
    save_corpus([dlg], str(path))
    loaded = load_corpus(str(path), schema)
    assert loaded[0].turns[0].gold_state.get(("hotel", "area")) == DONTCARE_VALUE


# ---------------------------------------------------------------------------
# Vocabulary
# ---------------------------------------------------------------------------

def test_vocab_specials_first_and_round_trip():
    schema = default_schema()
    corpus = generate_corpus(schema, 5, 4, seed=1)
    vocab = build_vocab(corpus, schema)
    assert vocab.decode(list(range(len(SPECIAL_TOKENS)))) == SPECIAL_TOKENS
    toks = corpus[0].turns[0].user_utterance
    assert vocab.decode(vocab.encode(toks)) == toks


def test_vocab_unknown_maps_to_unk():
    schema = tiny_schema()
    corpus = generate_corpus(schema, 2, 3, seed=1)
    vocab = build_vocab(corpus, schema)
    (uid,) = vocab.encode(["zebra"])
    assert vocab.decode([uid]) == [UNK]
    assert "zebra" not in vocab


def test_vocab_covers_all_pool_values_even_unseen():
    schema = default_schema()
    corpus = generate_corpus(schema, 2, 2, seed=1)  # tiny: most pool values unseen
    vocab = build_vocab(corpus, schema)
    for pair in schema.pairs():
        for v in schema.value_pool[pair]:
            for tok in tokenize(v):
                assert tok in vocab


def test_vocab_structural_ids_exclude_eos():
    schema = tiny_schema()
    vocab = build_vocab(generate_corpus(schema, 2, 3, seed=1), schema)
    structural = set(vocab.structural_ids())
    assert vocab.eos_id not in structural
    assert set(vocab.special_ids()) - structural == {vocab.eos_id}


def test_build_vocab_empty_corpus():
    with pytest.raises(ValueError):
        build_vocab([], tiny_schema())
