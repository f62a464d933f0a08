import json
import logging

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from cda_crnn.corpus import (
    TAXONOMY,
    Corpus,
    CorpusError,
    Dialogue,
    Utterance,
    Vocabulary,
    build_vocab,
    corpus_from_msdialog,
    gen_long_range,
    gen_synthetic,
    load_corpus,
    load_embeddings,
    save_corpus,
    split_corpus,
    split_sizes,
    tokenize,
)
from cda_crnn.layers import OOV, PAD
from cda_crnn.numeric import make_rng


def toy(label_seqs, texts=None):
    ds = []
    for k, seq in enumerate(label_seqs):
        utts = tuple(Utterance("user", (texts or {}).get((k, t), "hello there"), frozenset(ls))
                     for t, ls in enumerate(seq))
        ds.append(Dialogue(f"d{k}", utts))
    return Corpus(ds)


# tokenizer ------------------------------------------------------------------------

@pytest.mark.parametrize("text, tokens", [
    ("Thank you. It works great.", ["thank", "you", ".", "it", "works", "great", "."]),
    ("Win+Shift+Cursor", ["win+shift+cursor"]),
    ("", []),
    ("(really?!)", ["(", "really", "?", "!", ")"]),
    ("don't", ["don't"]),
])
def test_tokenize(text, tokens):
    assert tokenize(text) == tokens


# vocabulary ---------------------------------------------------------------------------

def _vocab_corpus():
    return toy([[{"OQ"}]], {(0, 0): "a b a"})


def test_build_vocab_min_count_one():
    v = build_vocab(_vocab_corpus())
    assert v.stoi == {"<pad>": PAD, "<oov>": OOV, "a": 2, "b": 3}


def test_build_vocab_min_count_two():
    v = build_vocab(_vocab_corpus(), min_count=2)
    assert v.itos == ["<pad>", "<oov>", "a"]
    assert v.index("b") == OOV


def test_build_vocab_is_deterministic():
    c = gen_synthetic(10, (2, 5), seed=4)
    assert build_vocab(c) == build_vocab(c)


def test_build_vocab_rejects_empty():
    with pytest.raises(CorpusError):
        build_vocab([])


def test_encode_pads_to_min_len():
    v = build_vocab(_vocab_corpus())
    assert v.encode(["a", "zzz"], min_len=4).tolist() == [2, OOV, PAD, PAD]


# embeddings ---------------------------------------------------------------------------

def test_load_embeddings(tmp_path):
    v = Vocabulary(["the", "cat"])
    path = tmp_path / "emb.txt"
    path.write_text("the 0.1 0.2\nunused 9 9\n")
    t = load_embeddings(path, v, 2, make_rng(0))
    assert t.weights[v.index("the")].tolist() == [0.1, 0.2]
    cat = t.weights[v.index("cat")]
    assert np.all(cat >= -0.25) and np.all(cat < 0.25)
    assert np.all(t.weights[PAD] == 0)


def test_load_embeddings_reports_line_number(tmp_path):
    path = tmp_path / "emb.txt"
    path.write_text("the 0.1 0.2\ncat 0.1 0.2 0.3\n")
    with pytest.raises(CorpusError, match=":2:"):
        load_embeddings(path, Vocabulary(["the", "cat"]), 2, make_rng(0))


# file formats ---------------------------------------------------------------------------

def test_native_load(tmp_path):
    raw = {"dialogues": [{"id": "x", "utterances": [
        {"speaker": "user", "text": "how do I", "labels": ["OQ"]},
        {"speaker": "agent", "text": "try this, thanks", "labels": ["PA", "GG"]}]}]}
    path = tmp_path / "c.json"
    path.write_text(json.dumps(raw))
    c = load_corpus(path)
    assert c.dialogues[0].label_sets == [frozenset({"OQ"}), frozenset({"PA", "GG"})]


def test_native_round_trip_is_identity(tmp_path):
    c = gen_synthetic(15, (1, 6), seed=9, extra_label_rate=0.4)
    save_corpus(c, tmp_path / "c.json")
    again = load_corpus(tmp_path / "c.json")
    assert again == c
    save_corpus(again, tmp_path / "c2.json")
    assert (tmp_path / "c.json").read_bytes() == (tmp_path / "c2.json").read_bytes()


@settings(max_examples=30, deadline=None)
@given(st.lists(st.lists(st.tuples(st.text(max_size=20), st.sets(st.sampled_from(TAXONOMY), min_size=1)),
                         min_size=1, max_size=4), min_size=1, max_size=4))
def test_native_round_trip_property(tmp_path_factory, raw):
    c = Corpus([Dialogue(f"d{k}", tuple(Utterance("u", text, frozenset(ls)) for text, ls in d))
                for k, d in enumerate(raw)])
    path = tmp_path_factory.mktemp("rt") / "c.json"
    save_corpus(c, path)
    assert load_corpus(path) == c


@pytest.mark.parametrize("raw", [
    {"nodialogues": []},
    {"dialogues": [{"id": "x"}]},
    {"dialogues": [{"id": "x", "utterances": []}]},
    {"dialogues": [{"id": "x", "utterances": [{"text": "a", "labels": ["ZZ"]}]}]},
    {"dialogues": [{"id": "x", "utterances": [{"text": "a", "labels": ["OQ"]}]},
                   {"id": "x", "utterances": [{"text": "a", "labels": ["OQ"]}]}]},
])
def test_native_rejects_malformed(tmp_path, raw):
    path = tmp_path / "c.json"
    path.write_text(json.dumps(raw))
    with pytest.raises(CorpusError):
        load_corpus(path)


def test_load_corpus_rejects_bad_json(tmp_path):
    path = tmp_path / "c.json"
    path.write_text("{")
    with pytest.raises(CorpusError):
        load_corpus(path)
    with pytest.raises(CorpusError):
        load_corpus(tmp_path / "missing.json")


def test_msdialog_adapter(caplog):
    raw = {"42": {"title": "t", "utterances": [
        {"utterance_pos": 2, "utterance": "Thanks, it works", "tags": "PF GG GG", "actor_type": "User"},
        {"utterance_pos": 1, "utterance": "Try this", "tags": "GG PA PA XX", "actor_type": "Agent"}]}}
    with caplog.at_level(logging.WARNING):
        c = corpus_from_msdialog(raw)
    d = c.dialogues[0]
    assert d.id == "42"
    assert [u.text for u in d.utterances] == ["Try this", "Thanks, it works"]
    assert d.label_sets == [frozenset({"GG", "PA"}), frozenset({"PF", "GG"})]
    assert "XX" in caplog.text


def test_msdialog_rejects_unknown_structure():
    with pytest.raises(CorpusError):
        corpus_from_msdialog("nope")
    with pytest.raises(CorpusError):
        corpus_from_msdialog({"1": {"no": "utterances"}})


# splits ------------------------------------------------------------------------------------

@pytest.mark.parametrize("n, sizes", [(10, (8, 1, 1)), (7, (5, 1, 1)), (3, (1, 1, 1)), (100, (80, 10, 10))])
def test_split_sizes(n, sizes):
    assert split_sizes(n) == sizes


def test_split_is_seeded_disjoint_and_exhaustive():
    c = gen_synthetic(23, (1, 3), seed=1)
    a = split_corpus(c, seed=5)
    b = split_corpus(c, seed=5)
    ids = [[d.id for d in part] for part in a]
    assert ids == [[d.id for d in part] for part in b]
    flat = sum(ids, [])
    assert sorted(flat) == sorted(d.id for d in c)
    assert ids != [[d.id for d in part] for part in split_corpus(c, seed=6)]


def test_split_rejects_tiny_corpus():
    with pytest.raises(CorpusError):
        split_sizes(2)


# generators ----------------------------------------------------------------------------------

def test_degenerate_chain():
    planted = {"INIT": {"OQ": 1.0}, "OQ": {"PA": 1.0}, "PA": {"TERM": 1.0}}
    c = gen_synthetic(20, (1, 30), planted, seed=0)
    assert all(d.label_sets == [frozenset({"OQ"}), frozenset({"PA"})] for d in c)


def test_gen_synthetic_is_deterministic():
    assert gen_synthetic(30, (2, 9), seed=11) == gen_synthetic(30, (2, 9), seed=11)
    assert gen_synthetic(30, (2, 9), seed=11) != gen_synthetic(30, (2, 9), seed=12)


def test_gen_synthetic_respects_length_range():
    c = gen_synthetic(50, (3, 5), seed=2)
    assert all(3 <= len(d) <= 5 for d in c)


def test_gen_synthetic_plants_keywords():
    from cda_crnn.corpus import DEFAULT_KEYWORDS
    for d in gen_synthetic(10, (1, 6), seed=3):
        for u in d.utterances:
            for code in u.labels:
                assert set(DEFAULT_KEYWORDS[code]) & set(u.tokens)


def test_gen_synthetic_rejects_non_stochastic_matrix():
    with pytest.raises(ValueError):
        gen_synthetic(3, transitions=np.full((13, 13), 0.5))


def test_gen_long_range_structure():
    c = gen_long_range(40, (6, 8), seed=0)
    for d in c:
        assert 6 <= len(d) <= 8
        first, last = d.utterances[0], d.utterances[-1]
        assert first.labels == {"OQ"}
        assert last.text == "final reply"
        assert last.labels == ({"PF"} if "alpha" in first.tokens else {"NF"})
    assert {frozenset(d.utterances[-1].labels) for d in c} == {frozenset({"PF"}), frozenset({"NF"})}
