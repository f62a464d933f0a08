import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from cda_crnn.corpus import TAXONOMY, Corpus, Dialogue, Utterance, gen_synthetic, random_planted_matrix
from cda_crnn.numeric import make_rng
from cda_crnn.transitions import (
    INIT,
    TERM,
    read_matrix_file,
    render_transition_table,
    transition_matrix,
    write_matrix_file,
)


def corpus_of(*dialogues):
    return Corpus([Dialogue(f"d{k}", tuple(Utterance("u", "x", frozenset(ls)) for ls in seq))
                   for k, seq in enumerate(dialogues)])


SINGLE_PATH = corpus_of([{"OQ"}, {"PA"}, {"PF"}])


def test_single_path():
    m = transition_matrix(SINGLE_PATH)
    expected = np.zeros((13, 13))
    for src, dst in [(INIT, "OQ"), ("OQ", "PA"), ("PA", "PF"), ("PF", TERM)]:
        expected[m.from_states.index(src), m.to_states.index(dst)] = 1.0
    assert np.array_equal(m.probs, expected)
    assert m.empty_rows.sum() == 13 - 4


def test_cross_product_rule():
    m = transition_matrix(corpus_of([{"GG", "PA"}, {"PF"}]))
    assert m.prob("GG", "PF") == 1.0 and m.prob("PA", "PF") == 1.0
    assert m.prob(INIT, "GG") == 0.5 and m.prob(INIT, "PA") == 0.5
    assert m.prob("PF", TERM) == 1.0


def test_state_layout():
    m = transition_matrix(SINGLE_PATH)
    assert m.from_states == TAXONOMY + (INIT,)
    assert m.to_states == TAXONOMY + (TERM,)


def test_rows_sum_to_one():
    m = transition_matrix(gen_synthetic(100, (1, 12), seed=4, extra_label_rate=0.3))
    sums = m.probs.sum(axis=1)
    assert np.all(np.abs(sums[~m.empty_rows] - 1) <= 1e-9)
    assert np.all(sums[m.empty_rows] == 0)


def test_init_count_equals_first_labels():
    c = gen_synthetic(40, (1, 5), seed=8, extra_label_rate=0.5)
    m = transition_matrix(c)
    assert m.counts[-1].sum() == sum(len(d.utterances[0].labels) for d in c)


@settings(max_examples=25, deadline=None)
@given(st.integers(0, 10_000), st.integers(1, 30))
def test_counts_are_additive(seed, cut):
    c = gen_synthetic(31, (1, 6), seed=seed, extra_label_rate=0.3)
    a = Corpus(c.dialogues[:cut])
    b = Corpus(c.dialogues[cut:])
    assert np.array_equal((transition_matrix(a) + transition_matrix(b)).counts, transition_matrix(c).counts)


def test_planted_matrix_is_recovered():
    planted = random_planted_matrix(make_rng(21), term_weight=3.0)
    m = transition_matrix(gen_synthetic(200, (1, 200), planted, seed=22))
    assert np.max(np.abs(m.probs - planted)[~m.empty_rows]) <= 0.1


def test_rejects_unlabelled_utterance():
    with pytest.raises(ValueError):
        transition_matrix(corpus_of([{"OQ"}, set()]))


def test_render_single_path():
    text = render_transition_table(transition_matrix(SINGLE_PATH))
    assert text.count("100.0%") == 4
    assert text.count("*") == 4
    assert text.splitlines()[0].split() == ["from\\to", *TAXONOMY, TERM]


def test_render_precision_and_ties():
    m = transition_matrix(corpus_of([{"GG", "PA"}, {"PF"}], [{"OQ"}, {"PF"}]))
    text = render_transition_table(m, precision=1)
    init_row = next(line for line in text.splitlines() if line.startswith(INIT))
    assert init_row.split()[1:] == ["33.3%*", "33.3%*", "33.3%*"]
    assert "33.33%" in render_transition_table(m, precision=2)


def test_matrix_file_round_trip(tmp_path):
    m = transition_matrix(gen_synthetic(20, (1, 6), seed=1))
    write_matrix_file(m, tmp_path / "m.txt")
    src, dst, probs = read_matrix_file(tmp_path / "m.txt")
    assert src == m.from_states and dst == m.to_states
    assert np.array_equal(probs, m.probs)
