import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from cda_crnn.metrics import (
    betainc,
    compute_metrics,
    f1_from,
    group_by_dialogue_length,
    group_by_ref_count,
    hamming_score,
    micro_counts,
    micro_prf,
    paired_t_test,
)

labels = st.frozensets(st.sampled_from("ABCDE"), max_size=5)


def test_hamming_examples():
    assert hamming_score({"GG", "PA"}, {"GG"}) == 0.5
    assert hamming_score({"OQ", "PA"}, {"PA", "OQ"}) == 1.0
    assert hamming_score({"OQ"}, {"PA", "FD"}) == 0.0
    assert hamming_score(set(), set()) == 1.0


def test_hamming_rejects_unknown_labels():
    with pytest.raises(ValueError):
        hamming_score({"XX"}, {"OQ"}, taxonomy=("OQ",))


@given(labels, labels)
def test_hamming_symmetric_and_bounded(a, b):
    assert hamming_score(a, b) == hamming_score(b, a)
    assert 0 <= hamming_score(a, b) <= 1


def test_micro_prf_example():
    refs, preds = [{"A"}, {"A", "B"}], [{"A"}, {"B", "C"}]
    assert micro_counts(refs, preds) == (2, 1, 1)
    assert micro_prf(refs, preds) == (2 / 3, 2 / 3, 2 / 3)


def test_micro_prf_empty_predictions():
    assert micro_prf([{"A"}, {"B"}], [set(), set()]) == (0.0, 0.0, 0.0)


def test_micro_prf_perfect():
    refs = [{"A"}, {"A", "B"}]
    assert micro_prf(refs, refs) == (1.0, 1.0, 1.0)


@settings(max_examples=100)
@given(st.lists(st.tuples(labels, labels), min_size=1, max_size=8))
def test_f1_identity(pairs):
    refs, preds = zip(*pairs)
    p, r, f = micro_prf(refs, preds)
    if p + r:
        assert f == pytest.approx(2 * p * r / (p + r), abs=1e-15)
    else:
        assert f == 0.0
    assert f1_from(p, r) == f


def test_micro_prf_rejects_misaligned():
    with pytest.raises(ValueError):
        micro_prf([{"A"}], [])


def test_group_by_ref_count_example():
    t = group_by_ref_count([{"A"}, {"A", "B"}], [{"A"}, {"A"}])
    assert list(t) == ["1", "2", "3", ">=4"]
    assert t["1"] == {"count": 1, "frequency": 50.0, "accuracy": 1.0, "avg_pred": 1.0}
    assert t["2"] == {"count": 1, "frequency": 50.0, "accuracy": 0.5, "avg_pred": 1.0}
    assert t["3"]["count"] == 0 and t["3"]["accuracy"] is None


def test_group_by_ref_count_singletons():
    t = group_by_ref_count([{"A"}, {"B"}, {"C"}], [{"A"}, {"A"}, {"C"}])
    assert [k for k, row in t.items() if row["count"]] == ["1"]


def test_group_by_ref_count_buckets_large_sets():
    t = group_by_ref_count([set("ABCD"), set("ABCDE"), set()], [set("A")] * 3)
    assert t[">=4"]["count"] == 2 and list(t)[0] == "0"


def test_group_by_dialogue_length():
    t = group_by_dialogue_length([[{"A"}, {"B"}]], [[{"A"}, {"C"}]])
    assert t == {2: {"utterances": 2, "accuracy": 0.5}}


def test_group_by_dialogue_length_single_bucket_equals_accuracy():
    refs = [[{"A"}, {"B"}], [{"A"}, {"A", "B"}]]
    preds = [[{"A"}, {"A"}], [{"A"}, {"A"}]]
    rep = compute_metrics(refs, preds)
    assert list(rep.by_dialogue_length) == [2]
    assert rep.by_dialogue_length[2]["accuracy"] == rep.accuracy == 0.625


def textbook_paired_t(a, b):
    """Paired t for 3 degrees of freedom, with the closed-form CDF of Student's t at nu=3."""
    d = [x - y for x, y in zip(a, b)]
    n = len(d)
    mean = sum(d) / n
    sd = math.sqrt(sum((x - mean) ** 2 for x in d) / (n - 1))
    t = mean * math.sqrt(n) / sd
    assert n - 1 == 3
    x = abs(t) / math.sqrt(3)
    p = 1 - (2 / math.pi) * (x / (1 + x * x) + math.atan(x))
    return t, p


def test_paired_t_test_textbook():
    a, b = [0.8, 0.6, 0.9, 0.7], [0.5, 0.5, 0.6, 0.4]
    t_ref, p_ref = textbook_paired_t(a, b)
    res = paired_t_test(a, b)
    assert t_ref == pytest.approx(5.0, abs=1e-12)
    assert abs(res.t - t_ref) <= 1e-6 and abs(res.p - p_ref) <= 1e-6
    assert not res.degenerate


def test_paired_t_test_against_scipy():
    stats = pytest.importorskip("scipy.stats")
    rng = np.random.default_rng(5)
    for n in (2, 3, 7, 30, 200):
        a, b = rng.random(n), rng.random(n)
        ref = stats.ttest_rel(a, b)
        res = paired_t_test(a, b)
        assert res.t == pytest.approx(ref.statistic, rel=1e-10)
        assert abs(res.p - ref.pvalue) <= 1e-9


def test_paired_t_test_identical():
    assert tuple(paired_t_test([0.1, 0.5, 0.9], [0.1, 0.5, 0.9])) == (0.0, 1.0, False)


def test_paired_t_test_constant_difference():
    res = paired_t_test([2, 2, 2, 2], [1, 1, 1, 1])
    assert res.t == math.inf and res.p == 0.0 and res.degenerate


def test_paired_t_test_rejects_bad_input():
    with pytest.raises(ValueError):
        paired_t_test([1.0], [2.0])
    with pytest.raises(ValueError):
        paired_t_test([1.0, 2.0], [2.0])


def test_betainc_edges_and_symmetry():
    assert betainc(2.0, 3.0, 0.0) == 0.0 and betainc(2.0, 3.0, 1.0) == 1.0
    assert betainc(1.0, 1.0, 0.3) == pytest.approx(0.3, abs=1e-14)
    assert betainc(2.5, 1.5, 0.4) + betainc(1.5, 2.5, 0.6) == pytest.approx(1.0, abs=1e-14)


def test_compute_metrics_format_mentions_t_test():
    rep = compute_metrics([[{"A"}, {"B"}]], [[{"A"}, {"A"}]])
    rep.t_test = paired_t_test(rep.per_utterance, rep.per_utterance)
    assert "t=0.0000 p=1" in rep.format()
    assert rep.to_dict()["t_test"] == {"t": 0.0, "p": 1.0, "degenerate": False}
