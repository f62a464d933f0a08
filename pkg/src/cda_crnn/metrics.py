"""Multi-label evaluation: Hamming score, micro P/R/F1, grouped tables, paired t-test."""

from __future__ import annotations

import math
from collections import defaultdict
from dataclasses import dataclass, field
from typing import NamedTuple, Sequence

import numpy as np


def hamming_score(ref, pred, taxonomy: Sequence[str] | None = None) -> float:
    """``|ref & pred| / |ref | pred|``; two empty sets score 1.0."""
    ref, pred = frozenset(ref), frozenset(pred)
    if taxonomy is not None:
        unknown = (ref | pred) - set(taxonomy)
        if unknown:
            raise ValueError(f"labels {sorted(unknown)} are not in the taxonomy")
    union = ref | pred
    if not union:
        return 1.0
    return len(ref & pred) / len(union)


def _check_aligned(refs, preds):
    if len(refs) != len(preds):
        raise ValueError(f"{len(refs)} reference sets but {len(preds)} predictions")


def micro_counts(refs, preds) -> tuple[int, int, int]:
    _check_aligned(refs, preds)
    tp = fp = fn = 0
    for r, p in zip(refs, preds):
        r, p = frozenset(r), frozenset(p)
        tp += len(r & p)
        fp += len(p - r)
        fn += len(r - p)
    return tp, fp, fn


def f1_from(precision: float, recall: float) -> float:
    if precision + recall == 0:
        return 0.0
    return 2 * precision * recall / (precision + recall)


def micro_prf(refs, preds) -> tuple[float, float, float]:
    """Micro-averaged precision, recall and F1; any 0/0 ratio is 0."""
    tp, fp, fn = micro_counts(refs, preds)
    precision = tp / (tp + fp) if tp + fp else 0.0
    recall = tp / (tp + fn) if tp + fn else 0.0
    return precision, recall, f1_from(precision, recall)


REF_COUNT_BUCKETS = ("1", "2", "3", ">=4")


def _ref_bucket(n: int) -> str:
    if n == 0:
        return "0"
    return ">=4" if n >= 4 else str(n)


def group_by_ref_count(refs, preds) -> dict[str, dict]:
    """Statistics bucketed by the number of reference labels.

    Buckets ``1, 2, 3, >=4`` are always present; a ``0`` bucket appears only
    if some reference set is empty. Each bucket holds ``count``,
    ``frequency`` (percent of utterances), ``accuracy`` (mean Hamming
    score) and ``avg_pred`` (mean predicted set size); the last two are
    None for empty buckets.
    """
    _check_aligned(refs, preds)
    scores = defaultdict(list)
    sizes = defaultdict(list)
    for r, p in zip(refs, preds):
        key = _ref_bucket(len(r))
        scores[key].append(hamming_score(r, p))
        sizes[key].append(len(p))
    keys = (["0"] if "0" in scores else []) + list(REF_COUNT_BUCKETS)
    total = len(refs)
    table = {}
    for key in keys:
        n = len(scores[key])
        table[key] = {
            "count": n,
            "frequency": 100.0 * n / total if total else 0.0,
            "accuracy": float(np.mean(scores[key])) if n else None,
            "avg_pred": float(np.mean(sizes[key])) if n else None,
        }
    return table


def group_by_dialogue_length(dialogue_refs, dialogue_preds) -> dict[int, dict]:
    """Mean per-utterance Hamming score keyed by the length of the containing dialogue.

    Both arguments are lists (one entry per dialogue) of per-utterance label sets.
    """
    _check_aligned(dialogue_refs, dialogue_preds)
    scores = defaultdict(list)
    for k, (refs, preds) in enumerate(zip(dialogue_refs, dialogue_preds)):
        if len(refs) != len(preds):
            raise ValueError(f"dialogue #{k}: {len(refs)} references but {len(preds)} predictions")
        scores[len(refs)].extend(hamming_score(r, p) for r, p in zip(refs, preds))
    return {s: {"utterances": len(v), "accuracy": float(np.mean(v))} for s, v in sorted(scores.items())}


# ---------------------------------------------------------------------------
# paired t-test
# ---------------------------------------------------------------------------

class TTestResult(NamedTuple):
    t: float
    p: float
    degenerate: bool = False


def _betacf(a: float, b: float, x: float, max_iter: int = 300, tol: float = 1e-15) -> float:
    # modified Lentz evaluation of the incomplete-beta continued fraction
    tiny = 1e-300
    qab, qap, qam = a + b, a + 1.0, a - 1.0
    c = 1.0
    d = 1.0 - qab * x / qap
    d = 1.0 / (d if abs(d) > tiny else tiny)
    h = d
    for m in range(1, max_iter + 1):
        m2 = 2 * m
        aa = m * (b - m) * x / ((qam + m2) * (a + m2))
        d = 1.0 + aa * d
        d = 1.0 / (d if abs(d) > tiny else tiny)
        c = 1.0 + aa / c
        c = c if abs(c) > tiny else tiny
        h *= d * c
        aa = -(a + m) * (qab + m) * x / ((a + m2) * (qap + m2))
        d = 1.0 + aa * d
        d = 1.0 / (d if abs(d) > tiny else tiny)
        c = 1.0 + aa / c
        c = c if abs(c) > tiny else tiny
        delta = d * c
        h *= delta
        if abs(delta - 1.0) < tol:
            return h
    raise ArithmeticError("incomplete beta continued fraction did not converge")


def betainc(a: float, b: float, x: float) -> float:
    """Regularized incomplete beta ``I_x(a, b)`` by continued fraction."""
    if not 0.0 <= x <= 1.0:
        raise ValueError("x must lie in [0, 1]")
    if x == 0.0 or x == 1.0:
        return x
    log_front = (math.lgamma(a + b) - math.lgamma(a) - math.lgamma(b)
                 + a * math.log(x) + b * math.log1p(-x))
    front = math.exp(log_front)
    # the fraction converges fast only on this side of the mean
    if x < (a + 1.0) / (a + b + 2.0):
        return front * _betacf(a, b, x) / a
    return 1.0 - front * _betacf(b, a, 1.0 - x) / b


def student_t_two_sided(t: float, dof: float) -> float:
    """Two-sided tail probability ``P(|T| >= |t|)`` for Student's t."""
    if math.isinf(t):
        return 0.0
    return betainc(dof / 2.0, 0.5, dof / (dof + t * t))


def paired_t_test(scores_a, scores_b) -> TTestResult:
    """Student's paired t-test on per-item scores.

    All-zero differences give ``t = 0, p = 1``. Constant nonzero
    differences have zero variance; the result is ``t = ±inf, p = 0`` with
    ``degenerate`` set.
    """
    a = np.asarray(scores_a, dtype=np.float64)
    b = np.asarray(scores_b, dtype=np.float64)
    if a.shape != b.shape or a.ndim != 1:
        raise ValueError("score lists must be 1-d and of equal length")
    n = a.size
    if n < 2:
        raise ValueError("paired t-test needs at least 2 pairs")
    d = a - b
    mean = float(d.mean())
    if np.all(d == 0):
        return TTestResult(0.0, 1.0, False)
    sd = float(d.std(ddof=1))
    if sd == 0.0:
        return TTestResult(math.copysign(math.inf, mean), 0.0, True)
    t = mean * math.sqrt(n) / sd
    return TTestResult(t, student_t_two_sided(t, n - 1), False)


# ---------------------------------------------------------------------------
# reports
# ---------------------------------------------------------------------------

@dataclass
class MetricsReport:
    accuracy: float
    precision: float
    recall: float
    f1: float
    by_ref_count: dict
    by_dialogue_length: dict
    per_utterance: list = field(default_factory=list, repr=False)
    t_test: TTestResult | None = None

    def to_dict(self) -> dict:
        out = {
            "accuracy": self.accuracy,
            "precision": self.precision,
            "recall": self.recall,
            "f1": self.f1,
            "utterances": len(self.per_utterance),
            "by_ref_count": self.by_ref_count,
            "by_dialogue_length": {str(k): v for k, v in self.by_dialogue_length.items()},
        }
        if self.t_test is not None:
            out["t_test"] = self.t_test._asdict()
        return out

    def format(self) -> str:
        lines = [
            f"accuracy  {self.accuracy:.4f}",
            f"precision {self.precision:.4f}",
            f"recall    {self.recall:.4f}",
            f"f1        {self.f1:.4f}",
            "",
            "# ref DAs   %      accuracy  avg pred",
        ]
        for key, row in self.by_ref_count.items():
            acc = "-" if row["accuracy"] is None else f"{row['accuracy']:.4f}"
            avg = "-" if row["avg_pred"] is None else f"{row['avg_pred']:.2f}"
            lines.append(f"{key:<11} {row['frequency']:5.1f}  {acc:>8}  {avg:>8}")
        lines += ["", "dialogue length  utterances  accuracy"]
        for s, row in self.by_dialogue_length.items():
            lines.append(f"{s:<16} {row['utterances']:>10}  {row['accuracy']:.4f}")
        if self.t_test is not None:
            flag = " (zero-variance differences)" if self.t_test.degenerate else ""
            lines += ["", f"paired t-test on accuracy: t={self.t_test.t:.4f} p={self.t_test.p:.6g}{flag}"]
        return "\n".join(lines)


def compute_metrics(dialogue_refs, dialogue_preds) -> MetricsReport:
    """Full report from per-dialogue lists of reference and predicted label sets."""
    refs = [r for d in dialogue_refs for r in d]
    preds = [p for d in dialogue_preds for p in d]
    _check_aligned(refs, preds)
    per_utt = [hamming_score(r, p) for r, p in zip(refs, preds)]
    precision, recall, f1 = micro_prf(refs, preds)
    return MetricsReport(
        accuracy=float(np.mean(per_utt)) if per_utt else 0.0,
        precision=precision,
        recall=recall,
        f1=f1,
        by_ref_count=group_by_ref_count(refs, preds),
        by_dialogue_length=group_by_dialogue_length(dialogue_refs, dialogue_preds),
        per_utterance=per_utt,
    )
