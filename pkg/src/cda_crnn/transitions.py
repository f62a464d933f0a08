"""First-order Markov chain over dialogue acts with INIT and TERM states."""

from __future__ import annotations

from dataclasses import dataclass
from typing import Iterable, Sequence

import numpy as np

from ._io import atomic_write_text
from .corpus import TAXONOMY, Corpus, Dialogue

INIT = "INIT"
TERM = "TERM"


@dataclass
class TransitionMatrix:
    """Counts and row-normalized probabilities.

    Rows are the taxonomy codes followed by INIT; columns are the codes
    followed by TERM. Rows without any outgoing count stay all-zero and are
    flagged in :attr:`empty_rows`.
    """

    taxonomy: tuple
    counts: np.ndarray

    @property
    def from_states(self) -> tuple:
        return tuple(self.taxonomy) + (INIT,)

    @property
    def to_states(self) -> tuple:
        return tuple(self.taxonomy) + (TERM,)

    @property
    def row_totals(self) -> np.ndarray:
        return self.counts.sum(axis=1)

    @property
    def empty_rows(self) -> np.ndarray:
        return self.row_totals == 0

    @property
    def probs(self) -> np.ndarray:
        totals = self.row_totals.astype(np.float64)
        out = np.zeros(self.counts.shape, dtype=np.float64)
        nz = totals > 0
        out[nz] = self.counts[nz] / totals[nz, None]
        return out

    def prob(self, src: str, dst: str) -> float:
        return float(self.probs[self.from_states.index(src), self.to_states.index(dst)])

    def __add__(self, other: "TransitionMatrix") -> "TransitionMatrix":
        if tuple(other.taxonomy) != tuple(self.taxonomy):
            raise ValueError("cannot add transition matrices over different taxonomies")
        return TransitionMatrix(self.taxonomy, self.counts + other.counts)


def transition_matrix(dialogues: Corpus | Iterable[Dialogue], taxonomy: Sequence[str] | None = None) -> TransitionMatrix:
    """Count DA transitions under the cross-product rule.

    For label sets ``Y_1..Y_s``: one INIT->l per ``l`` in ``Y_1``, one l->l'
    per pair in ``Y_t x Y_{t+1}``, and one l->TERM per ``l`` in ``Y_s``.
    """
    if taxonomy is None:
        taxonomy = dialogues.taxonomy if isinstance(dialogues, Corpus) else TAXONOMY
    taxonomy = tuple(taxonomy)
    c = len(taxonomy)
    ix = {code: j for j, code in enumerate(taxonomy)}
    counts = np.zeros((c + 1, c + 1), dtype=np.int64)
    for d in dialogues:
        sets = []
        for t, u in enumerate(d.utterances):
            if not u.labels:
                raise ValueError(f"dialogue {d.id!r}, utterance {t}: no labels")
            try:
                sets.append([ix[code] for code in u.labels])
            except KeyError as exc:
                raise ValueError(f"dialogue {d.id!r}: label {exc.args[0]!r} not in taxonomy") from None
        for j in sets[0]:
            counts[c, j] += 1
        for prev, nxt in zip(sets, sets[1:]):
            for a in prev:
                for b in nxt:
                    counts[a, b] += 1
        for j in sets[-1]:
            counts[j, c] += 1
    return TransitionMatrix(taxonomy, counts)


def render_transition_table(matrix: TransitionMatrix, precision: int = 1, marker: str = "*") -> str:
    """Plain-text percentage table.

    Cells with a zero count are blank, so all-zero rows render empty. The
    largest cell of each row carries ``marker``; tied maxima are all marked.
    """
    probs = matrix.probs
    header = ["from\\to", *matrix.to_states]
    rows = [header]
    for i, src in enumerate(matrix.from_states):
        row = [src]
        top = probs[i].max()
        for j in range(len(matrix.to_states)):
            if matrix.counts[i, j] == 0:
                row.append("")
                continue
            cell = f"{100.0 * probs[i, j]:.{precision}f}%"
            if probs[i, j] == top:
                cell += marker
            row.append(cell)
        rows.append(row)
    widths = [max(len(r[k]) for r in rows) for k in range(len(header))]
    return "\n".join(
        "  ".join(cell.ljust(widths[0]) if k == 0 else cell.rjust(widths[k]) for k, cell in enumerate(r)).rstrip()
        for r in rows
    )


def format_matrix_file(matrix: TransitionMatrix) -> str:
    """Machine-readable form: state orders, then one row of probabilities per line."""
    lines = [
        "from " + " ".join(matrix.from_states),
        "to " + " ".join(matrix.to_states),
    ]
    for row in matrix.probs:
        lines.append(" ".join(repr(float(v)) for v in row))
    return "\n".join(lines) + "\n"


def write_matrix_file(matrix: TransitionMatrix, path) -> None:
    atomic_write_text(path, format_matrix_file(matrix))


def read_matrix_file(path) -> tuple[tuple, tuple, np.ndarray]:
    with open(path, encoding="utf-8") as fh:
        lines = [ln for ln in fh.read().splitlines() if ln.strip()]
    src = tuple(lines[0].split()[1:])
    dst = tuple(lines[1].split()[1:])
    probs = np.array([[float(v) for v in ln.split()] for ln in lines[2:]], dtype=np.float64)
    if probs.shape != (len(src), len(dst)):
        raise ValueError(f"matrix file body {probs.shape} does not match {len(src)}x{len(dst)} states")
    return src, dst, probs
