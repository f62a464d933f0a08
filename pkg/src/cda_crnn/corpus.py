"""Dialogue corpora: data types, tokenization, vocabulary, file I/O, splits, synthetic data."""

from __future__ import annotations

import json
import logging
import os
from collections import Counter
from dataclasses import dataclass
from typing import Iterable, Mapping, Sequence

import numpy as np

from ._io import atomic_write_text
from .layers import OOV, PAD, EmbeddingTable
from .numeric import DTYPE, make_rng, uniform_init

log = logging.getLogger(__name__)

#: Output-head column order.
TAXONOMY = ("OQ", "RQ", "CQ", "FD", "FQ", "IR", "PA", "PF", "NF", "GG", "JK", "O")

TAXONOMY_NAMES = {
    "OQ": "Original Question",
    "RQ": "Repeat Question",
    "CQ": "Clarifying Question",
    "FD": "Further Details",
    "FQ": "Follow-up Question",
    "IR": "Information Request",
    "PA": "Potential Answer",
    "PF": "Positive Feedback",
    "NF": "Negative Feedback",
    "GG": "Greetings/Gratitude",
    "JK": "Junk",
    "O": "Others",
}

PUNCT = set('.,!?;:()[]"\'')


class CorpusError(ValueError):
    """Malformed or inconsistent corpus data."""


@dataclass(frozen=True)
class Utterance:
    speaker: str
    text: str
    labels: frozenset = frozenset()

    @property
    def tokens(self) -> list[str]:
        return tokenize(self.text)


@dataclass(frozen=True)
class Dialogue:
    id: str
    utterances: tuple

    def __post_init__(self):
        if len(self.utterances) == 0:
            raise CorpusError(f"dialogue {self.id!r} has no utterances")
        object.__setattr__(self, "utterances", tuple(self.utterances))

    def __len__(self):
        return len(self.utterances)

    @property
    def label_sets(self) -> list[frozenset]:
        return [u.labels for u in self.utterances]


@dataclass
class Corpus:
    dialogues: list
    taxonomy: tuple = TAXONOMY
    provenance: str = ""

    def __post_init__(self):
        self.dialogues = list(self.dialogues)
        self.taxonomy = tuple(self.taxonomy)
        if len(set(self.taxonomy)) != len(self.taxonomy):
            raise CorpusError("taxonomy codes must be unique")
        seen = set()
        for d in self.dialogues:
            if d.id in seen:
                raise CorpusError(f"duplicate dialogue id {d.id!r}")
            seen.add(d.id)

    def __len__(self):
        return len(self.dialogues)

    def __iter__(self):
        return iter(self.dialogues)

    @property
    def num_utterances(self) -> int:
        return sum(len(d) for d in self.dialogues)

    def label_matrix(self, dialogue: Dialogue) -> np.ndarray:
        """Binary ``(s, c)`` reference matrix in taxonomy column order."""
        col = {code: j for j, code in enumerate(self.taxonomy)}
        Y = np.zeros((len(dialogue), len(self.taxonomy)), dtype=DTYPE)
        for t, u in enumerate(dialogue.utterances):
            for code in u.labels:
                Y[t, col[code]] = 1.0
        return Y


# ---------------------------------------------------------------------------
# tokenization and vocabulary
# ---------------------------------------------------------------------------

def tokenize(text: str) -> list[str]:
    """Lowercase whitespace tokenizer.

    Characters from ``.,!?;:()[]"'`` at either end of a whitespace token are
    split off as single-character tokens; interior punctuation is kept, so
    ``"Win+Shift+Cursor"`` stays whole and ``"n't"`` is untouched.
    """
    out = []
    for raw in text.lower().split():
        lead = 0
        while lead < len(raw) and raw[lead] in PUNCT:
            lead += 1
        trail = len(raw)
        while trail > lead and raw[trail - 1] in PUNCT:
            trail -= 1
        out.extend(raw[:lead])
        if trail > lead:
            out.append(raw[lead:trail])
        out.extend(raw[trail:])
    return out


class Vocabulary:
    """Token to index map with PAD=0 and OOV=1 reserved."""

    PAD_TOKEN = "<pad>"
    OOV_TOKEN = "<oov>"

    def __init__(self, tokens: Iterable[str] = ()):
        self.itos = [self.PAD_TOKEN, self.OOV_TOKEN]
        self.stoi = {self.PAD_TOKEN: PAD, self.OOV_TOKEN: OOV}
        for tok in tokens:
            if tok in self.stoi:
                raise ValueError(f"duplicate vocabulary token {tok!r}")
            self.stoi[tok] = len(self.itos)
            self.itos.append(tok)

    def __len__(self):
        return len(self.itos)

    def __contains__(self, token):
        return token in self.stoi

    def __eq__(self, other):
        return isinstance(other, Vocabulary) and self.itos == other.itos

    def index(self, token: str) -> int:
        return self.stoi.get(token, OOV)

    def encode(self, tokens: Sequence[str], min_len: int = 1) -> np.ndarray:
        """Indices for ``tokens``, right-padded with PAD to at least ``min_len``."""
        ids = [self.index(t) for t in tokens]
        ids.extend([PAD] * max(0, min_len - len(ids)))
        return np.asarray(ids, dtype=np.int64)

    def encode_dialogue(self, dialogue: Dialogue, min_len: int = 1) -> list[np.ndarray]:
        return [self.encode(u.tokens, min_len) for u in dialogue.utterances]


def build_vocab(dialogues: Iterable[Dialogue], min_count: int = 1) -> Vocabulary:
    """Vocabulary of tokens seen at least ``min_count`` times, in first-appearance order."""
    if min_count < 1:
        raise ValueError("min_count must be >= 1")
    counts: Counter = Counter()
    order: list[str] = []
    n_dialogues = 0
    for d in dialogues:
        n_dialogues += 1
        for u in d.utterances:
            for tok in u.tokens:
                if tok not in counts:
                    order.append(tok)
                counts[tok] += 1
    if n_dialogues == 0:
        raise CorpusError("cannot build a vocabulary from an empty training set")
    reserved = {Vocabulary.PAD_TOKEN, Vocabulary.OOV_TOKEN}
    return Vocabulary(t for t in order if counts[t] >= min_count and t not in reserved)


def load_embeddings(path, vocab: Vocabulary, dim: int, rng: np.random.Generator) -> EmbeddingTable:
    """Read a whitespace-separated ``token v1 ... v_dim`` file into an embedding table.

    Vocabulary entries missing from the file are drawn from U(-0.25, 0.25);
    the PAD row is zero. Lines for tokens outside the vocabulary are skipped.
    """
    weights = uniform_init((len(vocab), dim), -0.25, 0.25, rng)
    found = 0
    try:
        fh = open(path, encoding="utf-8")
    except OSError as exc:
        raise CorpusError(f"cannot read embeddings file {path}: {exc}") from exc
    with fh:
        for lineno, line in enumerate(fh, start=1):
            parts = line.rstrip("\n").split()
            if not parts:
                continue
            if len(parts) != dim + 1:
                raise CorpusError(
                    f"{path}:{lineno}: expected 1 token and {dim} values, got {len(parts) - 1} values")
            tok = parts[0]
            if tok not in vocab:
                continue
            try:
                weights[vocab.index(tok)] = [float(v) for v in parts[1:]]
            except ValueError as exc:
                raise CorpusError(f"{path}:{lineno}: {exc}") from exc
            found += 1
    log.info("loaded %d / %d vocabulary vectors from %s", found, len(vocab) - 2, path)
    return EmbeddingTable(weights)


# ---------------------------------------------------------------------------
# file formats
# ---------------------------------------------------------------------------

def load_corpus(path, format: str = "native") -> Corpus:
    try:
        with open(path, encoding="utf-8") as fh:
            raw = json.load(fh)
    except OSError as exc:
        raise CorpusError(f"cannot read corpus {path}: {exc}") from exc
    except json.JSONDecodeError as exc:
        raise CorpusError(f"{path} is not valid JSON: {exc}") from exc
    if format == "native":
        return corpus_from_native(raw)
    if format == "msdialog":
        return corpus_from_msdialog(raw, provenance=f"MSDialog-Intent adapter: {os.path.basename(str(path))}")
    raise ValueError(f"unknown corpus format {format!r}")


def corpus_from_native(raw) -> Corpus:
    if not isinstance(raw, dict) or "dialogues" not in raw:
        raise CorpusError("native corpus must be an object with a 'dialogues' list")
    taxonomy = tuple(raw.get("taxonomy", TAXONOMY))
    known = set(taxonomy)
    dialogues = []
    for k, d in enumerate(raw["dialogues"]):
        try:
            utts = []
            for u in d["utterances"]:
                labels = frozenset(u.get("labels", []))
                unknown = labels - known
                if unknown:
                    raise CorpusError(f"dialogue {d.get('id', k)!r}: labels {sorted(unknown)} not in taxonomy")
                utts.append(Utterance(str(u.get("speaker", "")), str(u["text"]), labels))
            dialogues.append(Dialogue(str(d["id"]), tuple(utts)))
        except (KeyError, TypeError) as exc:
            raise CorpusError(f"malformed dialogue #{k}: {exc!r}") from exc
    return Corpus(dialogues, taxonomy, str(raw.get("provenance", "")))


def corpus_to_native(corpus: Corpus) -> dict:
    order = {code: j for j, code in enumerate(corpus.taxonomy)}
    return {
        "taxonomy": list(corpus.taxonomy),
        "provenance": corpus.provenance,
        "dialogues": [
            {
                "id": d.id,
                "utterances": [
                    {"speaker": u.speaker, "text": u.text, "labels": sorted(u.labels, key=order.__getitem__)}
                    for u in d.utterances
                ],
            }
            for d in corpus.dialogues
        ],
    }


def save_corpus(corpus: Corpus, path) -> None:
    atomic_write_text(path, json.dumps(corpus_to_native(corpus), indent=1) + "\n")


def parse_tags(tags: str, taxonomy: Sequence[str] = TAXONOMY) -> frozenset:
    """Turn a tag string like ``"GG PA PA"`` into a label set, dropping unknown codes."""
    known = set(taxonomy)
    out = set()
    for tag in tags.split():
        if tag in known:
            out.add(tag)
        else:
            log.warning("dropping tag %r outside the taxonomy", tag)
    return frozenset(out)


def corpus_from_msdialog(raw, taxonomy: Sequence[str] = TAXONOMY, provenance: str = "MSDialog-Intent") -> Corpus:
    """Adapt the MSDialog-Intent JSON layout.

    Accepts ``{dialog_id: {"utterances": [...]}}`` or a list of such records
    carrying their own ``dialog_id``. Utterances need ``utterance`` (or
    ``text``) and a space-separated ``tags`` string; they are ordered by
    ``utterance_pos`` when present. Metadata fields are ignored.
    """
    if isinstance(raw, dict):
        items = list(raw.items())
    elif isinstance(raw, list):
        items = [(rec.get("dialog_id", rec.get("id", k)), rec) for k, rec in enumerate(raw)]
    else:
        raise CorpusError("unknown MSDialog structure: expected an object or a list")
    dialogues = []
    for did, rec in items:
        if not isinstance(rec, dict) or not isinstance(rec.get("utterances"), list):
            raise CorpusError(f"dialogue {did!r}: missing 'utterances' list")
        utts = rec["utterances"]
        if utts and all("utterance_pos" in u for u in utts):
            utts = sorted(utts, key=lambda u: int(u["utterance_pos"]))
        converted = []
        for u in utts:
            text = u.get("utterance", u.get("text"))
            if text is None:
                raise CorpusError(f"dialogue {did!r}: utterance without text")
            speaker = str(u.get("user_id", u.get("actor_type", u.get("speaker", ""))))
            converted.append(Utterance(speaker, str(text), parse_tags(str(u.get("tags", "")), taxonomy)))
        dialogues.append(Dialogue(str(did), tuple(converted)))
    return Corpus(dialogues, tuple(taxonomy), provenance)


# ---------------------------------------------------------------------------
# splitting
# ---------------------------------------------------------------------------

def split_sizes(n: int, ratios=(8, 1, 1)) -> tuple[int, int, int]:
    """Sizes of the three parts of ``n`` dialogues.

    Cuts at ``floor(r0/R * n)`` and ``floor((r0+r1)/R * n)``, the remainder
    going to the last part; each cut is then nudged so no part is empty.
    """
    if len(ratios) != 3 or any(r <= 0 for r in ratios):
        raise ValueError("ratios must be three positive numbers")
    if n < 3:
        raise CorpusError(f"need at least 3 dialogues to split into 3 parts, got {n}")
    total = float(sum(ratios))
    cut1 = min(int(np.floor(ratios[0] / total * n)), n - 2)
    cut1 = max(cut1, 1)
    cut2 = min(int(np.floor((ratios[0] + ratios[1]) / total * n)), n - 1)
    cut2 = max(cut2, cut1 + 1)
    return cut1, cut2 - cut1, n - cut2


def split_corpus(corpus: Corpus, ratios=(8, 1, 1), seed: int = 0) -> tuple[Corpus, Corpus, Corpus]:
    """Seeded shuffle of dialogues, then contiguous train/validation/test cuts."""
    n = len(corpus)
    n_train, n_val, _ = split_sizes(n, ratios)
    perm = make_rng(seed).permutation(n)
    shuffled = [corpus.dialogues[i] for i in perm]
    parts = (shuffled[:n_train], shuffled[n_train:n_train + n_val], shuffled[n_train + n_val:])
    return tuple(Corpus(p, corpus.taxonomy, corpus.provenance) for p in parts)


# ---------------------------------------------------------------------------
# synthetic corpora
# ---------------------------------------------------------------------------

DEFAULT_KEYWORDS = {
    "OQ": ["how", "problem"],
    "RQ": ["again", "same"],
    "CQ": ["mean", "clarify"],
    "FD": ["details", "version"],
    "FQ": ["also", "another"],
    "IR": ["please", "provide"],
    "PA": ["try", "solution"],
    "PF": ["works", "fixed"],
    "NF": ["still", "failed"],
    "GG": ["thanks", "hello"],
    "JK": ["spam", "lol"],
    "O": ["misc", "whatever"],
}

FILLER = tuple(f"w{k}" for k in range(40))


def planted_matrix(rows: Mapping[str, Mapping[str, float]], taxonomy: Sequence[str] = TAXONOMY) -> np.ndarray:
    """Build a ``(c+1, c+1)`` transition matrix from ``{from: {to: prob}}``.

    Rows are the taxonomy codes then ``"INIT"``; columns the codes then ``"TERM"``.
    """
    rix = {code: j for j, code in enumerate(taxonomy)}
    rix["INIT"] = len(taxonomy)
    cix = {code: j for j, code in enumerate(taxonomy)}
    cix["TERM"] = len(taxonomy)
    P = np.zeros((len(taxonomy) + 1, len(taxonomy) + 1), dtype=DTYPE)
    for src, row in rows.items():
        for dst, prob in row.items():
            P[rix[src], cix[dst]] = prob
    return P


def random_planted_matrix(rng: np.random.Generator, taxonomy: Sequence[str] = TAXONOMY,
                          term_weight: float = 1.0) -> np.ndarray:
    c = len(taxonomy)
    P = rng.dirichlet(np.ones(c + 1), size=c + 1)
    P[:, c] *= term_weight
    P[c, c] = 0.0  # INIT -> TERM would make an empty dialogue
    return P / P.sum(axis=1, keepdims=True)


def _check_planted(P: np.ndarray, c: int) -> None:
    if P.shape != (c + 1, c + 1):
        raise ValueError(f"planted matrix must be {(c + 1, c + 1)}, got {P.shape}")
    if np.any(P < 0):
        raise ValueError("planted matrix has negative entries")
    sums = P.sum(axis=1)
    bad = ~(np.isclose(sums, 1.0, rtol=0, atol=1e-9) | (sums == 0))
    if np.any(bad) or abs(sums[c] - 1.0) > 1e-9:
        raise ValueError("planted matrix is not row-stochastic")


def _utterance_text(labels, keywords, noise_rate, rng) -> str:
    words = [kw[rng.integers(len(kw))] for kw in (keywords[code] for code in sorted(labels))]
    words += [FILLER[k] for k in rng.integers(len(FILLER), size=rng.binomial(6, noise_rate))]
    return " ".join(words[i] for i in rng.permutation(len(words)))


def gen_synthetic(
    num_dialogues: int,
    length_range=(1, 30),
    transitions: np.ndarray | Mapping | None = None,
    keywords: Mapping[str, Sequence[str]] | None = None,
    noise_rate: float = 0.3,
    seed: int = 0,
    taxonomy: Sequence[str] = TAXONOMY,
    extra_label_rate: float = 0.0,
) -> Corpus:
    """Sample dialogues whose label sequence follows a planted Markov chain.

    The chain starts at INIT and stops on TERM. A dialogue that reaches
    ``length_range[1]`` utterances is cut there; one that terminates before
    ``length_range[0]`` is redrawn. Each utterance contains one keyword per
    label plus ``Binomial(6, noise_rate)`` filler tokens, shuffled. With
    ``extra_label_rate > 0`` an utterance gains a second, uniformly drawn label
    with that probability (the chain itself stays single-label).
    """
    taxonomy = tuple(taxonomy)
    c = len(taxonomy)
    rng = make_rng(seed)
    if transitions is None:
        P = random_planted_matrix(rng, taxonomy)
    elif isinstance(transitions, Mapping):
        P = planted_matrix(transitions, taxonomy)
    else:
        P = np.asarray(transitions, dtype=DTYPE)
    _check_planted(P, c)
    keywords = dict(DEFAULT_KEYWORDS if keywords is None else keywords)
    reachable = [taxonomy[j] for j in range(c) if np.any(P[:, j] > 0)]
    if extra_label_rate > 0:
        reachable = list(taxonomy)
    missing = [code for code in reachable if not keywords.get(code)]
    if missing:
        raise ValueError(f"labels without keywords: {missing}")
    lo, hi = length_range
    if not 1 <= lo <= hi:
        raise ValueError(f"bad length range {length_range}")

    dialogues = []
    for k in range(num_dialogues):
        for _attempt in range(10_000):
            seq = []
            state = c  # INIT row
            while len(seq) < hi:
                row = P[state]
                if row.sum() == 0:
                    raise ValueError(f"chain reached {taxonomy[state]} whose planted row is empty")
                nxt = int(rng.choice(c + 1, p=row))
                if nxt == c:
                    break
                seq.append(nxt)
                state = nxt
            if len(seq) >= lo:
                break
        else:
            raise ValueError(f"could not draw a dialogue with length in {length_range}")
        utts = []
        for t, j in enumerate(seq):
            labels = {taxonomy[j]}
            if extra_label_rate > 0 and rng.random() < extra_label_rate:
                others = [code for code in taxonomy if code not in labels]
                labels.add(others[rng.integers(len(others))])
            utts.append(Utterance("user" if t % 2 == 0 else "agent",
                                  _utterance_text(labels, keywords, noise_rate, rng), frozenset(labels)))
        dialogues.append(Dialogue(f"syn-{k:05d}", tuple(utts)))
    return Corpus(dialogues, taxonomy, f"synthetic markov chain, seed={seed}")


def gen_long_range(
    num_dialogues: int,
    length_range=(6, 6),
    cue_offset: int | None = None,
    noise_rate: float = 0.3,
    seed: int = 0,
) -> Corpus:
    """Dialogues whose last label depends only on a distant cue utterance.

    The cue utterance (the first one by default, or ``cue_offset`` positions
    before the last) is labelled OQ and contains either ``"alpha"`` or
    ``"beta"``. The last utterance is always the noise-free text
    ``"final reply"`` and is labelled PF after ``alpha``, NF after ``beta``. Utterances in between carry one
    of FD, PA, IR, GG with their usual keywords.
    """
    rng = make_rng(seed)
    lo, hi = length_range
    if lo < 2 or hi < lo:
        raise ValueError(f"bad length range {length_range}")
    middle = ("FD", "PA", "IR", "GG")
    dialogues = []
    for k in range(num_dialogues):
        s = int(rng.integers(lo, hi + 1))
        cue = 0 if cue_offset is None else s - 1 - cue_offset
        if not 0 <= cue < s - 1:
            raise ValueError(f"cue offset {cue_offset} does not fit a dialogue of length {s}")
        positive = bool(rng.random() < 0.5)
        utts = []
        for t in range(s):
            speaker = "user" if t % 2 == 0 else "agent"
            if t == cue:
                words = ["alpha" if positive else "beta", DEFAULT_KEYWORDS["OQ"][rng.integers(2)]]
                labels = {"OQ"}
            elif t == s - 1:
                words = ["final", "reply"]
                labels = {"PF" if positive else "NF"}
            else:
                code = middle[rng.integers(len(middle))]
                words = [DEFAULT_KEYWORDS[code][rng.integers(2)]]
                labels = {code}
            if t < s - 1:
                words += [FILLER[j] for j in rng.integers(len(FILLER), size=rng.binomial(6, noise_rate))]
                words = [words[i] for i in rng.permutation(len(words))]
            utts.append(Utterance(speaker, " ".join(words), frozenset(labels)))
        dialogues.append(Dialogue(f"lr-{k:05d}", tuple(utts)))
    return Corpus(dialogues, TAXONOMY, f"synthetic long-range cue, seed={seed}")
