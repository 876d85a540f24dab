"""Noun-level opinion detection and pairwise agree/disagree judgement.

Each noun occurrence gets an opinion word and a polarity in {-1, 0, +1}:

1. an opinion word within +-4 tokens in the same clause (nearest wins,
   ties go left);
2. otherwise the member of OS(n) with the highest statistical dependence
   SD = CO / AVEDIS over the whole corpus;
3. the lexicon polarity is flipped once per negation token among the 3
   tokens preceding a windowed opinion word.

Adversative tokens ("but", "however") close a clause.
"""

from __future__ import annotations

import itertools
import logging
from collections import defaultdict
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Mapping, Sequence

import numpy as np

from .corpus import HeterogeneousGraph, Message, Token, Vocabulary
from .errors import FormatError, ValidationError

logger = logging.getLogger(__name__)

OS_SIZE = 20
WINDOW = 4
NEGATION_SCOPE = 3

AGREE = "agree"
DISAGREE = "disagree"
UNKNOWN = "unknown"


@dataclass
class CorpusStats:
    co: dict[str, dict[str, int]] = field(default_factory=dict)
    gap_sum: dict[str, dict[str, int]] = field(default_factory=dict)
    os: dict[str, tuple[str, ...]] = field(default_factory=dict)

    def CO(self, noun: str, word: str) -> int:
        return self.co.get(noun, {}).get(word, 0)

    def AVEDIS(self, noun: str, word: str) -> float:
        c = self.CO(noun, word)
        if c == 0:
            return 0.0
        return self.gap_sum[noun][word] / c

    def to_json(self) -> dict:
        return {
            n: [[w, self.co[n][w], self.gap_sum[n][w]] for w in words]
            for n, words in sorted(self.os.items())
            if words
        }

    @classmethod
    def from_json(cls, obj: Mapping) -> "CorpusStats":
        stats = cls()
        for n, rows in obj.items():
            stats.co[n] = {w: int(c) for w, c, _ in rows}
            stats.gap_sum[n] = {w: int(g) for w, _, g in rows}
            stats.os[n] = tuple(w for w, _, _ in rows)
        return stats


@dataclass(frozen=True)
class OpinionRecord:
    message_id: str
    position: int
    noun: int
    opinion_word: int | None
    polarity: int
    source: str | None = None  # "window", "sd" or None


def _clause_ids(tokens: Sequence[Token]) -> list[int]:
    """Clause number per token; adversative tokens get -1."""
    ids = []
    clause = 0
    for tok in tokens:
        if tok.pos == "adversative":
            clause += 1
            ids.append(-1)
        else:
            ids.append(clause)
    return ids


def build_corpus_stats(graph: HeterogeneousGraph, vocab: Vocabulary, top: int = OS_SIZE) -> CorpusStats:
    """Co-occurrence counts and mean token gaps between nouns and opinion words.

    A message contributes one co-occurrence per distinct (noun, word) pair,
    with gap = the smallest position difference between their occurrences.
    """
    co: dict[str, dict[str, int]] = defaultdict(dict)
    gaps: dict[str, dict[str, int]] = defaultdict(dict)
    for msg in graph.messages.values():
        noun_pos: dict[str, list[int]] = defaultdict(list)
        word_pos: dict[str, list[int]] = defaultdict(list)
        for tok in msg.tokens:
            if tok.pos == "noun":
                noun_pos[tok.text].append(tok.position)
            elif vocab.is_opinion_word(tok):
                word_pos[tok.text].append(tok.position)
        for n, pn in noun_pos.items():
            for w, pw in word_pos.items():
                gap = min(abs(a - b) for a in pn for b in pw)
                co[n][w] = co[n].get(w, 0) + 1
                gaps[n][w] = gaps[n].get(w, 0) + gap
    stats = CorpusStats(co=dict(co), gap_sum=dict(gaps))
    for n in vocab.nouns:
        ranked = sorted(co.get(n, {}).items(), key=lambda kv: (-kv[1], kv[0]))
        stats.os[n] = tuple(w for w, _ in ranked[:top])
    return stats


def statistical_dependence(noun: str, word: str, stats: CorpusStats) -> float:
    c = stats.CO(noun, word)
    if c == 0:
        return 0.0
    return c / stats.AVEDIS(noun, word)


def _sd_argmax(noun: str, stats: CorpusStats, min_sd: float) -> str | None:
    best = None
    best_key = None
    for w in stats.os.get(noun, ()):
        sd = statistical_dependence(noun, w, stats)
        if sd <= 0 or sd < min_sd:
            continue
        # higher SD, then higher CO, then lexicographically smaller word
        key = (-sd, -stats.CO(noun, w), w)
        if best_key is None or key < best_key:
            best, best_key = w, key
    return best


def _negations_before(tokens: Sequence[Token], clauses: Sequence[int], pos: int) -> int:
    count = 0
    for q in range(max(0, pos - NEGATION_SCOPE), pos):
        if clauses[q] == clauses[pos] and tokens[q].pos == "negation":
            count += 1
    return count


def resolve_opinion(
    noun_token: Token,
    message: Message,
    stats: CorpusStats,
    vocab: Vocabulary,
    min_sd: float = 0.0,
    _clauses: Sequence[int] | None = None,
) -> OpinionRecord:
    tokens = message.tokens
    p = noun_token.position
    if p >= len(tokens) or tokens[p] != noun_token:
        raise ValidationError(f"token at {p} is not part of message {message.message_id!r}")
    clauses = _clauses if _clauses is not None else _clause_ids(tokens)
    noun_idx = vocab.noun_index(noun_token.text)

    best = None
    for q in range(max(0, p - WINDOW), min(len(tokens), p + WINDOW + 1)):
        if q == p or clauses[q] != clauses[p] or not vocab.is_opinion_word(tokens[q]):
            continue
        # scanning left to right keeps the leftmost of equally near words
        if best is None or abs(q - p) < abs(best - p):
            best = q
    if best is not None:
        word = tokens[best].text
        polarity = vocab.polarity[word]
        if _negations_before(tokens, clauses, best) % 2 == 1:
            polarity = -polarity
        return OpinionRecord(message.message_id, p, noun_idx, vocab.opinion_index(word), polarity, "window")

    word = _sd_argmax(noun_token.text, stats, min_sd)
    if word is None or word not in vocab.polarity:
        return OpinionRecord(message.message_id, p, noun_idx, None, 0, None)
    return OpinionRecord(message.message_id, p, noun_idx, vocab.opinion_index(word), vocab.polarity[word], "sd")


def resolve_message(message: Message, stats: CorpusStats, vocab: Vocabulary, min_sd: float = 0.0) -> list[OpinionRecord]:
    """One record per noun token, in position order; unknown nouns are skipped."""
    clauses = _clause_ids(message.tokens)
    return [
        resolve_opinion(tok, message, stats, vocab, min_sd, clauses)
        for tok in message.nouns()
        if vocab.has_noun(tok.text)
    ]


def resolve_all(graph: HeterogeneousGraph, vocab: Vocabulary, stats: CorpusStats, min_sd: float = 0.0) -> dict[str, list[OpinionRecord]]:
    return {mid: resolve_message(msg, stats, vocab, min_sd) for mid, msg in graph.messages.items()}


def message_polarity(records: Iterable[OpinionRecord]) -> int:
    """Overall polarity of a message: sign of the summed noun polarities."""
    total = sum(r.polarity for r in records)
    return int(np.sign(total))


# ---------------------------------------------------------------------------
# Competitive entities
# ---------------------------------------------------------------------------


class CoETable:
    """Symmetric noun-pair table: 1 = consistent, 0 = opposite."""

    def __init__(self, pairs: Mapping[tuple[str, str], int] | None = None):
        self._table: dict[frozenset, int] = {}
        for (a, b), label in (pairs or {}).items():
            self.add(a, b, label)

    def add(self, a: str, b: str, label: int) -> None:
        if label not in (0, 1):
            raise ValidationError(f"CoE label must be 0 or 1, got {label!r}")
        self._table[frozenset((a, b))] = label

    def lookup(self, a: str, b: str) -> int | None:
        return self._table.get(frozenset((a, b)))

    def __len__(self) -> int:
        return len(self._table)

    def items(self):
        for key, label in self._table.items():
            pair = sorted(key)
            yield (pair[0], pair[-1]), label


def load_coe(path) -> CoETable:
    """Read ``nounA<TAB>nounB<TAB>0|1``; rows with an empty label are skipped."""
    path = Path(path)
    table = CoETable()
    with path.open(encoding="utf-8") as fh:
        for line_no, line in enumerate(fh, start=1):
            line = line.rstrip("\n")
            if not line.strip() or line.startswith("#"):
                continue
            parts = line.split("\t")
            if len(parts) != 3:
                raise FormatError(path, line_no, "expected nounA<TAB>nounB<TAB>0|1")
            if parts[2] == "":
                continue
            if parts[2] not in ("0", "1"):
                raise FormatError(path, line_no, f"label must be 0 or 1, got {parts[2]!r}")
            table.add(parts[0], parts[1], int(parts[2]))
    return table


def write_coe(path, pairs: Iterable[tuple[str, str]], labels: Mapping[tuple[str, str], int] | None = None, header: str | None = None) -> None:
    labels = labels or {}
    with Path(path).open("w", encoding="utf-8") as fh:
        if header:
            fh.write(f"# {header}\n")
        for a, b in pairs:
            label = labels.get((a, b), "")
            fh.write(f"{a}\t{b}\t{label}\n")


def build_coe_candidates(phi: np.ndarray, top_n: int, nouns: Sequence[str] | None = None) -> list[tuple[str, str]] | list[tuple[int, int]]:
    """All unordered pairs among each topic's top_n nouns, de-duplicated.

    Pairs are returned sorted; as noun strings when ``nouns`` is given,
    otherwise as noun indices.
    """
    phi = np.asarray(phi)
    if top_n < 2:
        raise ValidationError("top_n must be at least 2")
    n_nouns = phi.shape[1]
    if top_n > n_nouns:
        logger.warning("top_n=%d exceeds vocabulary size %d; clamped", top_n, n_nouns)
        top_n = n_nouns
    pairs = set()
    for row in phi:
        top = sorted(np.argsort(-row, kind="stable")[:top_n].tolist())
        pairs.update(itertools.combinations(top, 2))
    ordered = sorted(pairs)
    if nouns is None:
        return ordered
    return sorted(tuple(sorted((nouns[a], nouns[b]))) for a, b in ordered)


def agreement_label(o_i: int, o_j: int, n_i: str, n_j: str, coe: CoETable) -> str:
    """Agree/disagree judgement for two noun-level opinions."""
    if o_i == 0 or o_j == 0:
        return UNKNOWN
    if n_i == n_j:
        return AGREE if o_i == o_j else DISAGREE
    rel = coe.lookup(n_i, n_j)
    if rel is None:
        return UNKNOWN
    if rel == 1:
        return AGREE if o_i == o_j else DISAGREE
    return AGREE if o_i != o_j else DISAGREE
