"""Per-pair ledger computation, split so it can run on a worker pool.

Topic assignments are computed first and frozen. Every (parent, reply)
message pair is then grouped under its ordered user pair ``(x, xr)``
(``xr`` replied to ``x``), and each group is processed independently
with its own counter-based random stream. Merging the resulting
fragments is a key-wise sum, so any worker count or schedule yields the
same ledger.
"""

from __future__ import annotations

import hashlib
import logging
import multiprocessing as mp
from collections import defaultdict
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Mapping, Sequence
from urllib.parse import quote, unquote

import numpy as np

from .corpus import HeterogeneousGraph
from .errors import FormatError, ValidationError
from .influence import OpinionLedger
from .opinion import AGREE, DISAGREE, CoETable, OpinionRecord, agreement_label

logger = logging.getLogger(__name__)


def stable_hash(*parts) -> int:
    """64-bit hash that does not depend on PYTHONHASHSEED."""
    text = "\x1f".join(str(p) for p in parts)
    return int.from_bytes(hashlib.blake2b(text.encode("utf-8"), digest_size=8).digest(), "little")


@dataclass(frozen=True)
class PairTask:
    x: str
    xr: str
    records: tuple[tuple[str, str], ...]  # (parent message, reply message)
    subseed: int


@dataclass
class LedgerContext:
    """Read-only inputs shared by every pair task."""

    user_index: dict[str, int]
    n_topics: int
    message_tokens: Mapping[str, Sequence[int]]
    nouns: Sequence[str]        # noun text per token
    polarity: np.ndarray        # opinion per token
    z: np.ndarray               # frozen topic per token
    coe: CoETable
    noai: Mapping[tuple[int, int], float]

    @classmethod
    def from_state(cls, graph, vocab, state, opinions: Mapping[str, Sequence[OpinionRecord]], coe, noai) -> "LedgerContext":
        n_tok = state.z.shape[0]
        polarity = np.zeros(n_tok, dtype=np.int64)
        for mid, toks in state.message_tokens.items():
            recs = opinions.get(mid, ())
            if len(recs) != len(toks):
                raise ValidationError(f"opinion records do not cover the nouns of {mid!r}")
            for t, rec in zip(toks, recs):
                polarity[t] = rec.polarity
        return cls(
            user_index={u: i for i, u in enumerate(graph.user_ids)},
            n_topics=state.K,
            message_tokens=state.message_tokens,
            nouns=[vocab.nouns[w] for w in state.nouns],
            polarity=polarity,
            z=state.z,
            coe=coe,
            noai=noai,
        )


@dataclass
class LedgerFragment:
    pair: tuple[str, str] | None = None
    agree: dict = field(default_factory=dict)
    disagree: dict = field(default_factory=dict)
    noai_agree: dict = field(default_factory=dict)
    opinion: dict = field(default_factory=dict)  # (user, topic) -> [pos, neg]

    def pair_keys(self) -> set:
        return set(self.agree) | set(self.disagree) | set(self.noai_agree)

    def is_empty(self) -> bool:
        return not (self.agree or self.disagree or self.noai_agree or self.opinion)


def _bump(d: dict, key, by: int = 1) -> None:
    d[key] = d.get(key, 0) + by


def partition(graph: HeterogeneousGraph, seed: int = 0) -> list[PairTask]:
    """Group every reply record under its ordered (replied_to, replier) pair."""
    groups: dict[tuple[str, str], list[tuple[str, str]]] = defaultdict(list)
    for parent, child in graph.records():
        groups[(parent.author, child.author)].append((child.timestamp, child.message_id, parent.message_id))
    tasks = []
    for (x, xr) in sorted(groups):
        recs = tuple((p, c) for _, c, p in sorted(groups[(x, xr)]))
        tasks.append(PairTask(x, xr, recs, stable_hash(seed, x, xr)))
    return tasks


def owned_messages(tasks: Iterable[PairTask]) -> set[str]:
    return {child for task in tasks for _, child in task.records}


def _count_opinions(frag: LedgerFragment, user: int, toks: Sequence[int], ctx: LedgerContext) -> None:
    for t in toks:
        o = ctx.polarity[t]
        if o == 0:
            continue
        slot = frag.opinion.setdefault((user, int(ctx.z[t])), [0, 0])
        slot[0 if o > 0 else 1] += 1


def pair_computation(task: PairTask, ctx: LedgerContext, pass_indices: Sequence[int] = (0,)) -> LedgerFragment:
    """Ledger increments contributed by one user pair's reply records."""
    frag = LedgerFragment(pair=(task.x, task.xr))
    i = ctx.user_index[task.x]
    j = ctx.user_index[task.xr]
    nouns, pol, z = ctx.nouns, ctx.polarity, ctx.z
    threshold = ctx.noai.get((i, j), 0.0)
    for p in pass_indices:
        rng = None
        for parent_id, child_id in task.records:
            ptoks = ctx.message_tokens[parent_id]
            ctoks = ctx.message_tokens[child_id]
            _count_opinions(frag, j, ctoks, ctx)
            for a in ptoks:
                za = int(z[a])
                for b in ctoks:
                    if za != z[b]:
                        continue
                    key = (i, j, za)
                    label = agreement_label(int(pol[a]), int(pol[b]), nouns[a], nouns[b], ctx.coe)
                    if label == AGREE:
                        _bump(frag.agree, key)
                    elif label == DISAGREE:
                        _bump(frag.disagree, key)
                    else:
                        if rng is None:
                            rng = np.random.default_rng(np.random.SeedSequence([task.subseed, p]))
                        if rng.random() <= threshold:
                            _bump(frag.agree, key)
                            _bump(frag.noai_agree, key)
    return frag


def solo_fragment(message_ids: Iterable[str], ctx: LedgerContext, authors: Mapping[str, str], passes: int = 1) -> LedgerFragment:
    """Opinion counts for messages not owned by any pair task (posts, self-replies)."""
    frag = LedgerFragment()
    for mid in message_ids:
        user = ctx.user_index[authors[mid]]
        for _ in range(passes):
            _count_opinions(frag, user, ctx.message_tokens[mid], ctx)
    return frag


def merge(fragments: Iterable[LedgerFragment], n_users: int, n_topics: int) -> OpinionLedger:
    """Key-wise sum of fragments; pair keys must not repeat across fragments."""
    ledger = OpinionLedger.empty(n_users, n_topics)
    owner: dict = {}
    for frag in fragments:
        for key in frag.pair_keys():
            if key in owner and owner[key] is not frag:
                raise ValidationError(f"pair key {key} appears in two fragments ({owner[key].pair} and {frag.pair})")
            owner[key] = frag
        for src, dst in ((frag.agree, ledger.agree), (frag.disagree, ledger.disagree), (frag.noai_agree, ledger.noai_agree)):
            for key, v in src.items():
                _bump(dst, key, v)
        for (u, k), (p, n) in frag.opinion.items():
            ledger.pos[u, k] += p
            ledger.neg[u, k] += n
    return ledger


# ---------------------------------------------------------------------------
# Worker pool
# ---------------------------------------------------------------------------

_WORKER_CTX: LedgerContext | None = None


def _run_chunk(args) -> list[tuple[int, LedgerFragment]]:
    chunk, pass_indices = args
    return [(n, pair_computation(task, _WORKER_CTX, pass_indices)) for n, task in chunk]


def run_pair_phase(graph: HeterogeneousGraph, ctx: LedgerContext, seed: int = 0, workers: int = 1,
                   passes: int = 1, pass_offset: int = 0, tasks: list[PairTask] | None = None) -> OpinionLedger:
    """Compute the full ledger from frozen topics with ``workers`` processes."""
    global _WORKER_CTX
    if workers < 1:
        raise ValidationError("workers must be >= 1")
    tasks = partition(graph, seed) if tasks is None else tasks
    pass_indices = tuple(range(pass_offset, pass_offset + passes))
    if workers == 1 or len(tasks) < 2:
        frags = [pair_computation(t, ctx, pass_indices) for t in tasks]
    else:
        indexed = list(enumerate(tasks))
        n_chunks = min(len(tasks), workers * 4)
        chunks = [(indexed[c::n_chunks], pass_indices) for c in range(n_chunks)]
        _WORKER_CTX = ctx
        try:
            with ProcessPoolExecutor(max_workers=workers, mp_context=mp.get_context("fork")) as pool:
                results = [r for part in pool.map(_run_chunk, chunks) for r in part]
        finally:
            _WORKER_CTX = None
        frags = [f for _, f in sorted(results, key=lambda r: r[0])]
    owned = owned_messages(tasks)
    authors = {mid: m.author for mid, m in graph.messages.items()}
    rest = [mid for mid in graph.messages if mid not in owned]
    frags.append(solo_fragment(rest, ctx, authors, passes))
    return merge(frags, len(ctx.user_index), ctx.n_topics)


# ---------------------------------------------------------------------------
# Spill format
# ---------------------------------------------------------------------------
#
# One line per counter: ``x-xr<TAB>topic<TAB>o_x<TAB>o_xr<TAB>count`` with user
# ids percent-encoded. The opinion columns encode the relation relative to x:
# (+1, +1) agree, (+1, -1) disagree, (0, 0) agreement drawn from NOAI.
# Per-user opinion counts use a bare user key: ``u<TAB>topic<TAB>o<TAB>0<TAB>count``.


def _enc(user_id: str) -> str:
    # "-" separates the pair, so it must be escaped as well
    return quote(user_id, safe="").replace("-", "%2D")


def write_spill(frag: LedgerFragment, path, user_ids: Sequence[str]) -> None:
    lines = []
    for src, (ox, oxr) in ((frag.agree, (1, 1)), (frag.disagree, (1, -1)), (frag.noai_agree, (0, 0))):
        for (i, j, k), v in sorted(src.items()):
            if src is frag.agree:
                v -= frag.noai_agree.get((i, j, k), 0)
            if v:
                key = f"{_enc(user_ids[i])}-{_enc(user_ids[j])}"
                lines.append(f"{key}\t{k}\t{ox}\t{oxr}\t{v}")
    for (u, k), (p, n) in sorted(frag.opinion.items()):
        for o, v in ((1, p), (-1, n)):
            if v:
                lines.append(f"{_enc(user_ids[u])}\t{k}\t{o}\t0\t{v}")
    Path(path).write_text("".join(line + "\n" for line in lines), encoding="utf-8")


def read_spill(path, user_index: Mapping[str, int]) -> LedgerFragment:
    frag = LedgerFragment()
    with Path(path).open(encoding="utf-8") as fh:
        for line_no, line in enumerate(fh, start=1):
            parts = line.rstrip("\n").split("\t")
            if len(parts) != 5:
                raise FormatError(path, line_no, "expected 5 tab-separated fields")
            key, k, ox, oxr, v = parts
            try:
                k, ox, oxr, v = int(k), int(ox), int(oxr), int(v)
            except ValueError:
                raise FormatError(path, line_no, "non-integer field") from None
            if "-" in key:
                halves = key.split("-")
                if len(halves) != 2:
                    raise FormatError(path, line_no, f"bad pair key {key!r}")
                x, xr = (unquote(h) for h in halves)
                if x not in user_index or xr not in user_index:
                    raise FormatError(path, line_no, f"unknown user in {key!r}")
                pk = (user_index[x], user_index[xr], k)
                if ox == 0 and oxr == 0:
                    _bump(frag.noai_agree, pk, v)
                    _bump(frag.agree, pk, v)
                elif ox * oxr > 0:
                    _bump(frag.agree, pk, v)
                else:
                    _bump(frag.disagree, pk, v)
                frag.pair = (x, xr)
            else:
                user = unquote(key)
                if user not in user_index:
                    raise FormatError(path, line_no, f"unknown user {user!r}")
                slot = frag.opinion.setdefault((user_index[user], k), [0, 0])
                slot[0 if ox > 0 else 1] += v
    return frag
