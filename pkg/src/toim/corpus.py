"""Heterogeneous message graph: ingestion, validation, indexing.

A corpus is a set of users and the messages they wrote. Posts start a
thread; comments, replies and mentions point at a parent message (and
at the thread root). Every non-post message whose parent was written by
someone else yields a reply edge ``(replier, replied_to, via_message)``.

Input is JSONL, one message per line::

    {"id": "m1", "user": "A", "kind": "post", "parent": null, "root": null,
     "ts": 1317427200, "tokens": [{"t": "movie", "pos": "noun"}, ...]}

An optional integer ``"followers"`` key carries the author's follower
count (used for influence ranks). Lines starting with ``#`` are comments.
"""

from __future__ import annotations

import json
import logging
from collections import Counter
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Mapping

from .errors import FormatError, ValidationError

logger = logging.getLogger(__name__)

KINDS = ("post", "comment", "reply", "mention")

# wire tag -> internal part of speech
POS_TAGS = {
    "noun": "noun",
    "adj": "adjective",
    "verb": "verb",
    "modal": "modal",
    "neg": "negation",
    "adv": "adversative",
    "other": "other",
}
_POS_WIRE = {v: k for k, v in POS_TAGS.items()}

# parts of speech that may carry an opinion
OPINION_POS = frozenset({"adjective", "verb", "modal"})


@dataclass(frozen=True)
class Token:
    text: str
    pos: str
    position: int


@dataclass(frozen=True)
class User:
    user_id: str
    follower_count: int = 0


@dataclass(frozen=True)
class Message:
    message_id: str
    author: str
    kind: str
    parent_message: str | None
    root_message: str | None
    timestamp: int
    tokens: tuple[Token, ...]

    def texts(self) -> set[str]:
        return {tok.text for tok in self.tokens}

    def nouns(self) -> list[Token]:
        return [tok for tok in self.tokens if tok.pos == "noun"]


@dataclass(frozen=True)
class ReplyEdge:
    replier: str
    replied_to: str
    via: str


@dataclass(frozen=True)
class HeterogeneousGraph:
    """The graph G = (U, M, A, E); treat as immutable after construction."""

    users: Mapping[str, User]
    messages: Mapping[str, Message]
    post_edges: tuple[tuple[str, str], ...]
    reply_edges: tuple[ReplyEdge, ...]
    _children: Mapping[str, tuple[str, ...]] = field(default_factory=dict, repr=False, compare=False)

    @property
    def user_ids(self) -> list[str]:
        return sorted(self.users)

    def children(self, message_id: str) -> tuple[str, ...]:
        return self._children.get(message_id, ())

    def depth(self, message_id: str) -> int:
        d = 0
        msg = self.messages[message_id]
        while msg.parent_message is not None:
            d += 1
            msg = self.messages[msg.parent_message]
        return d

    def ordered_messages(self) -> list[Message]:
        """Messages with every parent before its children.

        Order is (thread depth, timestamp, id) so it is fully deterministic.
        """
        keyed = sorted(
            self.messages.values(),
            key=lambda m: (self.depth(m.message_id), m.timestamp, m.message_id),
        )
        return keyed

    def records(self) -> list[tuple[Message, Message]]:
        """All (parent, child) message pairs written by two different users."""
        out = []
        for edge in self.reply_edges:
            child = self.messages[edge.via]
            out.append((self.messages[child.parent_message], child))
        return out

    def summary(self) -> dict:
        return {
            "users": len(self.users),
            "messages": len(self.messages),
            "post_edges": len(self.post_edges),
            "reply_edges": len(self.reply_edges),
        }


@dataclass(frozen=True)
class Vocabulary:
    """Noun vocabulary W_N and opinion vocabulary W_O (separate index spaces)."""

    nouns: tuple[str, ...]
    opinion_words: tuple[str, ...]
    polarity: Mapping[str, int]

    def __post_init__(self):
        object.__setattr__(self, "_noun_index", {n: i for i, n in enumerate(self.nouns)})
        object.__setattr__(self, "_op_index", {w: i for i, w in enumerate(self.opinion_words)})
        for w in self.opinion_words:
            if self.polarity.get(w) not in (1, -1):
                raise ValidationError(f"opinion word {w!r} has no +1/-1 polarity")

    @property
    def N(self) -> int:
        return len(self.nouns)

    @property
    def A(self) -> int:
        return len(self.opinion_words)

    def has_noun(self, noun: str) -> bool:
        return noun in self._noun_index

    def noun_index(self, noun: str) -> int:
        return self._noun_index[noun]

    def opinion_index(self, word: str) -> int:
        return self._op_index[word]

    def is_opinion_word(self, token: Token) -> bool:
        return token.pos in OPINION_POS and token.text in self._op_index


# ---------------------------------------------------------------------------
# Parsing
# ---------------------------------------------------------------------------


def parse_message(obj: dict) -> tuple[Message, int | None]:
    """Build a Message from one decoded JSON line; also return ``followers``."""
    try:
        mid = obj["id"]
        user = obj["user"]
        kind = obj["kind"]
        ts = obj["ts"]
        raw_tokens = obj["tokens"]
    except KeyError as exc:
        raise ValueError(f"missing key {exc.args[0]!r}") from None
    if not isinstance(mid, str) or not isinstance(user, str):
        raise ValueError("id and user must be strings")
    if kind not in KINDS:
        raise ValueError(f"unknown kind {kind!r}")
    if not isinstance(ts, int) or isinstance(ts, bool):
        raise ValueError("ts must be an integer")
    parent = obj.get("parent")
    root = obj.get("root")
    if kind == "post":
        if parent is not None or root is not None:
            raise ValueError("a post cannot have parent or root")
    elif parent is None or root is None:
        raise ValueError(f"a {kind} needs both parent and root")
    tokens = []
    for i, tok in enumerate(raw_tokens):
        pos = POS_TAGS.get(tok.get("pos"))
        if pos is None or not isinstance(tok.get("t"), str):
            raise ValueError(f"bad token at position {i}: {tok!r}")
        tokens.append(Token(tok["t"], pos, i))
    followers = obj.get("followers")
    if followers is not None and (not isinstance(followers, int) or followers < 0):
        raise ValueError("followers must be a non-negative integer")
    msg = Message(mid, user, kind, parent, root, ts, tuple(tokens))
    return msg, followers


def message_to_wire(msg: Message, followers: int | None = None) -> dict:
    obj = {
        "id": msg.message_id,
        "user": msg.author,
        "kind": msg.kind,
        "parent": msg.parent_message,
        "root": msg.root_message,
        "ts": msg.timestamp,
        "tokens": [{"t": t.text, "pos": _POS_WIRE[t.pos]} for t in msg.tokens],
    }
    if followers is not None:
        obj["followers"] = followers
    return obj


def read_messages(path) -> tuple[list[Message], dict[str, int]]:
    """Parse a JSONL corpus file; forwards are skipped with a warning."""
    path = Path(path)
    messages = []
    followers: dict[str, int] = {}
    with path.open(encoding="utf-8") as fh:
        for line_no, line in enumerate(fh, start=1):
            line = line.strip()
            if not line or line.startswith("#"):
                continue
            try:
                obj = json.loads(line)
                if not isinstance(obj, dict):
                    raise ValueError("expected a JSON object")
                if obj.get("kind") == "forward":
                    logger.warning("%s:%d: forward %s skipped", path, line_no, obj.get("id"))
                    continue
                msg, fc = parse_message(obj)
            except (ValueError, TypeError, AttributeError) as exc:
                raise FormatError(path, line_no, f"malformed message: {exc}") from None
            messages.append(msg)
            if fc is not None:
                followers[msg.author] = max(fc, followers.get(msg.author, 0))
    return messages, followers


def load_lexicon(path) -> dict[str, int]:
    """Read a ``word<TAB>+1|-1`` sentiment lexicon."""
    path = Path(path)
    lexicon: dict[str, int] = {}
    with path.open(encoding="utf-8") as fh:
        for line_no, line in enumerate(fh, start=1):
            line = line.rstrip("\n")
            if not line.strip() or line.startswith("#"):
                continue
            parts = line.split("\t")
            if len(parts) != 2 or parts[1].strip() not in ("+1", "-1", "1"):
                raise FormatError(path, line_no, f"expected word<TAB>+1|-1, got {line!r}")
            lexicon[parts[0]] = 1 if parts[1].strip() in ("+1", "1") else -1
    return lexicon


# ---------------------------------------------------------------------------
# Graph construction
# ---------------------------------------------------------------------------


def build_graph(messages: Iterable[Message], followers: Mapping[str, int] | None = None) -> HeterogeneousGraph:
    """Validate messages and derive the post and reply edge sets."""
    followers = followers or {}
    by_id: dict[str, Message] = {}
    for msg in messages:
        if msg.message_id in by_id:
            raise ValidationError(f"duplicate message_id {msg.message_id!r}")
        by_id[msg.message_id] = msg

    children: dict[str, list[str]] = {}
    for msg in by_id.values():
        if msg.kind == "post":
            continue
        if msg.parent_message not in by_id:
            raise ValidationError(f"dangling parent {msg.parent_message!r} in message {msg.message_id!r}")
        if msg.root_message not in by_id:
            raise ValidationError(f"dangling root {msg.root_message!r} in message {msg.message_id!r}")
        children.setdefault(msg.parent_message, []).append(msg.message_id)

    # parent chains must terminate at a post
    for msg in by_id.values():
        seen = set()
        cur = msg
        while cur.parent_message is not None:
            if cur.message_id in seen:
                raise ValidationError(f"parent cycle through message {msg.message_id!r}")
            seen.add(cur.message_id)
            cur = by_id[cur.parent_message]

    authors = {m.author for m in by_id.values()}
    users = {u: User(u, int(followers.get(u, 0))) for u in sorted(authors)}
    post_edges = tuple(sorted((m.author, m.message_id) for m in by_id.values()))
    reply_edges = []
    for mid in sorted(by_id):
        msg = by_id[mid]
        if msg.kind == "post":
            continue
        target = by_id[msg.parent_message].author
        if target != msg.author:
            reply_edges.append(ReplyEdge(msg.author, target, mid))
    reply_edges.sort(key=lambda e: (e.replier, e.replied_to, e.via))
    return HeterogeneousGraph(
        users=users,
        messages={k: by_id[k] for k in sorted(by_id)},
        post_edges=post_edges,
        reply_edges=tuple(reply_edges),
        _children={k: tuple(sorted(v)) for k, v in children.items()},
    )


def build_vocabulary(graph: HeterogeneousGraph, lexicon: Mapping[str, int]) -> Vocabulary:
    """W_N = all distinct nouns; W_O = lexicon words seen in an opinion-capable slot."""
    nouns = set()
    ops = set()
    for msg in graph.messages.values():
        for tok in msg.tokens:
            if tok.pos == "noun":
                nouns.add(tok.text)
            elif tok.pos in OPINION_POS and tok.text in lexicon:
                ops.add(tok.text)
    return Vocabulary(tuple(sorted(nouns)), tuple(sorted(ops)), {w: lexicon[w] for w in ops})


def ingest_messages(path, lexicon_path) -> tuple[HeterogeneousGraph, Vocabulary]:
    messages, followers = read_messages(path)
    graph = build_graph(messages, followers)
    vocab = build_vocabulary(graph, load_lexicon(lexicon_path))
    logger.info("ingested %s", graph.summary())
    return graph, vocab


# ---------------------------------------------------------------------------
# Queries
# ---------------------------------------------------------------------------


def extract_subgraph(graph: HeterogeneousGraph, keywords: Iterable[str]) -> HeterogeneousGraph:
    """Keep messages mentioning a keyword plus their whole ancestor chain."""
    keywords = set(keywords)
    if not keywords:
        raise ValidationError("keywords must be non-empty")
    keep: set[str] = set()
    for msg in graph.messages.values():
        if msg.texts() & keywords:
            cur = msg
            while cur.message_id not in keep:
                keep.add(cur.message_id)
                if cur.parent_message is None:
                    break
                cur = graph.messages[cur.parent_message]
    # a root field may point outside the parent chain
    for mid in list(keep):
        root = graph.messages[mid].root_message
        while root is not None and root not in keep:
            keep.add(root)
            root = graph.messages[root].parent_message
    followers = {u: graph.users[u].follower_count for u in graph.users}
    return build_graph((graph.messages[m] for m in sorted(keep)), followers)


def interaction_counts(graph: HeterogeneousGraph) -> dict[tuple[str, str], int]:
    """Reply/comment/mention counts per unordered user pair, keyed (min, max)."""
    counts: Counter = Counter()
    for edge in graph.reply_edges:
        a, b = sorted((edge.replier, edge.replied_to))
        counts[(a, b)] += 1
    return dict(counts)


def export_graph(graph: HeterogeneousGraph, jsonl_path, summary_path=None, header: str | None = None) -> None:
    """Write the canonical (id-sorted) JSONL plus an optional summary JSON."""
    jsonl_path = Path(jsonl_path)
    with jsonl_path.open("w", encoding="utf-8") as fh:
        if header:
            fh.write(f"# {header}\n")
        for mid in sorted(graph.messages):
            msg = graph.messages[mid]
            fc = graph.users[msg.author].follower_count
            fh.write(json.dumps(message_to_wire(msg, fc), sort_keys=True) + "\n")
    if summary_path is not None:
        Path(summary_path).write_text(json.dumps(graph.summary(), indent=2, sort_keys=True) + "\n")
