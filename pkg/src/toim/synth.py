"""Synthetic corpora with planted topics, opinions and influence.

Topic k owns a disjoint block of nouns ``t{k}_n{q}``. Opinion words are
``good{q}`` (+1) and ``bad{q}`` (-1). A message about topic k with
opinion o looks like::

    t0_n3 is good1 and t0_n7 is not bad0

Posts draw their topic from the author's Theta row, nouns from Phi and
an opinion from Psi. Replies target the latest post of a neighbor, keep
the parent's topic, and agree with the parent's opinion with probability
omega_agree.

The held-out split plays one opinion cascade per object (one object per
topic). Each participant's latent opinion copies a neighbor's under
Omega or is drawn from Psi, and the participant writes one last message
whose planted opinion is the gold label.
"""

from __future__ import annotations

import csv
import json
from dataclasses import asdict, dataclass, field
from pathlib import Path

import numpy as np

from .corpus import Message, Token, message_to_wire
from .errors import FormatError, ValidationError

TOPOLOGIES = ("homophily", "random", "layered")
START_TS = 1317427200
STEP = 60


@dataclass
class SynthSpec:
    users: int = 200
    topics: int = 2
    nouns_per_topic: int = 10
    opinion_words: int = 4           # per polarity
    messages: int = 2000
    reply_rate: float = 0.5
    nouns_per_message: int = 2
    omega_agree: float = 0.9
    theta: list | None = None        # users x topics; default Dirichlet
    theta_concentration: float = 0.1
    phi: list | None = None          # topics x nouns_per_topic; default uniform
    psi: list | None = None          # users x topics, P(+1)
    psi_bias: float = 0.85
    negation_rate: float = 0.1
    reuse_noun_rate: float = 0.5
    targets_per_user: int = 2
    topology: str = "homophily"
    layers: list | None = None       # layered topology: users per layer
    participation: float = 1.0       # held-out: chance a user joins its object
    layer_participation: list | None = None  # layered: per-layer override
    test: bool = True

    @classmethod
    def from_json(cls, obj: dict) -> "SynthSpec":
        unknown = set(obj) - set(cls.__dataclass_fields__)
        if unknown:
            raise ValidationError(f"unknown synth keys: {sorted(unknown)}")
        return cls(**obj)

    def validate(self) -> None:
        if self.users < 2 or self.topics < 1 or self.nouns_per_topic < 1 or self.opinion_words < 1:
            raise ValidationError("users >= 2, topics, nouns_per_topic, opinion_words >= 1 required")
        if self.messages < 0 or self.nouns_per_message < 1:
            raise ValidationError("messages >= 0 and nouns_per_message >= 1 required")
        for name in ("reply_rate", "omega_agree", "psi_bias", "negation_rate", "reuse_noun_rate", "participation"):
            if not 0.0 <= getattr(self, name) <= 1.0:
                raise ValidationError(f"{name} must lie in [0, 1]")
        if self.topology not in TOPOLOGIES:
            raise ValidationError(f"topology must be one of {TOPOLOGIES}")
        if self.topology == "layered":
            if not self.layers or sum(self.layers) != self.users or len(self.layers) < 2:
                raise ValidationError("layers must list >= 2 layer sizes summing to users")
        if self.layer_participation is not None:
            if self.topology != "layered" or len(self.layer_participation) != len(self.layers):
                raise ValidationError("layer_participation needs one entry per layer")
            if any(not 0.0 <= p <= 1.0 for p in self.layer_participation):
                raise ValidationError("layer_participation entries must lie in [0, 1]")
        for name, shape in (("theta", (self.users, self.topics)), ("phi", (self.topics, self.nouns_per_topic)),
                            ("psi", (self.users, self.topics))):
            mat = getattr(self, name)
            if mat is None:
                continue
            arr = np.asarray(mat, dtype=float)
            if arr.shape != shape:
                raise ValidationError(f"{name} has shape {arr.shape}, expected {shape}")
            if np.any(arr < 0) or (name == "psi" and np.any(arr > 1)):
                raise ValidationError(f"{name} has out-of-range entries")
            if name != "psi" and not np.allclose(arr.sum(axis=1), 1.0):
                raise ValidationError(f"rows of {name} must sum to 1")


@dataclass
class SynthCorpus:
    spec: SynthSpec
    seed: int
    user_ids: list[str]
    train: list[Message]
    test: list[Message]
    gold: list[tuple[str, str, str, int]]        # user, message id, object, polarity
    followers: dict[str, int]
    lexicon: dict[str, int]
    coe_pairs: list[tuple[str, str]]
    theta: np.ndarray
    phi: np.ndarray
    psi: np.ndarray
    targets: dict[str, list[str]]
    planted_opinion: dict[str, int] = field(default_factory=dict)
    planted_topic: dict[str, int] = field(default_factory=dict)

    def nouns_of(self, k: int) -> list[str]:
        return [noun_name(k, q) for q in range(self.spec.nouns_per_topic)]


def noun_name(k: int, q: int) -> str:
    return f"t{k}_n{q}"


def _tokens(nouns: list[str], opinion: int, spec: SynthSpec, rng: np.random.Generator) -> tuple[Token, ...]:
    out: list[tuple[str, str]] = []
    for n, noun in enumerate(nouns):
        if n:
            out.append(("and", "other"))
        out += [(noun, "noun"), ("is", "other")]
        word_idx = int(rng.integers(spec.opinion_words))
        if rng.random() < spec.negation_rate:
            out.append(("not", "negation"))
            pol = -opinion
        else:
            pol = opinion
        out.append((f"good{word_idx}" if pol > 0 else f"bad{word_idx}", "adjective"))
    return tuple(Token(t, p, i) for i, (t, p) in enumerate(out))


def layer_of(spec: SynthSpec) -> np.ndarray:
    if spec.topology != "layered":
        return np.zeros(spec.users, dtype=np.int64)
    bounds = np.cumsum([0] + list(spec.layers))
    return np.searchsorted(bounds, np.arange(spec.users), side="right") - 1


def _choose_targets(spec: SynthSpec, main: np.ndarray, rng: np.random.Generator) -> list[list[int]]:
    V = spec.users
    if spec.topology == "layered":
        bounds = np.cumsum([0] + list(spec.layers))
        layers = layer_of(spec)
    targets = []
    for u in range(V):
        if spec.topology == "layered":
            L = layers[u]
            if L == 0:
                targets.append([])
                continue
            pool = np.arange(bounds[L - 1], bounds[L])
            n_targets = 1
        else:
            pool = np.array([v for v in range(V) if v != u])
            n_targets = min(spec.targets_per_user, len(pool))
        if spec.topology != "random":
            same = pool[main[pool] == main[u]]
            if len(same):
                pool = same
        chosen = rng.choice(pool, size=min(n_targets, len(pool)), replace=False)
        targets.append(sorted(int(t) for t in chosen))
    return targets


def synth_generate(spec: SynthSpec, seed: int = 0) -> SynthCorpus:
    spec.validate()
    rng = np.random.default_rng(seed)
    V, K, Q = spec.users, spec.topics, spec.nouns_per_topic
    width = len(str(V))
    user_ids = [f"u{n:0{width}d}" for n in range(V)]

    if spec.theta is not None:
        theta = np.asarray(spec.theta, dtype=float)
    else:
        theta = rng.dirichlet(np.full(K, spec.theta_concentration), size=V)
    phi = np.asarray(spec.phi, dtype=float) if spec.phi is not None else np.full((K, Q), 1.0 / Q)
    if spec.psi is not None:
        psi = np.asarray(spec.psi, dtype=float)
    else:
        sign = rng.random((V, K)) < 0.5
        psi = np.where(sign, spec.psi_bias, 1.0 - spec.psi_bias)
    main = theta.argmax(axis=1)
    targets = _choose_targets(spec, main, rng)
    followers = {u: int(f) for u, f in zip(user_ids, rng.geometric(0.01, size=V))}

    train: list[Message] = []
    planted_op: dict[str, int] = {}
    planted_topic: dict[str, int] = {}
    msg_nouns: dict[str, list[str]] = {}
    latest_post: dict[int, Message] = {}
    ts = START_TS
    m_width = len(str(max(spec.messages, 1)))
    for m in range(spec.messages):
        u = int(rng.integers(V))
        mid = f"m{m:0{m_width}d}"
        parent = None
        if targets[u] and rng.random() < spec.reply_rate:
            tgt = targets[u][int(rng.integers(len(targets[u])))]
            parent = latest_post.get(tgt)
        if parent is not None:
            k = planted_topic[parent.message_id]
            o = planted_op[parent.message_id]
            if rng.random() >= spec.omega_agree:
                o = -o
            nouns = []
            for _ in range(spec.nouns_per_message):
                if rng.random() < spec.reuse_noun_rate:
                    pn = msg_nouns[parent.message_id]
                    nouns.append(pn[int(rng.integers(len(pn)))])
                else:
                    nouns.append(noun_name(k, int(rng.choice(Q, p=phi[k]))))
            msg = Message(mid, user_ids[u], "reply", parent.message_id, parent.root_message or parent.message_id,
                          ts, _tokens(nouns, o, spec, rng))
        else:
            k = int(rng.choice(K, p=theta[u]))
            o = 1 if rng.random() < psi[u, k] else -1
            nouns = [noun_name(k, int(rng.choice(Q, p=phi[k]))) for _ in range(spec.nouns_per_message)]
            msg = Message(mid, user_ids[u], "post", None, None, ts, _tokens(nouns, o, spec, rng))
            latest_post[u] = msg
        train.append(msg)
        planted_op[mid] = o
        planted_topic[mid] = k
        msg_nouns[mid] = nouns
        ts += STEP

    test: list[Message] = []
    gold: list[tuple[str, str, str, int]] = []
    if spec.test:
        test, gold = _held_out(spec, rng, user_ids, theta, phi, psi, main, targets, planted_op, planted_topic, ts)

    lexicon = {f"good{q}": 1 for q in range(spec.opinion_words)}
    lexicon.update({f"bad{q}": -1 for q in range(spec.opinion_words)})
    coe_pairs = [(noun_name(k, a), noun_name(k, b)) for k in range(K) for a in range(Q) for b in range(a + 1, Q)]
    return SynthCorpus(spec, seed, user_ids, train, test, gold, followers, lexicon, sorted(coe_pairs),
                       theta, phi, psi, {user_ids[u]: [user_ids[t] for t in ts_] for u, ts_ in enumerate(targets)},
                       planted_op, planted_topic)


def _cascade_order(targets: list[list[int]], rng: np.random.Generator) -> list[int]:
    """Users ordered so that targets come first where the graph allows it."""
    perm = rng.permutation(len(targets)).tolist()
    done: set[int] = set()
    order: list[int] = []
    while len(order) < len(targets):
        ready = [u for u in perm if u not in done and all(t in done for t in targets[u])]
        if not ready:  # break a cycle deterministically
            ready = [next(u for u in perm if u not in done)]
        for u in ready:
            done.add(u)
            order.append(u)
    return order


def _held_out(spec, rng, user_ids, theta, phi, psi, main, targets, planted_op, planted_topic, ts):
    K, Q = spec.topics, spec.nouns_per_topic
    order = _cascade_order(targets, rng)
    layers = layer_of(spec)
    if spec.layer_participation is not None:
        chance = [spec.layer_participation[L] for L in layers]
    else:
        chance = [spec.participation] * spec.users
    test: list[Message] = []
    gold = []
    n = 0
    for k in range(K):
        obj = f"obj{k}"
        latent: dict[int, int] = {}
        posted: dict[int, Message] = {}
        for u in order:
            if main[u] != k:
                continue
            joined = rng.random() < chance[u]
            influencers = [t for t in targets[u] if t in latent]
            if influencers:
                src = influencers[int(rng.integers(len(influencers)))]
                o = latent[src] if rng.random() < spec.omega_agree else -latent[src]
            else:
                src = None
                o = 1 if rng.random() < psi[u, k] else -1
            latent[u] = o
            if not joined:
                continue
            nouns = [noun_name(k, int(rng.choice(Q, p=phi[k]))) for _ in range(spec.nouns_per_message)]
            mid = f"x{n:05d}"
            n += 1
            parent = posted.get(src) if src is not None else None
            if parent is not None:
                msg = Message(mid, user_ids[u], "reply", parent.message_id, parent.root_message or parent.message_id,
                              ts, _tokens(nouns, o, spec, rng))
            else:
                msg = Message(mid, user_ids[u], "post", None, None, ts, _tokens(nouns, o, spec, rng))
            ts += STEP
            posted[u] = msg
            test.append(msg)
            planted_op[mid] = o
            planted_topic[mid] = k
            gold.append((user_ids[u], mid, obj, o))
    return test, gold


# ---------------------------------------------------------------------------
# Writers
# ---------------------------------------------------------------------------


def _write_jsonl(path: Path, messages, followers, header):
    with path.open("w", encoding="utf-8") as fh:
        if header:
            fh.write(f"# {header}\n")
        for msg in messages:
            fh.write(json.dumps(message_to_wire(msg, followers[msg.author]), sort_keys=True) + "\n")


def write_corpus(corpus: SynthCorpus, out_dir, header: str | None = None) -> dict[str, Path]:
    """Write train/test JSONL, gold CSV, lexicon, CoE table and planted params."""
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    paths = {name: out / fname for name, fname in (
        ("train", "train.jsonl"), ("test", "test.jsonl"), ("gold", "gold.csv"),
        ("lexicon", "lexicon.tsv"), ("coe", "coe.tsv"), ("planted", "planted.json"))}
    _write_jsonl(paths["train"], corpus.train, corpus.followers, header)
    _write_jsonl(paths["test"], corpus.test, corpus.followers, header)
    with paths["gold"].open("w", newline="", encoding="utf-8") as fh:
        if header:
            fh.write(f"# {header}\n")
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(["user", "message_id", "object", "gold"])
        writer.writerows(corpus.gold)
    with paths["lexicon"].open("w", encoding="utf-8") as fh:
        if header:
            fh.write(f"# {header}\n")
        for w in sorted(corpus.lexicon):
            fh.write(f"{w}\t{'+1' if corpus.lexicon[w] > 0 else '-1'}\n")
    with paths["coe"].open("w", encoding="utf-8") as fh:
        if header:
            fh.write(f"# {header}\n")
        for a, b in corpus.coe_pairs:
            fh.write(f"{a}\t{b}\t1\n")
    planted = {
        "spec": asdict(corpus.spec),
        "seed": corpus.seed,
        "users": corpus.user_ids,
        "theta": corpus.theta.tolist(),
        "phi": corpus.phi.tolist(),
        "psi": corpus.psi.tolist(),
        "targets": corpus.targets,
    }
    if header:
        planted["meta"] = header
    paths["planted"].write_text(json.dumps(planted, indent=1, sort_keys=True) + "\n", encoding="utf-8")
    return paths


def read_gold(path) -> list[tuple[str, str, str, int]]:
    rows = []
    header = None
    with Path(path).open(encoding="utf-8") as fh:
        for line_no, line in enumerate(fh, start=1):
            if line.startswith("#") or not line.strip():
                continue
            row = next(csv.reader([line]))
            if header is None:
                header = row
                if header != ["user", "message_id", "object", "gold"]:
                    raise FormatError(path, line_no, "expected header user,message_id,object,gold")
                continue
            if len(row) != 4 or row[3] not in ("1", "-1"):
                raise FormatError(path, line_no, f"bad gold row {row!r}")
            rows.append((row[0], row[1], row[2], int(row[3])))
    return rows
