"""A 50-message thread fixture with frozen topics, and an independent ledger recount."""

import numpy as np

from toim.gibbs import GibbsConfig, build_state
from toim.opinion import CoETable, build_corpus_stats, resolve_all

from conftest import graph_of, msg

NOUNS = ["phone", "screen", "battery", "movie", "actor"]
PHRASES = ["is good:adj", "is bad:adj", "is not:neg good:adj", "is great:adj", "is here", "not:neg not:neg bad:adj"]
COE = {("phone", "screen"): 1, ("phone", "battery"): 0, ("movie", "actor"): 1}
RELATION = {**COE, **{(b, a): r for (a, b), r in COE.items()}}


def build_fixture(seed=20111001):
    rng = np.random.default_rng(seed)
    users = ["A", "B", "C", "D", "E"]
    messages = []
    for m in range(50):
        parts = []
        for _ in range(rng.integers(1, 4)):
            parts.append(f"{NOUNS[rng.integers(len(NOUNS))]}:noun {PHRASES[rng.integers(len(PHRASES))]}")
        text = " and ".join(parts)
        author = users[rng.integers(len(users))]
        if m >= 5 and rng.random() < 0.7:
            parent = messages[rng.integers(m)]
            root = parent.root_message or parent.message_id
            messages.append(msg(f"m{m:02d}", author, text, parent=parent.message_id, root=root, ts=m))
        else:
            messages.append(msg(f"m{m:02d}", author, text, ts=m))
    g, v = graph_of(messages)
    stats = build_corpus_stats(g, v)
    opinions = resolve_all(g, v, stats)
    state = build_state(g, v, GibbsConfig(K=2), rng)  # random assignment, frozen
    state.sweeps = 1
    coe = CoETable(COE)
    # NOAI of 0 or 1 keeps unresolved pairs deterministic
    idx = {u: n for n, u in enumerate(g.user_ids)}
    noai = {(idx[e.replied_to], idx[e.replier]): float((idx[e.replied_to] + idx[e.replier]) % 2) for e in g.reply_edges}
    return g, v, state, opinions, coe, noai


def brute_force_ledger(g, state, opinions, coe, noai):
    """Single pass over every message and every (parent, reply) token pair."""
    idx = {u: n for n, u in enumerate(g.user_ids)}
    pos = np.zeros((len(idx), state.K), dtype=np.int64)
    neg = np.zeros_like(pos)
    agree, disagree = {}, {}
    for mid, m in g.messages.items():
        for t, rec in zip(state.message_tokens[mid], opinions[mid]):
            if rec.polarity > 0:
                pos[idx[m.author], state.z[t]] += 1
            elif rec.polarity < 0:
                neg[idx[m.author], state.z[t]] += 1
    for mid, child in g.messages.items():
        if child.parent_message is None:
            continue
        parent = g.messages[child.parent_message]
        if parent.author == child.author:
            continue
        i, j = idx[parent.author], idx[child.author]
        for ta, ra in zip(state.message_tokens[parent.message_id], opinions[parent.message_id]):
            for tb, rb in zip(state.message_tokens[mid], opinions[mid]):
                if state.z[ta] != state.z[tb]:
                    continue
                key = (i, j, int(state.z[ta]))
                na, nb = g.messages[parent.message_id].tokens[ra.position].text, child.tokens[rb.position].text
                rel = 1 if na == nb else RELATION.get((na, nb))
                if ra.polarity == 0 or rb.polarity == 0 or rel is None:
                    if noai[(i, j)] >= 1.0:
                        agree[key] = agree.get(key, 0) + 1
                    continue
                same = ra.polarity == rb.polarity
                if same == (rel == 1):
                    agree[key] = agree.get(key, 0) + 1
                else:
                    disagree[key] = disagree.get(key, 0) + 1
    return pos, neg, agree, disagree
