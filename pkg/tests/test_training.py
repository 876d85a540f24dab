import numpy as np
import pytest

from toim.corpus import build_graph, build_vocabulary
from toim.errors import ValidationError
from toim.gibbs import GibbsConfig
from toim.opinion import CoETable, build_corpus_stats
from toim.training import train

from conftest import LEXICON, graph_of, msg


def run(messages, K=1, iterations=6, **kw):
    g, v = graph_of(messages)
    return train(g, v, build_corpus_stats(g, v), CoETable(), GibbsConfig(K=K, iterations=iterations, seed=2), **kw)


def test_agree_counted_every_iteration():
    res = run([
        msg("m1", "A", "phone:noun is good:adj", ts=1),
        msg("m2", "B", "phone:noun is great:adj", parent="m1", ts=2),
    ])
    assert res.ledger.agree == {(0, 1, 0): 6}
    assert res.ledger.pos.tolist() == [[6], [6]]
    assert res.influence.omega[(0, 1, 0)] == (1.0, 0.0)
    # no disagreements: the disagree strength falls back to uniform over one neighbor
    assert res.influence.strength[(0, 1, 0)] == (1.0, 1.0)


def test_unresolvable_opinions_use_noai():
    # B has a single neighbor, so NOAI(A, B) normalises to 1
    res = run([
        msg("m1", "A", "phone:noun is here", ts=1),
        msg("m2", "B", "phone:noun again", parent="m1", ts=2),
    ], iterations=5)
    assert res.influence.noai == {(0, 1): 1.0}
    assert res.ledger.agree == {(0, 1, 0): 5} and res.ledger.noai_agree == {(0, 1, 0): 5}
    assert (0, 1, 0) in res.influence.omega_low_confidence
    assert res.influence.psi_unobserved.all()


def test_strategies_agree_when_topics_are_fixed():
    messages = [
        msg("m1", "A", "phone:noun is good:adj and screen:noun", ts=1),
        msg("m2", "B", "phone:noun is bad:adj", parent="m1", ts=2),
        msg("m3", "C", "screen:noun here", parent="m1", ts=3),
        msg("m4", "A", "screen:noun not:neg good:adj", parent="m3", root="m1", ts=4),
    ]
    a = run(messages, strategy="interleaved")
    b = run(messages, strategy="two_phase")
    c = run(messages, strategy="two_phase", workers=2)
    assert a.ledger.equals(b.ledger) and b.ledger.equals(c.ledger)


def test_two_phase_parallel_matches_sequential():
    rng = np.random.default_rng(0)
    messages = []
    for m in range(120):
        text = f"n{rng.integers(8)}:noun is {['good', 'bad', 'fine'][rng.integers(3)]}:adj"
        user = f"u{rng.integers(6)}"
        if m > 3 and rng.random() < 0.7:
            p = messages[rng.integers(m)]
            messages.append(msg(f"m{m:03d}", user, text, parent=p.message_id, root=p.root_message or p.message_id, ts=m))
        else:
            messages.append(msg(f"m{m:03d}", user, text, ts=m))
    one = run(messages, K=3, iterations=4, strategy="two_phase", workers=1)
    two = run(messages, K=3, iterations=4, strategy="two_phase", workers=2)
    assert one.ledger.equals(two.ledger)
    assert np.array_equal(one.topics.theta, two.topics.theta)


def test_empty_graph_rejected():
    g = build_graph([])
    v = build_vocabulary(g, LEXICON)
    with pytest.raises(ValidationError, match="empty"):
        train(g, v, build_corpus_stats(g, v), CoETable(), GibbsConfig(K=1))


def test_unknown_strategy():
    with pytest.raises(ValidationError):
        run([msg("m1", "A", "x:noun")], strategy="bogus")
