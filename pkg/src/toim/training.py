"""End-to-end parameter estimation (topics, opinions, influence).

Two strategies share the same per-pair ledger code:

``interleaved``
    Each iteration runs one Gibbs sweep and then scans every reply
    record with the topics of that iteration; counters accumulate over
    iterations.
``two_phase``
    All sweeps run first; the ledger is then computed from the frozen
    final topics, one pass per iteration, optionally on a worker pool.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass

import numpy as np

from .corpus import HeterogeneousGraph, Vocabulary
from .errors import ValidationError
from .gibbs import GibbsConfig, GibbsState, TopicParams, build_state, estimate_theta_phi, gibbs_sweep
from .influence import InfluenceParams, OAIWeights, OpinionLedger, estimate_influence, noai_table
from .opinion import CoETable, CorpusStats, OpinionRecord, resolve_all
from .pair_compute import LedgerContext, partition, run_pair_phase

logger = logging.getLogger(__name__)

STRATEGIES = ("interleaved", "two_phase")


@dataclass
class TrainResult:
    state: GibbsState
    topics: TopicParams
    influence: InfluenceParams
    ledger: OpinionLedger
    opinions: dict[str, list[OpinionRecord]]


def train(
    graph: HeterogeneousGraph,
    vocab: Vocabulary,
    stats: CorpusStats,
    coe: CoETable,
    gibbs_config: GibbsConfig,
    oai_weights: OAIWeights = OAIWeights(),
    *,
    min_sd: float = 0.0,
    smoothing: float = 0.0,
    strategy: str = "interleaved",
    workers: int = 1,
) -> TrainResult:
    if not graph.messages:
        raise ValidationError("cannot train on an empty graph")
    if strategy not in STRATEGIES:
        raise ValidationError(f"unknown strategy {strategy!r}")
    seed = gibbs_config.seed
    rng = np.random.default_rng(seed)
    opinions = resolve_all(graph, vocab, stats, min_sd)
    state = build_state(graph, vocab, gibbs_config, rng)
    tasks = partition(graph, seed)
    ctx = LedgerContext.from_state(graph, vocab, state, opinions, coe, {})
    n_users = len(graph.users)

    if strategy == "interleaved":
        ledger = OpinionLedger.empty(n_users, gibbs_config.K)
        for e in range(gibbs_config.iterations):
            gibbs_sweep(state, rng)
            ctx.noai = noai_table(graph, estimate_theta_phi(state).theta, oai_weights)
            ledger.accumulate(run_pair_phase(graph, ctx, seed, workers=1, passes=1, pass_offset=e, tasks=tasks))
    else:
        for _ in range(gibbs_config.iterations):
            gibbs_sweep(state, rng)
        ctx.noai = noai_table(graph, estimate_theta_phi(state).theta, oai_weights)
        ledger = run_pair_phase(graph, ctx, seed, workers=workers, passes=gibbs_config.iterations, tasks=tasks)

    topics = estimate_theta_phi(state)
    noai = noai_table(graph, topics.theta, oai_weights)
    influence = estimate_influence(ledger, graph.user_ids, noai, smoothing)
    logger.info("trained: %d tokens, %d pair keys", state.z.shape[0], len(ledger.pair_keys()))
    return TrainResult(state, topics, influence, ledger, opinions)
