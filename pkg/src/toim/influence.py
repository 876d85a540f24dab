"""Opinion ledgers and the influence parameters estimated from them.

Indexing convention: a pair key ``(i, j, k)`` means user ``j`` replied to
user ``i`` on topic ``k``; ``i`` is then one of j's topic-opinion
neighbors ON(j, k) and a potential influence on j.
"""

from __future__ import annotations

from collections import defaultdict
from dataclasses import dataclass, field
from typing import Mapping, Sequence

import numpy as np

from .corpus import HeterogeneousGraph, interaction_counts
from .errors import ValidationError

LOW_CONFIDENCE = 3

PairKey = tuple[int, int, int]


@dataclass
class OpinionLedger:
    """Counters accumulated while scanning messages and reply pairs."""

    pos: np.ndarray
    neg: np.ndarray
    agree: dict[PairKey, int] = field(default_factory=dict)
    disagree: dict[PairKey, int] = field(default_factory=dict)
    noai_agree: dict[PairKey, int] = field(default_factory=dict)

    @classmethod
    def empty(cls, n_users: int, n_topics: int) -> "OpinionLedger":
        return cls(np.zeros((n_users, n_topics), dtype=np.int64), np.zeros((n_users, n_topics), dtype=np.int64))

    @property
    def shape(self) -> tuple[int, int]:
        return self.pos.shape

    def pair_keys(self) -> list[PairKey]:
        return sorted(set(self.agree) | set(self.disagree))

    def observations(self, key: PairKey) -> int:
        return self.agree.get(key, 0) + self.disagree.get(key, 0)

    def neighbors(self) -> dict[tuple[int, int], list[int]]:
        """ON(j, k) for every (j, k) with at least one observation."""
        on: dict[tuple[int, int], list[int]] = defaultdict(list)
        for i, j, k in self.pair_keys():
            if self.observations((i, j, k)) > 0:
                on[(j, k)].append(i)
        return {key: sorted(v) for key, v in on.items()}

    def accumulate(self, other: "OpinionLedger") -> None:
        """Add another ledger's counts into this one (iterations are additive)."""
        self.pos += other.pos
        self.neg += other.neg
        for mine, theirs in ((self.agree, other.agree), (self.disagree, other.disagree), (self.noai_agree, other.noai_agree)):
            for key, v in theirs.items():
                mine[key] = mine.get(key, 0) + v

    def equals(self, other: "OpinionLedger") -> bool:
        return (
            np.array_equal(self.pos, other.pos)
            and np.array_equal(self.neg, other.neg)
            and _nonzero(self.agree) == _nonzero(other.agree)
            and _nonzero(self.disagree) == _nonzero(other.disagree)
            and _nonzero(self.noai_agree) == _nonzero(other.noai_agree)
        )


def _nonzero(d: Mapping) -> dict:
    return {k: v for k, v in d.items() if v}


@dataclass(frozen=True)
class OAIWeights:
    a: float = 0.6
    b: float = 0.3
    c: float = 0.1
    lam: float = 1.0

    def __post_init__(self):
        if abs(self.a + self.b + self.c - 1.0) > 1e-9:
            raise ValidationError("OAI weights a, b, c must sum to 1")
        if self.lam <= 0:
            raise ValidationError("lambda must be positive")


@dataclass
class InfluenceParams:
    """Psi, Omega, tie strengths and the NOAI table, keyed by user index."""

    user_ids: list[str]
    psi: np.ndarray                                  # users x topics, P(+1)
    psi_unobserved: np.ndarray                       # bool, no opinions seen
    omega: dict[PairKey, tuple[float, float]]        # (p_agree, p_disagree)
    omega_low_confidence: set[PairKey]
    strength: dict[PairKey, tuple[float, float]]     # (s_agree, s_disagree)
    strength_uniform: set[tuple[int, int, str]]      # (j, k, side) that fell back to uniform
    noai: dict[tuple[int, int], float]
    refined: bool = False

    def __post_init__(self):
        self._neighbors: dict[tuple[int, int], list[int]] | None = None

    @property
    def n_topics(self) -> int:
        return self.psi.shape[1]

    def neighbors(self, j: int, k: int) -> list[int]:
        if self._neighbors is None:
            on: dict[tuple[int, int], list[int]] = defaultdict(list)
            for i, jj, kk in sorted(self.strength):
                if i != jj:
                    on[(jj, kk)].append(i)
            self._neighbors = dict(on)
        return self._neighbors.get((j, k), [])

    def psi_of(self, i: int, k: int, opinion: int) -> float:
        p = float(self.psi[i, k])
        return p if opinion > 0 else 1.0 - p


# ---------------------------------------------------------------------------
# Estimators
# ---------------------------------------------------------------------------


def estimate_psi(ledger: OpinionLedger, smoothing: float = 0.0) -> tuple[np.ndarray, np.ndarray]:
    """P(+1) per (user, topic) and a mask of entries with no evidence."""
    pos = ledger.pos.astype(float)
    neg = ledger.neg.astype(float)
    denom = pos + neg + 2 * smoothing
    unobserved = (ledger.pos + ledger.neg) == 0
    with np.errstate(invalid="ignore", divide="ignore"):
        psi = np.where(denom > 0, (pos + smoothing) / np.where(denom > 0, denom, 1.0), 0.5)
    return psi, unobserved


def estimate_omega(ledger: OpinionLedger, smoothing: float = 0.0) -> tuple[dict[PairKey, tuple[float, float]], set[PairKey]]:
    omega = {}
    low = set()
    for key in ledger.pair_keys():
        a = ledger.agree.get(key, 0)
        d = ledger.disagree.get(key, 0)
        denom = a + d + 2 * smoothing
        if denom == 0:
            omega[key] = (0.5, 0.5)
        else:
            pa = (a + smoothing) / denom
            omega[key] = (pa, 1.0 - pa)
        # few observations, or agreements that were only sampled from NOAI
        if a + d < LOW_CONFIDENCE or ledger.noai_agree.get(key, 0) > 0:
            low.add(key)
    return omega, low


def tie_strength(ledger: OpinionLedger, j: int, k: int, neighbors: Sequence[int] | None = None):
    """Shares of j's agreements (and disagreements) on topic k per neighbor.

    Returns ``(s_agree, s_disagree, uniform_sides)``; a side whose counts
    are all zero is spread uniformly over ON(j, k) and listed in
    ``uniform_sides``.
    """
    if neighbors is None:
        neighbors = ledger.neighbors().get((j, k), [])
    if not neighbors:
        raise ValidationError(f"user {j} has no topic-opinion neighbors on topic {k}")
    out = []
    uniform = set()
    for side, counts in (("agree", ledger.agree), ("disagree", ledger.disagree)):
        vals = {i: counts.get((i, j, k), 0) for i in neighbors}
        total = sum(vals.values())
        if total == 0:
            uniform.add(side)
            out.append({i: 1.0 / len(neighbors) for i in neighbors})
        else:
            out.append({i: v / total for i, v in vals.items()})
    return out[0], out[1], uniform


def estimate_influence(ledger: OpinionLedger, user_ids: list[str], noai: Mapping[tuple[int, int], float] | None = None,
                       smoothing: float = 0.0) -> InfluenceParams:
    psi, unobserved = estimate_psi(ledger, smoothing)
    omega, low = estimate_omega(ledger, smoothing)
    strength: dict[PairKey, tuple[float, float]] = {}
    uniform: set[tuple[int, int, str]] = set()
    for (j, k), nbrs in sorted(ledger.neighbors().items()):
        sa, sd, sides = tie_strength(ledger, j, k, nbrs)
        for i in nbrs:
            strength[(i, j, k)] = (sa[i], sd[i])
        uniform.update((j, k, side) for side in sides)
    return InfluenceParams(
        user_ids=list(user_ids),
        psi=psi,
        psi_unobserved=unobserved,
        omega=omega,
        omega_low_confidence=low,
        strength=strength,
        strength_uniform=uniform,
        noai=dict(noai or {}),
    )


# ---------------------------------------------------------------------------
# Opinion agreement index
# ---------------------------------------------------------------------------


def dense_rank(values: Mapping, descending: bool = True) -> dict:
    """Dense ranks (1 = best, ties share a rank)."""
    distinct = sorted(set(values.values()), reverse=descending)
    rank_of = {v: r for r, v in enumerate(distinct, start=1)}
    return {key: rank_of[v] for key, v in values.items()}


def follower_ranks(graph: HeterogeneousGraph) -> dict[str, int]:
    return dense_rank({u: user.follower_count for u, user in graph.users.items()})


def interaction_ranks(graph: HeterogeneousGraph) -> dict[tuple[str, str], int]:
    return dense_rank(interaction_counts(graph))


def cosine(a: np.ndarray, b: np.ndarray) -> float:
    na = float(np.linalg.norm(a))
    nb = float(np.linalg.norm(b))
    if na == 0 or nb == 0:
        return 0.0
    return float(np.dot(a, b) / (na * nb))


def oai_value(rank_followers: int, rank_interactions: int | None, similarity: float, weights: OAIWeights = OAIWeights()) -> float:
    """a * Influence + b * Tightness + c * Similarity from precomputed ranks."""
    influence = rank_followers ** -weights.lam
    tightness = 0.0 if rank_interactions is None else rank_interactions ** -weights.lam
    return weights.a * influence + weights.b * tightness + weights.c * similarity


def oai(u_i: str, u_j: str, graph: HeterogeneousGraph, theta: np.ndarray, weights: OAIWeights = OAIWeights(),
        _ranks: tuple[dict, dict] | None = None) -> float:
    """Opinion agreement index of ``u_i`` on ``u_j``."""
    f_ranks, i_ranks = _ranks or (follower_ranks(graph), interaction_ranks(graph))
    index = {u: n for n, u in enumerate(graph.user_ids)}
    pair = tuple(sorted((u_i, u_j)))
    sim = cosine(theta[index[u_i]], theta[index[u_j]])
    return oai_value(f_ranks[u_i], i_ranks.get(pair), sim, weights)


def noai(u_j, neighborhood: Mapping) -> dict:
    """Normalise raw OAI values of u_j's neighbors so they sum to 1."""
    if not neighborhood:
        raise ValidationError(f"empty neighborhood for {u_j!r}")
    total = sum(neighborhood.values())
    if total <= 0:
        return {i: 1.0 / len(neighborhood) for i in neighborhood}
    return {i: v / total for i, v in neighborhood.items()}


def noai_table(graph: HeterogeneousGraph, theta: np.ndarray, weights: OAIWeights = OAIWeights()) -> dict[tuple[int, int], float]:
    """NOAI(i, j) for every reply edge j -> i, keyed by user index.

    j's neighborhood is every user j has replied to anywhere in the graph.
    """
    ranks = (follower_ranks(graph), interaction_ranks(graph))
    user_ids = graph.user_ids
    index = {u: n for n, u in enumerate(user_ids)}
    norms = np.linalg.norm(theta, axis=1)
    targets: dict[str, set[str]] = defaultdict(set)
    for edge in graph.reply_edges:
        targets[edge.replier].add(edge.replied_to)
    table: dict[tuple[int, int], float] = {}
    for u_j in sorted(targets):
        j = index[u_j]
        raw = {}
        for u_i in sorted(targets[u_j]):
            i = index[u_i]
            denom = norms[i] * norms[j]
            sim = float(theta[i] @ theta[j] / denom) if denom > 0 else 0.0
            raw[i] = oai_value(ranks[0][u_i], ranks[1].get(tuple(sorted((u_i, u_j)))), sim, weights)
        for i, v in noai(u_j, raw).items():
            table[(i, j)] = v
    return table
