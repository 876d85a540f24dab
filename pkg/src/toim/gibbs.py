"""Collapsed Gibbs sampler over (user, noun, topic) with reply coupling.

Every noun token belongs to the author of its message. Tokens are
swept in thread order (parents before children). A token in a reply
whose noun also occurs in the parent message copies the parent token's
topic instead of being sampled; all other tokens are drawn from

    P(z = k) ~ (C_xz[x,k] + a) / (sum_z C_xz[x,z] + K a)
             * (C_zw[k,w] + b) / (sum_w C_zw[k,w] + N b)

with the token's own assignment removed from the counts.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field

import numpy as np
from numba import njit

from .corpus import HeterogeneousGraph, Vocabulary
from .errors import ValidationError

logger = logging.getLogger(__name__)


@dataclass(frozen=True)
class GibbsConfig:
    K: int
    alpha: float | None = None
    gibbs_beta: float = 0.01
    iterations: int = 50
    seed: int = 0

    def __post_init__(self):
        if self.K < 1:
            raise ValidationError("K must be >= 1")
        if self.alpha is None:
            object.__setattr__(self, "alpha", 50.0 / self.K)
        if self.alpha <= 0 or self.gibbs_beta <= 0:
            raise ValidationError("alpha and gibbs_beta must be positive")
        if self.iterations < 1:
            raise ValidationError("iterations must be >= 1")

    def to_json(self) -> dict:
        return {"K": self.K, "alpha": self.alpha, "gibbs_beta": self.gibbs_beta,
                "iterations": self.iterations, "seed": self.seed}


@dataclass
class GibbsState:
    """Topic assignments and the two count matrices they induce.

    Token arrays are parallel: ``users[t]``, ``nouns[t]``, ``z[t]``,
    ``couple[t]`` (index of the parent token to copy, or -1).
    """

    K: int
    alpha: float
    beta: float
    users: np.ndarray
    nouns: np.ndarray
    couple: np.ndarray
    z: np.ndarray
    cxz: np.ndarray
    czw: np.ndarray
    nz: np.ndarray
    nx: np.ndarray
    message_tokens: dict[str, list[int]] = field(default_factory=dict)
    user_ids: list[str] = field(default_factory=list)
    sweeps: int = 0

    @property
    def N(self) -> int:
        return self.czw.shape[1]

    @property
    def V(self) -> int:
        return self.cxz.shape[0]

    def copy(self) -> "GibbsState":
        return GibbsState(
            self.K, self.alpha, self.beta, self.users, self.nouns, self.couple,
            self.z.copy(), self.cxz.copy(), self.czw.copy(), self.nz.copy(), self.nx.copy(),
            self.message_tokens, self.user_ids, self.sweeps,
        )

    def recount(self) -> None:
        """Rebuild every count from the assignment vector."""
        self.cxz[:] = 0
        self.czw[:] = 0
        np.add.at(self.cxz, (self.users, self.z), 1)
        np.add.at(self.czw, (self.z, self.nouns), 1)
        self.nz[:] = self.czw.sum(axis=1)
        self.nx[:] = self.cxz.sum(axis=1)

    def topic_of(self, message_id: str) -> list[int]:
        return [int(self.z[t]) for t in self.message_tokens.get(message_id, ())]


@dataclass(frozen=True)
class TopicParams:
    theta: np.ndarray  # users x topics
    phi: np.ndarray    # topics x nouns


def build_state(graph: HeterogeneousGraph, vocab: Vocabulary, config: GibbsConfig, rng: np.random.Generator) -> GibbsState:
    """Lay out noun tokens in thread order and draw a uniform initial assignment."""
    user_ids = graph.user_ids
    uidx = {u: i for i, u in enumerate(user_ids)}
    users, nouns, couple = [], [], []
    message_tokens: dict[str, list[int]] = {}
    first_token: dict[str, dict[int, int]] = {}
    for msg in graph.ordered_messages():
        idxs = []
        seen: dict[int, int] = {}
        parent_first = first_token.get(msg.parent_message, {}) if msg.parent_message else {}
        for tok in msg.nouns():
            w = vocab.noun_index(tok.text)
            t = len(users)
            users.append(uidx[msg.author])
            nouns.append(w)
            couple.append(parent_first.get(w, -1))
            seen.setdefault(w, t)
            idxs.append(t)
        message_tokens[msg.message_id] = idxs
        first_token[msg.message_id] = seen
    n_tok = len(users)
    state = GibbsState(
        K=config.K,
        alpha=float(config.alpha),
        beta=float(config.gibbs_beta),
        users=np.asarray(users, dtype=np.int64),
        nouns=np.asarray(nouns, dtype=np.int64),
        couple=np.asarray(couple, dtype=np.int64),
        z=rng.integers(0, config.K, size=n_tok).astype(np.int64),
        cxz=np.zeros((len(user_ids), config.K), dtype=np.int64),
        czw=np.zeros((config.K, vocab.N), dtype=np.int64),
        nz=np.zeros(config.K, dtype=np.int64),
        nx=np.zeros(len(user_ids), dtype=np.int64),
        message_tokens=message_tokens,
        user_ids=user_ids,
    )
    state.recount()
    return state


def conditional_weights(state: GibbsState, x: int, w: int) -> np.ndarray:
    """Unnormalised topic weights for user ``x`` and noun ``w``.

    The caller must already have removed the current token from the counts.
    """
    if not (0 <= x < state.V) or not (0 <= w < state.N):
        raise ValidationError(f"unknown user {x} or noun {w}")
    K, N = state.K, state.N
    left = (state.cxz[x] + state.alpha) / (state.nx[x] + K * state.alpha)
    right = (state.czw[:, w] + state.beta) / (state.nz + N * state.beta)
    return left * right


def pick_index(weights, u: float) -> int:
    """Inverse-CDF draw with a uniform ``u`` in [0, 1); sums left to right."""
    total = 0.0
    for v in weights:
        total += float(v)
    target = u * total
    acc = 0.0
    for k, v in enumerate(weights):
        acc += float(v)
        if acc > target:
            return k
    return len(weights) - 1


def sample_topic(weights, rng: np.random.Generator) -> int:
    weights = np.asarray(weights, dtype=float)
    if weights.size == 0 or np.any(weights < 0) or not np.any(weights > 0):
        raise ValidationError("weights must be non-negative with at least one positive entry")
    return pick_index(weights, rng.random())


@njit(cache=True)
def _sweep_kernel(users, nouns, couple, z, cxz, czw, nz, nx, alpha, beta, uniforms):
    K = cxz.shape[1]
    N = czw.shape[1]
    ka = K * alpha
    nb = N * beta
    weights = np.empty(K)
    for t in range(z.shape[0]):
        x = users[t]
        w = nouns[t]
        old = z[t]
        cxz[x, old] -= 1
        czw[old, w] -= 1
        nz[old] -= 1
        nx[x] -= 1
        c = couple[t]
        if c >= 0:
            new = z[c]
        else:
            total = 0.0
            for k in range(K):
                weights[k] = ((cxz[x, k] + alpha) / (nx[x] + ka)) * ((czw[k, w] + beta) / (nz[k] + nb))
                total += weights[k]
            target = uniforms[t] * total
            acc = 0.0
            new = K - 1
            for k in range(K):
                acc += weights[k]
                if acc > target:
                    new = k
                    break
        z[t] = new
        cxz[x, new] += 1
        czw[new, w] += 1
        nz[new] += 1
        nx[x] += 1


def gibbs_sweep(state: GibbsState, rng: np.random.Generator) -> GibbsState:
    """Resample every token once, in place; one uniform is consumed per token."""
    uniforms = rng.random(state.z.shape[0])
    sweep_with_uniforms(state, uniforms)
    return state


def sweep_with_uniforms(state: GibbsState, uniforms: np.ndarray) -> None:
    if state.z.shape[0]:
        _sweep_kernel(state.users, state.nouns, state.couple, state.z, state.cxz, state.czw,
                      state.nz, state.nx, state.alpha, state.beta, np.asarray(uniforms, dtype=np.float64))
    state.sweeps += 1


def estimate_theta_phi(state: GibbsState) -> TopicParams:
    if state.sweeps < 1:
        raise ValidationError("estimate_theta_phi needs at least one completed sweep")
    K, N = state.K, state.N
    theta = (state.cxz + state.alpha) / (state.nx[:, None] + K * state.alpha)
    phi = (state.czw + state.beta) / (state.nz[:, None] + N * state.beta)
    return TopicParams(theta=theta, phi=phi)


def run_gibbs(graph: HeterogeneousGraph, vocab: Vocabulary, config: GibbsConfig) -> tuple[GibbsState, TopicParams]:
    rng = np.random.default_rng(config.seed)
    state = build_state(graph, vocab, config, rng)
    for _ in range(config.iterations):
        gibbs_sweep(state, rng)
    return state, estimate_theta_phi(state)


def top_nouns(phi: np.ndarray, k: int, n: int) -> list[int]:
    return np.argsort(-phi[k], kind="stable")[:n].tolist()


# ---------------------------------------------------------------------------
# Checkpoints
# ---------------------------------------------------------------------------


def _triplets(mat: np.ndarray) -> list[list[int]]:
    rows, cols = np.nonzero(mat)
    return [[int(r), int(c), int(mat[r, c])] for r, c in zip(rows, cols)]


def state_to_checkpoint(state: GibbsState, config: GibbsConfig) -> dict:
    return {
        "config": config.to_json(),
        "sweeps": state.sweeps,
        "assignments": state.z.tolist(),
        "C_xz": {"shape": list(state.cxz.shape), "entries": _triplets(state.cxz)},
        "C_zw": {"shape": list(state.czw.shape), "entries": _triplets(state.czw)},
    }


def restore_checkpoint(state: GibbsState, checkpoint: dict) -> GibbsState:
    """Load assignments into a freshly built state for the same corpus."""
    z = np.asarray(checkpoint["assignments"], dtype=np.int64)
    if z.shape != state.z.shape:
        raise ValidationError("checkpoint does not match the corpus token layout")
    state.z[:] = z
    state.recount()
    for key, mat in (("C_xz", state.cxz), ("C_zw", state.czw)):
        expected = np.zeros_like(mat)
        for r, c, v in checkpoint[key]["entries"]:
            expected[r, c] = v
        if not np.array_equal(expected, mat):
            raise ValidationError(f"checkpoint {key} disagrees with its assignments")
    state.sweeps = int(checkpoint.get("sweeps", 0))
    return state
