"""Indirect influence by diffusing agree strengths over the user graph.

For a topic Z, ``TM[i, j] = s_agree(i -> j, Z)``. A source v starts from
its own row ``dS = TM[v]`` and spreads it for ``t`` steps:

conservative      F_t = (1-b) * sum_{i<t} b^i dS TM^i + b^t dS TM^t
                  (TM row-normalised, so the L1 mass of dS is preserved)
non-conservative  F_t = sum_{i<=t} b^i dS TM^i
"""

from __future__ import annotations

import csv
import logging
from dataclasses import dataclass, replace
from pathlib import Path

import numpy as np
import scipy.sparse as sp

from .errors import ValidationError
from .influence import InfluenceParams

logger = logging.getLogger(__name__)

MODES = ("conservative", "nonconservative")


@dataclass(frozen=True)
class PropagationConfig:
    mode: str = "conservative"
    decay_beta: float = 0.5
    steps: int = 2

    def __post_init__(self):
        if self.mode not in MODES:
            raise ValidationError(f"mode must be one of {MODES}")
        if not 0 < self.decay_beta < 1:
            raise ValidationError("decay_beta must lie in (0, 1)")
        if self.steps < 1:
            raise ValidationError("steps must be >= 1")


def influence_strength(params: InfluenceParams, topic: int) -> np.ndarray:
    """Total outgoing agree strength of every user on ``topic``."""
    S = np.zeros(len(params.user_ids))
    for (i, j, k), (sa, _) in params.strength.items():
        if k == topic and i != j:
            S[i] += sa
    return S


def transition_matrix(params: InfluenceParams, topic: int) -> sp.csr_matrix:
    n = len(params.user_ids)
    rows, cols, vals = [], [], []
    for (i, j, k), (sa, _) in sorted(params.strength.items()):
        if k == topic and i != j and sa > 0:
            rows.append(i)
            cols.append(j)
            vals.append(sa)
    return sp.csr_matrix((vals, (rows, cols)), shape=(n, n))


def normalize_rows(tm, repair: bool = True) -> sp.csr_matrix:
    """Row-stochastic copy of ``tm``; empty rows get a self-loop when ``repair``."""
    tm = sp.csr_matrix(tm, dtype=float)
    if tm.nnz and tm.data.min() < 0:
        raise ValidationError("transition matrix has negative entries")
    sums = np.asarray(tm.sum(axis=1)).ravel()
    empty = np.flatnonzero(sums == 0)
    if empty.size and not repair:
        raise ValidationError(f"{empty.size} rows cannot be normalised without self-loop repair")
    scale = np.divide(1.0, sums, out=np.zeros_like(sums), where=sums > 0)
    out = sp.diags(scale) @ tm
    if empty.size:
        out = out + sp.csr_matrix((np.ones(empty.size), (empty, empty)), shape=tm.shape)
    return sp.csr_matrix(out)


def _power_series(delta, tm: sp.csr_matrix, coefs: list[float]):
    """sum_i coefs[i] * delta @ tm^i, for a vector or a (sparse) matrix of rows."""
    vector = not sp.issparse(delta) and np.ndim(delta) == 1
    cur = np.asarray(delta, dtype=float) if vector else sp.csr_matrix(delta, dtype=float)
    acc = cur * coefs[0]
    for c in coefs[1:]:
        cur = tm.T @ cur if vector else cur @ tm
        acc = acc + cur * c
    return acc


def conservative_propagate(delta, tm, decay_beta: float, t: int, repair: bool = True):
    if t < 0:
        raise ValidationError("t must be >= 0")
    tm = normalize_rows(tm, repair=repair)
    b = decay_beta
    coefs = [(1 - b) * b**i for i in range(t)] + [b**t]
    return _power_series(delta, tm, coefs)


def nonconservative_propagate(delta, tm, decay_beta: float, t: int):
    if t < 0:
        raise ValidationError("t must be >= 0")
    tm = sp.csr_matrix(tm, dtype=float)
    coefs = [decay_beta**i for i in range(t + 1)]
    return _power_series(delta, tm, coefs)


def propagate(delta, tm, config: PropagationConfig):
    if config.mode == "conservative":
        return conservative_propagate(delta, tm, config.decay_beta, config.steps)
    return nonconservative_propagate(delta, tm, config.decay_beta, config.steps)


def propagated_field(params: InfluenceParams, topic: int, config: PropagationConfig) -> tuple[sp.csr_matrix, sp.csr_matrix]:
    """(direct TM, refined matrix whose row v is F_t of source v)."""
    tm = transition_matrix(params, topic)
    refined = sp.csr_matrix(propagate(tm, tm, config))
    refined.eliminate_zeros()
    return tm, refined


def refine_ledger(params: InfluenceParams, config: PropagationConfig) -> tuple[InfluenceParams, dict[int, tuple[sp.csr_matrix, sp.csr_matrix]]]:
    """Replace direct agree strengths by propagated ones on every topic.

    Pairs reached only indirectly get Omega = (1, 0) and no disagree
    strength; pairs with a direct edge keep their Omega and s_disagree.
    """
    strength = {}
    omega = dict(params.omega)
    fields = {}
    for k in range(params.n_topics):
        tm, refined = propagated_field(params, k, config)
        fields[k] = (tm, refined)
        coo = refined.tocoo()
        for i, j, v in zip(coo.row.tolist(), coo.col.tolist(), coo.data.tolist()):
            if i == j:
                continue
            direct = params.strength.get((i, j, k))
            strength[(i, j, k)] = (v, direct[1] if direct else 0.0)
            if (i, j, k) not in omega:
                omega[(i, j, k)] = (1.0, 0.0)
    # keep direct pairs whose agree strength was zero (disagree-only neighbors)
    for key, (sa, sd) in params.strength.items():
        if key not in strength:
            strength[key] = (sa, sd)
    refined_params = replace(params, omega=omega, strength=strength, refined=True)
    return refined_params, fields


def write_field_csv(path, fields, user_ids, config: PropagationConfig, header: str | None = None) -> None:
    """One row per (source, target, topic) with a direct or refined weight."""
    with Path(path).open("w", newline="", encoding="utf-8") as fh:
        if header:
            fh.write(f"# {header}\n")
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(["source", "target", "topic", "weight_direct", "weight_refined", "mode", "t", "beta"])
        for k in sorted(fields):
            tm, refined = fields[k]
            direct = tm.todok()
            ref = refined.todok()
            for i, j in sorted(set(direct.keys()) | set(ref.keys())):
                writer.writerow([user_ids[i], user_ids[j], k, repr(float(direct.get((i, j), 0.0))),
                                 repr(float(ref.get((i, j), 0.0))), config.mode, config.steps, config.decay_beta])
