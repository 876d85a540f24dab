"""Trained model container, JSON persistence, and held-out prediction."""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Sequence

import numpy as np

from .corpus import Message, Vocabulary
from .errors import ValidationError
from .gibbs import TopicParams
from .influence import InfluenceParams
from .opinion import CorpusStats, message_polarity, resolve_message
from .predict import (
    HistoryBaseline,
    MajorityBaseline,
    Prediction,
    PredictionConfig,
    predict_opinion,
    prediction_rng,
)

FORMAT = "toim-model/1"


@dataclass
class Model:
    vocab: Vocabulary
    stats: CorpusStats
    topics: TopicParams
    influence: InfluenceParams
    majority: int = 1
    config: dict = field(default_factory=dict)
    meta: dict = field(default_factory=dict)

    @property
    def user_ids(self) -> list[str]:
        return self.influence.user_ids

    def user_index(self) -> dict[str, int]:
        return {u: i for i, u in enumerate(self.user_ids)}


def train_majority(opinions) -> int:
    """Majority label over detected message polarities in the training corpus."""
    return MajorityBaseline(message_polarity(recs) for recs in opinions.values()).label


# ---------------------------------------------------------------------------
# Persistence
# ---------------------------------------------------------------------------


def model_to_json(model: Model) -> dict:
    ip = model.influence
    uid = ip.user_ids
    return {
        "format": FORMAT,
        "meta": model.meta,
        "config": model.config,
        "users": uid,
        "nouns": list(model.vocab.nouns),
        "opinion_words": [[w, model.vocab.polarity[w]] for w in model.vocab.opinion_words],
        "os_stats": model.stats.to_json(),
        "theta": model.topics.theta.tolist(),
        "phi": model.topics.phi.tolist(),
        "psi": ip.psi.tolist(),
        "psi_unobserved": [[uid[u], int(k)] for u, k in zip(*np.nonzero(ip.psi_unobserved))],
        "omega": [[uid[i], uid[j], k, pa, pd, (i, j, k) in ip.omega_low_confidence]
                  for (i, j, k), (pa, pd) in sorted(ip.omega.items())],
        "strength": [[uid[i], uid[j], k, sa, sd] for (i, j, k), (sa, sd) in sorted(ip.strength.items())],
        "strength_uniform": [[uid[j], k, side] for j, k, side in sorted(ip.strength_uniform)],
        "noai": [[uid[i], uid[j], v] for (i, j), v in sorted(ip.noai.items())],
        "refined": ip.refined,
        "majority": model.majority,
    }


def model_from_json(obj: dict) -> Model:
    if obj.get("format") != FORMAT:
        raise ValidationError(f"not a model file (format={obj.get('format')!r})")
    try:
        users = obj["users"]
        index = {u: i for i, u in enumerate(users)}
        vocab = Vocabulary(tuple(obj["nouns"]), tuple(w for w, _ in obj["opinion_words"]),
                           {w: int(p) for w, p in obj["opinion_words"]})
        theta = np.asarray(obj["theta"], dtype=float)
        phi = np.asarray(obj["phi"], dtype=float)
        psi = np.asarray(obj["psi"], dtype=float)
        unobserved = np.zeros_like(psi, dtype=bool)
        for u, k in obj["psi_unobserved"]:
            unobserved[index[u], k] = True
        omega, low = {}, set()
        for i, j, k, pa, pd, is_low in obj["omega"]:
            key = (index[i], index[j], int(k))
            omega[key] = (float(pa), float(pd))
            if is_low:
                low.add(key)
        strength = {(index[i], index[j], int(k)): (float(sa), float(sd)) for i, j, k, sa, sd in obj["strength"]}
        uniform = {(index[j], int(k), side) for j, k, side in obj["strength_uniform"]}
        noai = {(index[i], index[j]): float(v) for i, j, v in obj["noai"]}
        influence = InfluenceParams(list(users), psi, unobserved, omega, low, strength, uniform, noai,
                                    bool(obj.get("refined", False)))
        return Model(vocab, CorpusStats.from_json(obj["os_stats"]), TopicParams(theta, phi), influence,
                     int(obj.get("majority", 1)), obj.get("config", {}), obj.get("meta", {}))
    except (KeyError, TypeError, ValueError) as exc:
        raise ValidationError(f"malformed model file: {exc!r}") from None


def save_model(path, model: Model) -> None:
    Path(path).write_text(json.dumps(model_to_json(model), sort_keys=True) + "\n", encoding="utf-8")


def load_model(path) -> Model:
    try:
        obj = json.loads(Path(path).read_text(encoding="utf-8"))
    except json.JSONDecodeError as exc:
        raise ValidationError(f"{path}: invalid JSON at line {exc.lineno}") from None
    return model_from_json(obj)


# ---------------------------------------------------------------------------
# Held-out prediction
# ---------------------------------------------------------------------------


def infer_topic(model: Model, message: Message, j: int | None) -> int:
    """Most probable topic of a message given its nouns and (if known) its author."""
    K = model.topics.phi.shape[0]
    score = np.log(model.topics.theta[j]) if j is not None else np.full(K, -math.log(K))
    for tok in message.nouns():
        if model.vocab.has_noun(tok.text):
            score = score + np.log(model.topics.phi[:, model.vocab.noun_index(tok.text)])
    return int(np.argmax(score))


@dataclass
class ItemResult:
    user: str
    message_id: str
    object: str
    topic: int
    gold: int
    toim: Prediction | None     # None when the user is unknown or ON is empty
    history: int
    final: int                  # TOIM, else history, else majority

    @property
    def predicted(self) -> int:
        return 0 if self.toim is None or self.toim.abstained else self.toim.o_new


def predict_items(model: Model, test_messages: Sequence[Message], gold: Sequence[tuple[str, str, str, int]],
                  config: PredictionConfig) -> list[ItemResult]:
    """Predict each gold item from its neighbors' held-out opinions on the same object.

    The item's own message supplies only its topic; the opinions of the
    other participants of the object are detected from their messages.
    """
    by_id = {m.message_id: m for m in test_messages}
    index = model.user_index()
    params = model.influence
    history = HistoryBaseline(params)
    observed: dict[str, dict[int, int]] = {}
    for user, mid, obj, _ in gold:
        if mid not in by_id:
            raise ValidationError(f"gold message {mid!r} not in the test corpus")
        o = message_polarity(resolve_message(by_id[mid], model.stats, model.vocab))
        if user in index and o:
            observed.setdefault(obj, {})[index[user]] = o

    results = []
    for user, mid, obj, label in gold:
        j = index.get(user)
        k = infer_topic(model, by_id[mid], j)
        pred = None
        if j is not None:
            known = {i: o for i, o in observed.get(obj, {}).items() if i != j}
            nbrs = params.neighbors(j, k)
            has_known = any(i in known for i in nbrs)
            if nbrs and (has_known or not config.require_known_neighbor):
                pred = predict_opinion(params, j, k, config, prediction_rng(config.seed, user, k), known)
        hist = history.predict(j, k)
        if pred is not None:
            final = pred.o_new
        elif hist:
            final = hist
        else:
            final = model.majority
        results.append(ItemResult(user, mid, obj, k, label, pred, hist, final))
    return results
