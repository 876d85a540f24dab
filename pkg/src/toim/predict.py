"""Opinion prediction from influence parameters, baselines and scoring."""

from __future__ import annotations

import csv
import logging
from collections import Counter, defaultdict
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Mapping, Sequence

import numpy as np

from .errors import ValidationError
from .influence import InfluenceParams
from .pair_compute import stable_hash

logger = logging.getLogger(__name__)


@dataclass(frozen=True)
class PredictionConfig:
    w: float = 0.5
    iterations: int = 100
    seed: int = 0
    use_refined: bool = False
    require_known_neighbor: bool = True

    def __post_init__(self):
        if not 0.0 <= self.w <= 1.0:
            raise ValidationError("w must lie in [0, 1]")
        if self.iterations < 1:
            raise ValidationError("iterations must be >= 1")


@dataclass
class Prediction:
    user: int
    topic: int
    o_new: int          # -1, +1, or 0 when abstaining
    swo: float = 0.0
    support: int = 0    # draws whose neighbor opinion was known
    tie: bool = False
    source: str = "toim"

    @property
    def abstained(self) -> bool:
        return self.o_new == 0


def prediction_rng(seed: int, user: str, topic: int) -> np.random.Generator:
    return np.random.default_rng(stable_hash(seed, user, topic))


def predict_opinion(params: InfluenceParams, j: int, k: int, config: PredictionConfig,
                    rng: np.random.Generator, known: Mapping[int, int] | None = None) -> Prediction:
    """Sample neighbors of ``j`` on topic ``k`` and accumulate signed votes.

    ``known`` maps neighbor index to an observed opinion; other neighbors
    get an opinion drawn from their own Psi.
    """
    nbrs = params.neighbors(j, k)
    if not nbrs:
        raise ValidationError(f"no topic-opinion neighbors for user {params.user_ids[j]!r} on topic {k}")
    known = known or {}
    w = config.w
    swo = 0.0
    support = 0
    for _ in range(config.iterations):
        i = nbrs[int(rng.integers(len(nbrs)))]
        if known.get(i):
            o_i = 1 if known[i] > 0 else -1
            support += 1
        else:
            o_i = 1 if rng.random() < params.psi[i, k] else -1
        p_agree = params.omega.get((i, j, k), (0.5, 0.5))[0]
        temp = w * params.psi_of(j, k, o_i) + (1.0 - w) * p_agree
        s_agree, s_disagree = params.strength[(i, j, k)]
        if rng.random() < temp:
            swo += o_i * s_agree
        else:
            swo += -o_i * s_disagree
    tie = swo == 0
    return Prediction(j, k, 1 if swo >= 0 else -1, swo, support, tie)


# ---------------------------------------------------------------------------
# Baselines
# ---------------------------------------------------------------------------


class MajorityBaseline:
    """Always predicts the most frequent training polarity (+1 on ties)."""

    def __init__(self, train_labels: Iterable[int]):
        counts = Counter(1 if o > 0 else -1 for o in train_labels if o)
        self.label = 1 if counts[1] >= counts[-1] else -1

    def predict(self, *_args) -> int:
        return self.label


class HistoryBaseline:
    """Argmax of the user's own Psi on the topic; abstains when unobserved."""

    def __init__(self, params: InfluenceParams):
        self.params = params

    def predict(self, j: int | None, k: int) -> int:
        if j is None or self.params.psi_unobserved[j, k]:
            return 0
        return 1 if self.params.psi[j, k] >= 0.5 else -1


# ---------------------------------------------------------------------------
# Evaluation
# ---------------------------------------------------------------------------


@dataclass
class Scores:
    precision: float
    recall: float
    f1: float
    n: int
    predicted: int
    correct: int

    @property
    def abstentions(self) -> int:
        return self.n - self.predicted

    def to_json(self) -> dict:
        return {"precision": self.precision, "recall": self.recall, "f1": self.f1, "n": self.n,
                "predicted": self.predicted, "correct": self.correct, "abstentions": self.abstentions}


def score(predictions: Sequence[int], gold: Sequence[int]) -> Scores:
    if len(gold) == 0:
        raise ValidationError("empty gold set")
    if len(predictions) != len(gold):
        raise ValidationError("predictions and gold differ in length")
    if any(g not in (-1, 1) for g in gold):
        raise ValidationError("gold labels must be -1 or +1")
    made = [(p, g) for p, g in zip(predictions, gold) if p]
    correct = sum(1 for p, g in made if p == g)
    precision = correct / len(made) if made else 0.0
    recall = correct / len(gold)
    f1 = 2 * precision * recall / (precision + recall) if precision + recall > 0 else 0.0
    return Scores(precision, recall, f1, len(gold), len(made), correct)


@dataclass
class EvalReport:
    overall: Scores
    per_object: dict[str, Scores] = field(default_factory=dict)

    def to_json(self) -> dict:
        return {"overall": self.overall.to_json(),
                "per_object": {o: s.to_json() for o, s in sorted(self.per_object.items())}}


def evaluate(predictions: Sequence[int], gold: Sequence[int], objects: Sequence[str] | None = None) -> EvalReport:
    report = EvalReport(score(predictions, gold))
    if objects is not None:
        groups: dict[str, list[int]] = defaultdict(list)
        for n, obj in enumerate(objects):
            groups[obj].append(n)
        for obj, idx in groups.items():
            report.per_object[obj] = score([predictions[n] for n in idx], [gold[n] for n in idx])
    return report


# ---------------------------------------------------------------------------
# Time series
# ---------------------------------------------------------------------------


def opinion_timeseries(rows: Iterable[tuple[str, int, int]]) -> list[tuple[str, int, float, float, int]]:
    """Aggregate (date, topic, polarity) rows into daily positive/negative shares."""
    counts: dict[tuple[str, int], list[int]] = defaultdict(lambda: [0, 0])
    for date, topic, o in rows:
        if o:
            counts[(date, topic)][0 if o > 0 else 1] += 1
    out = []
    for (date, topic), (p, n) in sorted(counts.items()):
        total = p + n
        out.append((date, topic, p / total, n / total, total))
    return out


def write_timeseries_csv(path, series, header: str | None = None) -> None:
    with Path(path).open("w", newline="", encoding="utf-8") as fh:
        if header:
            fh.write(f"# {header}\n")
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(["date", "topic", "pos_share", "neg_share", "n"])
        for date, topic, p, n, total in series:
            writer.writerow([date, topic, repr(p), repr(n), total])
