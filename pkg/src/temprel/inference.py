"""Document-level greedy inference over a conflict-free time graph.

Predictions are ranked, then offered to the graph one at a time
(check-and-add): a prediction that contradicts what the graph already
entails is dropped, otherwise it becomes an edge. The time-anchored
strategy first builds a base graph from time-expression pairs, which are
the most reliable predictions, before ranking the rest.

The greedy order is semantic, so a document is processed sequentially;
different documents are independent.
"""
from __future__ import annotations

import random
from dataclasses import dataclass, field
from typing import Sequence

from .metrics import RelationSet
from .model import Prediction
from .rules import AFTER, BEFORE, CLINICAL3, OVERLAP
from .timegraph import UNKNOWN, TimeGraph

RANDOM = "random"
CONFIDENCE = "confidence"
CONFIDENCE_TIME_ANCHOR = "confidence_time_anchor"
_KINDS = (RANDOM, CONFIDENCE, CONFIDENCE_TIME_ANCHOR)


@dataclass(frozen=True)
class RankingStrategy:
    """How to order predictions before check-and-add."""

    kind: str
    seed: int | None = None

    def __post_init__(self) -> None:
        if self.kind not in _KINDS:
            raise ValueError(f"unknown ranking strategy {self.kind!r}")
        if self.kind == RANDOM and self.seed is None:
            raise ValueError("the random strategy requires an explicit seed")

    @classmethod
    def random(cls, seed: int) -> "RankingStrategy":
        return cls(RANDOM, seed)

    @classmethod
    def confidence(cls) -> "RankingStrategy":
        return cls(CONFIDENCE)

    @classmethod
    def confidence_time_anchor(cls) -> "RankingStrategy":
        return cls(CONFIDENCE_TIME_ANCHOR)


@dataclass(frozen=True)
class DropRecord:
    """Why a prediction was dropped: what the graph already entailed."""

    prediction: Prediction
    graph_relation: str

    def to_dict(self) -> dict:
        p = self.prediction
        return {
            "doc_id": p.doc_id,
            "src": p.src,
            "tgt": p.tgt,
            "label": p.predicted,
            "confidence": p.confidence,
            "graph_relation": self.graph_relation,
        }


@dataclass
class InferenceOutcome:
    accepted: list[Prediction]
    dropped: list[Prediction]
    graph: TimeGraph
    drop_log: list[DropRecord] = field(default_factory=list)

    def resolved_relations(self) -> RelationSet:
        """Relation set for scoring: accepted predictions as-is; dropped
        ones replaced by the graph-entailed relation when it is definite,
        otherwise kept unchanged."""
        doc_id = self.accepted[0].doc_id if self.accepted else (
            self.dropped[0].doc_id if self.dropped else ""
        )
        out = RelationSet(doc_id=doc_id)
        for p in self.accepted:
            out.add(p.src, p.tgt, p.predicted)
        for p in self.dropped:
            derived = self.graph.query(p.src, p.tgt)
            out.add(p.src, p.tgt, derived if derived != UNKNOWN else p.predicted)
        return out


def rank(
    predictions: Sequence[Prediction], strategy: RankingStrategy
) -> list[Prediction]:
    """Order predictions for insertion.

    random: seeded uniform shuffle. confidence: stable sort by confidence
    descending (ties keep document order). confidence_time_anchor: the
    same sort restricted to non-T-T pairs; T-T pairs are handled by the
    anchoring step of :func:`global_infer`, not here.
    """
    if strategy.kind == RANDOM:
        out = list(predictions)
        random.Random(strategy.seed).shuffle(out)
        return out
    if strategy.kind == CONFIDENCE:
        return sorted(predictions, key=lambda p: -p.confidence)
    return sorted(
        (p for p in predictions if not p.is_tt), key=lambda p: -p.confidence
    )


def check_and_add(graph: TimeGraph, prediction: Prediction) -> bool:
    """Offer one prediction to the graph; True when it became an edge."""
    label = prediction.predicted
    if label == BEFORE:
        return graph.add_before(prediction.src, prediction.tgt)
    if label == AFTER:
        return graph.add_before(prediction.tgt, prediction.src)
    if label == OVERLAP:
        return graph.add_overlap(prediction.src, prediction.tgt)
    raise ValueError(f"no graph semantics for label {label!r}")


def global_infer(
    predictions: Sequence[Prediction], strategy: RankingStrategy
) -> InferenceOutcome:
    """Greedy construction of a conflict-free relation set for one document.

    With the time-anchored strategy the T-T predictions are inserted
    first (confidence order, conflict-checked among themselves), then the
    remaining predictions in ranked order. Other strategies rank all
    predictions in a single pass. Deterministic for fixed inputs, strategy
    and seed.
    """
    docs = {p.doc_id for p in predictions}
    if len(docs) > 1:
        raise ValueError(f"predictions span multiple documents: {sorted(docs)}")
    seen_pairs = set()
    for p in predictions:
        if p.pair in seen_pairs:
            raise ValueError(f"duplicate prediction for pair {p.pair}")
        seen_pairs.add(p.pair)
    for p in predictions:
        CLINICAL3.validate(p.predicted)

    graph = TimeGraph()
    accepted: list[Prediction] = []
    dropped: list[Prediction] = []
    drop_log: list[DropRecord] = []

    def offer(p: Prediction) -> None:
        if check_and_add(graph, p):
            accepted.append(p)
        else:
            dropped.append(p)
            drop_log.append(DropRecord(p, graph.query(p.src, p.tgt)))

    if strategy.kind == CONFIDENCE_TIME_ANCHOR:
        base = sorted((p for p in predictions if p.is_tt), key=lambda p: -p.confidence)
        for p in base:
            offer(p)
    for p in rank(predictions, strategy):
        offer(p)
    return InferenceOutcome(
        accepted=accepted, dropped=dropped, graph=graph, drop_log=drop_log
    )
