"""Temporal closure and the two evaluation protocols.

Closure-based scoring verifies each prediction against the closure of the
gold annotations (precision) and each gold relation against the closure of
the predictions (recall). The standard micro-average protocol scores exact
per-pair label agreement and collapses to a single accuracy when the
predictions cover exactly the gold pairs.

All functions are pure; per-document scoring can run in parallel with a
deterministic final aggregation.
"""
from __future__ import annotations

from collections import deque
from dataclasses import dataclass, field
from typing import Iterable, Iterator, Mapping, Sequence

from .rules import (
    CLINICAL3,
    SYMMETRY,
    TRANSITIVITY,
    OVERLAP,
    PslRule,
    default_rule_set,
)

Triple = tuple[str, str, str]


class RelationSet:
    """Directed labeled relations of one document; one label per ordered pair."""

    def __init__(self, doc_id: str = "", triples: Iterable[Triple] = ()) -> None:
        self.doc_id = doc_id
        self._rel: dict[tuple[str, str], str] = {}
        # (src, tgt, kept_label, rejected_label) entries recorded by closure.
        self.contradictions: list[tuple[str, str, str, str]] = []
        for s, t, l in triples:
            self.add(s, t, l)

    def add(self, src: str, tgt: str, label: str) -> None:
        if src == tgt:
            raise ValueError(f"self-relation on entity {src!r}")
        existing = self._rel.get((src, tgt))
        if existing is None:
            self._rel[(src, tgt)] = label
        elif existing != label:
            raise ValueError(
                f"pair ({src!r}, {tgt!r}) already labeled {existing!r}; got {label!r}"
            )

    def get(self, src: str, tgt: str) -> str | None:
        return self._rel.get((src, tgt))

    def pairs(self) -> list[tuple[str, str]]:
        return list(self._rel)

    def triples(self) -> Iterator[Triple]:
        for (s, t), l in self._rel.items():
            yield s, t, l

    def __contains__(self, triple: Triple) -> bool:
        s, t, l = triple
        return self._rel.get((s, t)) == l

    def __len__(self) -> int:
        return len(self._rel)

    def __eq__(self, other: object) -> bool:
        if not isinstance(other, RelationSet):
            return NotImplemented
        return self.doc_id == other.doc_id and self._rel == other._rel

    def __repr__(self) -> str:
        return f"RelationSet({self.doc_id!r}, {len(self)} relations)"

    def copy(self) -> "RelationSet":
        return RelationSet(self.doc_id, self.triples())


def temporal_closure(
    relations: RelationSet, rules: Sequence[PslRule] | None = None
) -> RelationSet:
    """Least fixed point of the transitivity and symmetry rules.

    Contains the input and is idempotent. A pair that becomes derivable
    with two distinct labels is a contradiction: it is recorded on the
    result's ``contradictions`` list, keeps its first label, and is not
    expanded further. Deriving a non-Overlap relation from an entity to
    itself (a temporal cycle) is recorded the same way.
    """
    if rules is None:
        rules = default_rule_set(CLINICAL3)
    scheme_labels = {l for r in rules for l in (*r.body, r.head)}
    for _, _, l in relations.triples():
        if l not in scheme_labels:
            raise ValueError(
                f"label {l!r} has no closure semantics (rules cover {sorted(scheme_labels)})"
            )
    trans = [r for r in rules if r.kind == TRANSITIVITY]
    sym = {r.body[0]: r.head for r in rules if r.kind == SYMMETRY}

    out = RelationSet(relations.doc_id, relations.triples())
    labels = {(s, t): l for s, t, l in out.triples()}
    by_src: dict[str, dict[str, str]] = {}
    by_tgt: dict[str, dict[str, str]] = {}
    for (s, t), l in labels.items():
        by_src.setdefault(s, {})[t] = l
        by_tgt.setdefault(t, {})[s] = l

    queue: deque[Triple] = deque(out.triples())

    def derive(s: str, t: str, l: str) -> None:
        if s == t:
            if l != OVERLAP:
                out.contradictions.append((s, t, OVERLAP, l))
            return
        existing = labels.get((s, t))
        if existing is not None:
            if existing != l:
                out.contradictions.append((s, t, existing, l))
            return
        labels[(s, t)] = l
        out.add(s, t, l)
        by_src.setdefault(s, {})[t] = l
        by_tgt.setdefault(t, {})[s] = l
        queue.append((s, t, l))

    while queue:
        a, b, l = queue.popleft()
        flipped = sym.get(l)
        if flipped is not None:
            derive(b, a, flipped)
        for rule in trans:
            l1, l2 = rule.body
            if l == l1:
                for c, lbc in list(by_src.get(b, {}).items()):
                    if lbc == l2:
                        derive(a, c, rule.head)
            if l == l2:
                for x, lxa in list(by_tgt.get(a, {}).items()):
                    if lxa == l1:
                        derive(x, b, rule.head)
    return out


# --- reports ---------------------------------------------------------------

def _f1(p: float, r: float) -> float:
    return 2.0 * p * r / (p + r) if p + r > 0.0 else 0.0


def _ratio(num: int, den: int) -> float:
    return num / den if den else 0.0


@dataclass
class LabelScores:
    precision: float
    recall: float
    f1: float


@dataclass
class EvalReport:
    """Scores plus the raw verified/total counts behind them."""

    metric: str
    precision: float
    recall: float
    f1: float
    per_label: dict[str, LabelScores]
    counts: dict[str, tuple[int, int]]  # direction -> (verified, total)
    per_document: dict[str, dict] = field(default_factory=dict)

    def to_dict(self) -> dict:
        return {
            "metric": self.metric,
            "overall": {
                "precision": self.precision,
                "recall": self.recall,
                "f1": self.f1,
            },
            "counts": {k: list(v) for k, v in self.counts.items()},
            "per_label": {
                l: {"precision": s.precision, "recall": s.recall, "f1": s.f1}
                for l, s in self.per_label.items()
            },
            "per_document": self.per_document,
        }

    def to_table(self) -> str:
        rows = [f"Metric: {self.metric}", f"{'':<14}{'P':>9}{'R':>9}{'F1':>9}"]
        for label, s in self.per_label.items():
            rows.append(
                f"{label:<14}{s.precision:>9.4f}{s.recall:>9.4f}{s.f1:>9.4f}"
            )
        rows.append(
            f"{'Overall':<14}{self.precision:>9.4f}{self.recall:>9.4f}{self.f1:>9.4f}"
        )
        return "\n".join(rows) + "\n"


def _as_doc_map(value) -> dict[str, RelationSet]:
    if isinstance(value, RelationSet):
        return {value.doc_id: value}
    return {rs.doc_id: rs for rs in value}


def tempeval_scores(predictions, gold) -> EvalReport:
    """Closure-verified precision/recall, micro-aggregated over documents.

    Precision counts predictions found in the closure of the gold
    annotations; recall counts gold relations found in the closure of the
    predictions. Either orientation of a relation verifies, since closures
    contain their symmetric images.
    """
    preds_by_doc = _as_doc_map(predictions)
    gold_by_doc = _as_doc_map(gold)
    if set(preds_by_doc) != set(gold_by_doc):
        raise ValueError(
            "prediction and gold document ids differ: "
            f"{sorted(set(preds_by_doc) ^ set(gold_by_doc))}"
        )

    ver_p = tot_p = ver_g = tot_g = 0
    label_counts: dict[str, dict[str, int]] = {}
    per_document: dict[str, dict] = {}
    for doc_id in gold_by_doc:
        p_set, g_set = preds_by_doc[doc_id], gold_by_doc[doc_id]
        gold_closure = temporal_closure(g_set)
        pred_closure = temporal_closure(p_set)
        doc_ver_p = doc_ver_g = 0
        for s, t, l in p_set.triples():
            lc = label_counts.setdefault(
                l, {"ver_p": 0, "tot_p": 0, "ver_g": 0, "tot_g": 0}
            )
            lc["tot_p"] += 1
            if (s, t, l) in gold_closure:
                lc["ver_p"] += 1
                doc_ver_p += 1
        for s, t, l in g_set.triples():
            lc = label_counts.setdefault(
                l, {"ver_p": 0, "tot_p": 0, "ver_g": 0, "tot_g": 0}
            )
            lc["tot_g"] += 1
            if (s, t, l) in pred_closure:
                lc["ver_g"] += 1
                doc_ver_g += 1
        ver_p += doc_ver_p
        tot_p += len(p_set)
        ver_g += doc_ver_g
        tot_g += len(g_set)
        dp, dr = _ratio(doc_ver_p, len(p_set)), _ratio(doc_ver_g, len(g_set))
        per_document[doc_id] = {
            "precision": dp,
            "recall": dr,
            "f1": _f1(dp, dr),
            "counts": {
                "precision": [doc_ver_p, len(p_set)],
                "recall": [doc_ver_g, len(g_set)],
            },
        }

    precision, recall = _ratio(ver_p, tot_p), _ratio(ver_g, tot_g)
    per_label = {
        l: LabelScores(
            _ratio(c["ver_p"], c["tot_p"]),
            _ratio(c["ver_g"], c["tot_g"]),
            _f1(_ratio(c["ver_p"], c["tot_p"]), _ratio(c["ver_g"], c["tot_g"])),
        )
        for l, c in sorted(label_counts.items())
    }
    return EvalReport(
        metric="tempeval",
        precision=precision,
        recall=recall,
        f1=_f1(precision, recall),
        per_label=per_label,
        counts={"precision": (ver_p, tot_p), "recall": (ver_g, tot_g)},
        per_document=per_document,
    )


def micro_f1(
    predictions,
    gold,
    entity_kinds: Mapping[str, Mapping[str, str]] | None = None,
) -> EvalReport:
    """Standard micro-averaged multi-class scores over covered pairs.

    Requires the predictions to cover exactly the gold pairs (pure
    classification setting), which makes micro precision, recall and F1
    collapse to one accuracy value. When ``entity_kinds`` (doc id ->
    entity id -> kind) is given, scoring is restricted to Event-Event
    pairs.
    """
    preds_by_doc = _as_doc_map(predictions)
    gold_by_doc = _as_doc_map(gold)
    if set(preds_by_doc) != set(gold_by_doc):
        raise ValueError(
            "prediction and gold document ids differ: "
            f"{sorted(set(preds_by_doc) ^ set(gold_by_doc))}"
        )

    correct = total = 0
    label_counts: dict[str, dict[str, int]] = {}
    per_document: dict[str, dict] = {}
    for doc_id in gold_by_doc:
        p_set, g_set = preds_by_doc[doc_id], gold_by_doc[doc_id]

        def keep(pair: tuple[str, str]) -> bool:
            if entity_kinds is None:
                return True
            kinds = entity_kinds[doc_id]
            return kinds[pair[0]] == "Event" and kinds[pair[1]] == "Event"

        g_pairs = {p for p in g_set.pairs() if keep(p)}
        p_pairs = {p for p in p_set.pairs() if keep(p)}
        if g_pairs != p_pairs:
            missing = sorted(g_pairs ^ p_pairs)[:5]
            raise ValueError(
                f"document {doc_id!r}: predictions do not cover exactly the "
                f"gold pairs (e.g. {missing})"
            )
        doc_correct = 0
        for s, t in sorted(g_pairs):
            gl, pl = g_set.get(s, t), p_set.get(s, t)
            gc = label_counts.setdefault(
                gl, {"tp": 0, "pred": 0, "gold": 0}
            )
            gc["gold"] += 1
            pc = label_counts.setdefault(
                pl, {"tp": 0, "pred": 0, "gold": 0}
            )
            pc["pred"] += 1
            if gl == pl:
                gc["tp"] += 1
                doc_correct += 1
        correct += doc_correct
        total += len(g_pairs)
        acc = _ratio(doc_correct, len(g_pairs))
        per_document[doc_id] = {
            "precision": acc,
            "recall": acc,
            "f1": acc,
            "counts": {
                "precision": [doc_correct, len(g_pairs)],
                "recall": [doc_correct, len(g_pairs)],
            },
        }

    acc = _ratio(correct, total)
    per_label = {
        l: LabelScores(
            _ratio(c["tp"], c["pred"]),
            _ratio(c["tp"], c["gold"]),
            _f1(_ratio(c["tp"], c["pred"]), _ratio(c["tp"], c["gold"])),
        )
        for l, c in sorted(label_counts.items())
    }
    return EvalReport(
        metric="micro",
        precision=acc,
        recall=acc,
        f1=acc,
        per_label=per_label,
        counts={"precision": (correct, total), "recall": (correct, total)},
        per_document=per_document,
    )
