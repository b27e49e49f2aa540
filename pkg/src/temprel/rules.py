"""Soft-logic rule templates over temporal relation labels.

Holds the label schemes, the transitivity/symmetry rule set, triplet
instances (three entity pairs in chain pattern), rule grounding with its
hinge distance-to-satisfaction, the subgradient of that distance, dataset
packing into triplets, and symmetry augmentation.

Everything here is a pure function over immutable inputs; batches may be
grounded in parallel with no shared state.
"""
from __future__ import annotations

import re
from dataclasses import dataclass
from typing import TYPE_CHECKING, Iterable, Sequence

import numpy as np

from .validation import check_probability_matrix

if TYPE_CHECKING:  # pragma: no cover
    from .data import Document

BEFORE = "Before"
AFTER = "After"
OVERLAP = "Overlap"
INCLUDES = "Includes"
IS_INCLUDE = "IsInclude"
SIMULTANEOUS = "Simultaneous"
VAGUE = "Vague"

TRANSITIVITY = "transitivity"
SYMMETRY = "symmetry"


class UnknownSchemeError(ValueError):
    pass


class UnknownLabelError(ValueError):
    pass


@dataclass(frozen=True)
class LabelScheme:
    """A named, ordered set of relation labels.

    The label order fixes the layout of every probability vector produced
    or consumed for this scheme.
    """

    name: str
    labels: tuple[str, ...]

    @property
    def size(self) -> int:
        return len(self.labels)

    def __contains__(self, label: str) -> bool:
        return label in self.labels

    def index(self, label: str) -> int:
        try:
            return self.labels.index(label)
        except ValueError:
            raise UnknownLabelError(
                f"label {label!r} not in scheme {self.name!r} {self.labels}"
            ) from None

    def validate(self, label: str) -> str:
        self.index(label)
        return label


CLINICAL3 = LabelScheme("clinical3", (BEFORE, AFTER, OVERLAP))
DENSE6 = LabelScheme(
    "dense6", (BEFORE, AFTER, INCLUDES, IS_INCLUDE, SIMULTANEOUS, VAGUE)
)
SCHEMES = {s.name: s for s in (CLINICAL3, DENSE6)}


def get_scheme(name: str) -> LabelScheme:
    if isinstance(name, LabelScheme):
        return name
    try:
        return SCHEMES[name]
    except KeyError:
        raise UnknownSchemeError(
            f"unknown label scheme {name!r}; known: {sorted(SCHEMES)}"
        ) from None


@dataclass(frozen=True)
class PslRule:
    """A body/head rule template over relation labels.

    Transitivity rules have a two-atom body on chained terms
    (A,B),(B,C) -> (A,C); symmetry rules have a one-atom body with the
    head on flipped terms (A,B) -> (B,A). The optional weight is housed
    for completeness but never enters the distance computation: the
    shipped rules are hard constraints.
    """

    name: str
    body: tuple[str, ...]
    head: str
    kind: str
    weight: float | None = None

    def __post_init__(self) -> None:
        if self.kind not in (TRANSITIVITY, SYMMETRY):
            raise ValueError(f"unknown rule kind {self.kind!r}")
        arity = 2 if self.kind == TRANSITIVITY else 1
        if len(self.body) != arity:
            raise ValueError(
                f"{self.kind} rule needs body arity {arity}, got {len(self.body)}"
            )
        if self.weight is not None and not 0.0 <= self.weight <= 1.0:
            raise ValueError(f"rule weight outside [0, 1]: {self.weight}")

    def to_text(self) -> str:
        if self.kind == TRANSITIVITY:
            return (
                f"{self.body[0]}(A,B) & {self.body[1]}(B,C) -> {self.head}(A,C)"
            )
        return f"{self.body[0]}(A,B) -> {self.head}(B,A)"


def _abbrev(labels: Iterable[str]) -> str:
    return "".join(lbl[0] for lbl in labels)


def _make_rule(kind: str, body: tuple[str, ...], head: str) -> PslRule:
    return PslRule(name=_abbrev((*body, head)), body=body, head=head, kind=kind)


def default_rule_set(scheme: LabelScheme | str) -> list[PslRule]:
    """The seven transitivity and three symmetry rules for a scheme.

    For the six-label scheme the same templates are used with Overlap
    replaced by Simultaneous; Includes/IsInclude/Vague carry no rule
    semantics and never appear in rule bodies.
    """
    scheme = get_scheme(scheme)
    if scheme.name == CLINICAL3.name:
        o = OVERLAP
    elif scheme.name == DENSE6.name:
        o = SIMULTANEOUS
    else:  # pragma: no cover - schemes are closed
        raise UnknownSchemeError(f"no rule set for scheme {scheme.name!r}")
    b, a = BEFORE, AFTER
    transitivity = [
        (b, b, b),
        (b, o, b),
        (o, b, b),
        (o, o, o),
        (a, a, a),
        (a, o, a),
        (o, a, a),
    ]
    symmetry = [(b, a), (a, b), (o, o)]
    rules = [_make_rule(TRANSITIVITY, (l1, l2), l3) for l1, l2, l3 in transitivity]
    rules += [_make_rule(SYMMETRY, (l1,), l2) for l1, l2 in symmetry]
    return rules


def symmetry_flip_map(scheme: LabelScheme | str) -> dict[str, str]:
    """label -> flipped label, as induced by the scheme's symmetry rules."""
    return {
        r.body[0]: r.head
        for r in default_rule_set(scheme)
        if r.kind == SYMMETRY
    }


# --- rule set serialization -------------------------------------------------

_TRANS_RE = re.compile(
    r"^\s*(\w+)\(A,B\)\s*&\s*(\w+)\(B,C\)\s*->\s*(\w+)\(A,C\)\s*$"
)
_SYM_RE = re.compile(r"^\s*(\w+)\(A,B\)\s*->\s*(\w+)\(B,A\)\s*$")


def rules_to_text(rules: Sequence[PslRule]) -> str:
    """One rule per line, e.g. ``Before(A,B) & Overlap(B,C) -> Before(A,C)``."""
    return "\n".join(r.to_text() for r in rules) + "\n"


def parse_rule(line: str) -> PslRule:
    m = _TRANS_RE.match(line)
    if m:
        return _make_rule(TRANSITIVITY, (m.group(1), m.group(2)), m.group(3))
    m = _SYM_RE.match(line)
    if m:
        return _make_rule(SYMMETRY, (m.group(1),), m.group(2))
    raise ValueError(f"unparseable rule line: {line!r}")


def rules_from_text(text: str) -> list[PslRule]:
    return [parse_rule(line) for line in text.splitlines() if line.strip()]


# --- triplet instances ------------------------------------------------------

Pair = tuple[str, str]


@dataclass(frozen=True, eq=False)
class TripletInstance:
    """Three entity pairs packaged as one training unit.

    Chain instances hold pairs (A,B),(B,C),(A,C) over shared entities and
    are eligible for rule grounding (``grounded=True`` when the gold labels
    of pairs 1 and 2 match some transitivity rule body). Filler instances
    pack leftover relations three at a time; unused slots are None and
    contribute nothing to any loss.
    """

    pairs: tuple[Pair | None, Pair | None, Pair | None]
    gold: tuple[str | None, str | None, str | None] | None = None
    grounded: bool = False
    features: np.ndarray | None = None  # (3, dim); zero rows for empty slots
    doc_id: str | None = None

    def __post_init__(self) -> None:
        if len(self.pairs) != 3:
            raise ValueError("a triplet instance holds exactly three pair slots")
        if self.gold is not None and len(self.gold) != 3:
            raise ValueError("gold labels must cover all three slots")
        if self.grounded:
            if any(p is None for p in self.pairs):
                raise ValueError("a grounded instance cannot have empty slots")
            (a1, b1), (b2, c1), (a2, c2) = self.pairs  # type: ignore[misc]
            if not (a1 == a2 and b1 == b2 and c1 == c2):
                raise ValueError(
                    f"pairs {self.pairs} do not form the chain (A,B),(B,C),(A,C)"
                )

    def active_slots(self) -> list[int]:
        """Slots holding a real pair with a gold label."""
        if self.gold is None:
            return []
        return [
            i
            for i in range(3)
            if self.pairs[i] is not None and self.gold[i] is not None
        ]


@dataclass(frozen=True, eq=False)
class DistanceResult:
    """Hinge distance to satisfaction plus its subgradient.

    ``subgradient`` has one row per pair slot and one column per label;
    entries are zero everywhere except at the atoms of the matched rule
    when the distance is strictly positive.
    """

    distance: float
    matched_rule: str | None
    subgradient: np.ndarray


def ground_and_distance(
    instance: TripletInstance,
    probs: np.ndarray,
    preds: Sequence[str],
    rules: Sequence[PslRule],
    scheme: LabelScheme | str = CLINICAL3,
) -> DistanceResult:
    """Ground the transitivity rules against a triplet and score the best one.

    For every transitivity rule whose body matches the labels of pairs 1
    and 2 (``preds``), the rule's distance is
    ``max(max(P1 + P2 - 1, 0) - P3(head), 0)`` where ``Pi`` is pair i's
    probability of its matched label; the smallest such distance is the
    penalty. Instances that ground no rule (or are not chain instances)
    have distance 0.

    Symmetry rules never enter the grounding loop; they exist for dataset
    augmentation and closure only.
    """
    scheme = get_scheme(scheme)
    probs = check_probability_matrix(probs, scheme.size, n_rows=3)
    subgrad = np.zeros((3, scheme.size))
    if not instance.grounded:
        return DistanceResult(0.0, None, subgrad)

    best_d = 1.0
    best: tuple[PslRule, float, float] | None = None
    for rule in rules:
        if rule.kind != TRANSITIVITY:
            continue
        if preds[0] == rule.body[0] and preds[1] == rule.body[1]:
            p1 = probs[0, scheme.index(preds[0])]
            p2 = probs[1, scheme.index(preds[1])]
            p3 = probs[2, scheme.index(rule.head)]
            inner = max(p1 + p2 - 1.0, 0.0)
            d_t = max(inner - p3, 0.0)
            if best is None or d_t < best_d:
                best_d = d_t
                best = (rule, inner, p3)
    if best is None:
        return DistanceResult(0.0, None, subgrad)

    rule, inner, p3 = best
    # Subgradient of the minimizing rule; zero at kinks by convention so
    # satisfied groundings stay penalty-free.
    if inner > 0.0 and inner - p3 > 0.0:
        subgrad[0, scheme.index(preds[0])] = 1.0
        subgrad[1, scheme.index(preds[1])] = 1.0
        subgrad[2, scheme.index(rule.head)] = -1.0
    return DistanceResult(best_d, rule.name, subgrad)


def distance_subgradient(
    instance: TripletInstance,
    probs: np.ndarray,
    preds: Sequence[str],
    rules: Sequence[PslRule],
    scheme: LabelScheme | str = CLINICAL3,
) -> DistanceResult:
    """Distance plus subgradient with respect to every probability entry.

    Training-time entry point; identical to :func:`ground_and_distance`,
    which already carries the subgradient of the minimizing rule.
    """
    return ground_and_distance(instance, probs, preds, rules, scheme)


# --- dataset arrangement ----------------------------------------------------

def pack_triplets(
    documents: Iterable["Document"],
    scheme: LabelScheme | str = CLINICAL3,
    rules: Sequence[PslRule] | None = None,
) -> list[TripletInstance]:
    """Arrange gold relations into triplet training instances.

    Emits one chain instance per (A,B),(B,C),(A,C) chain in the gold
    annotations whose first two labels match some transitivity rule body.
    Relations not involved in any chain are packed together, three per
    filler instance, padded with empty slots.
    """
    scheme = get_scheme(scheme)
    if rules is None:
        rules = default_rule_set(scheme)
    bodies = {r.body for r in rules if r.kind == TRANSITIVITY}

    instances: list[TripletInstance] = []
    for doc in documents:
        rel = {(s, t): l for s, t, l in doc.relations.triples()}
        by_src: dict[str, list[tuple[str, str]]] = {}
        for (s, t), l in rel.items():
            by_src.setdefault(s, []).append((t, l))

        used: set[Pair] = set()
        for (a, b), l1 in rel.items():
            for c, l2 in by_src.get(b, ()):
                if c == a:
                    continue
                l3 = rel.get((a, c))
                if l3 is None:
                    continue
                if (l1, l2) not in bodies:
                    continue
                pairs = ((a, b), (b, c), (a, c))
                instances.append(
                    TripletInstance(
                        pairs=pairs,
                        gold=(l1, l2, l3),
                        grounded=True,
                        features=_gather_features(doc, pairs),
                        doc_id=doc.id,
                    )
                )
                used.update(pairs)

        leftovers = [p for p in rel if p not in used]
        for i in range(0, len(leftovers), 3):
            chunk = leftovers[i : i + 3]
            pairs = tuple(chunk) + (None,) * (3 - len(chunk))
            gold = tuple(rel[p] for p in chunk) + (None,) * (3 - len(chunk))
            instances.append(
                TripletInstance(
                    pairs=pairs,  # type: ignore[arg-type]
                    gold=gold,  # type: ignore[arg-type]
                    grounded=False,
                    features=_gather_features(doc, pairs),
                    doc_id=doc.id,
                )
            )
    return instances


def _gather_features(doc: "Document", pairs: Sequence[Pair | None]):
    if doc.features is None:
        return None
    dim = len(next(iter(doc.features.values())))
    out = np.zeros((3, dim))
    for i, p in enumerate(pairs):
        if p is not None:
            out[i] = doc.features[p]
    return out


def augment_symmetry(
    documents: Iterable["Document"], scheme: LabelScheme | str = CLINICAL3
) -> list["Document"]:
    """Add the flipped image of every relation that has a symmetry rule.

    flip(Before)=After, flip(After)=Before and Overlap (or Simultaneous)
    maps to itself. Pairs whose flipped orientation is already annotated
    are left untouched, which makes the operation idempotent. Labels
    without a symmetry rule are skipped.
    """
    flip = symmetry_flip_map(scheme)
    out = []
    for doc in documents:
        augmented = doc.copy()
        for s, t, l in list(doc.relations.triples()):
            flipped = flip.get(l)
            if flipped is None:
                continue
            if augmented.relations.get(t, s) is None:
                augmented.relations.add(t, s, flipped)
        out.append(augmented)
    return out
