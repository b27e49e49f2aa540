"""Documents, the corpus file format, and the synthetic-timeline harness.

A corpus is a JSON file: a versioned header with the label scheme tag plus
documents carrying entities, gold relations and (optionally) per-pair
probability blocks. One format serves gold data, classifier predictions and
inference output.

The generator samples each entity an interval on a latent timeline and
derives gold labels from interval order; the simulator turns gold labels
into noisy probability distributions so inference is testable without a
trained model. Both are pure given their seed.
"""
from __future__ import annotations

import hashlib
import json
import statistics
from bisect import bisect_left
from dataclasses import dataclass
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np

from .metrics import RelationSet
from .model import Prediction
from .rules import AFTER, BEFORE, CLINICAL3, OVERLAP, LabelScheme, get_scheme

CORPUS_FORMAT = "temprel-corpus"
CORPUS_VERSION = 1

EVENT = "Event"
TIME_EXPRESSION = "TimeExpression"
KINDS = (EVENT, TIME_EXPRESSION)


class CorpusFormatError(ValueError):
    pass


@dataclass(frozen=True)
class Entity:
    id: str
    kind: str
    position: int
    timestamp: float | None = None

    def __post_init__(self) -> None:
        if self.kind not in KINDS:
            raise ValueError(f"unknown entity kind {self.kind!r}")


@dataclass
class Document:
    """One document: entities, gold relations, optional feature/probability maps."""

    id: str
    entities: list[Entity]
    relations: RelationSet
    features: dict[tuple[str, str], np.ndarray] | None = None
    probabilities: dict[tuple[str, str], np.ndarray] | None = None

    def __post_init__(self) -> None:
        ids = [e.id for e in self.entities]
        if len(ids) != len(set(ids)):
            raise ValueError(f"document {self.id!r} has duplicate entity ids")
        known = set(ids)
        for s, t, _ in self.relations.triples():
            for eid in (s, t):
                if eid not in known:
                    raise ValueError(
                        f"document {self.id!r}: relation references unknown entity {eid!r}"
                    )

    def entity(self, eid: str) -> Entity:
        for e in self.entities:
            if e.id == eid:
                return e
        raise KeyError(eid)

    def kinds(self) -> dict[str, str]:
        return {e.id: e.kind for e in self.entities}

    def copy(self) -> "Document":
        return Document(
            id=self.id,
            entities=list(self.entities),
            relations=self.relations.copy(),
            features=dict(self.features) if self.features is not None else None,
            probabilities=dict(self.probabilities)
            if self.probabilities is not None
            else None,
        )


@dataclass
class Corpus:
    scheme: LabelScheme
    documents: list[Document]


@dataclass(frozen=True)
class SynthConfig:
    """Knobs for the synthetic-timeline generator.

    ``annotation_density`` is the fraction of possible entity pairs that
    receive a gold relation. ``noise_temperature`` scales the simulated
    classifier's logit noise. The latent timeline spans ``timeline_span``
    units and is carved into disjoint moments (``moment_fraction`` moments
    per entity); narrative order follows timeline order up to
    ``narrative_jitter``.
    """

    num_documents: int = 20
    entities_min: int = 8
    entities_max: int = 14
    time_expression_fraction: float = 0.3
    annotation_density: float = 0.5
    noise_temperature: float = 1.0
    seed: int = 0
    timeline_span: float = 100.0
    moment_fraction: float = 0.6
    narrative_jitter: float = 6.0

    def __post_init__(self) -> None:
        if self.num_documents < 1:
            raise ValueError("num_documents must be at least 1")
        if self.entities_min < 2 or self.entities_max < self.entities_min:
            raise ValueError("need an entity range with at least 2 entities")
        if not 0.0 <= self.time_expression_fraction <= 1.0:
            raise ValueError("time_expression_fraction must lie in [0, 1]")
        if not 0.0 < self.annotation_density <= 1.0:
            raise ValueError("annotation_density must lie in (0, 1]")
        if self.noise_temperature < 0:
            raise ValueError("noise_temperature must be nonnegative")
        if self.moment_fraction <= 0:
            raise ValueError("moment_fraction must be positive")


def synth_generate(config: SynthConfig) -> list[Document]:
    """Sample documents whose gold labels come from a latent timeline.

    Each entity gets an interval; disjoint intervals yield Before/After by
    order, intersecting ones Overlap. Intervals are sampled inside
    well-separated moment clusters whose members share a common core, so
    interval overlap is transitive and every generated gold set is
    closure-consistent. Deterministic per seed.
    """
    rng = np.random.default_rng(config.seed)
    documents = []
    for d in range(config.num_documents):
        n = int(rng.integers(config.entities_min, config.entities_max + 1))
        n_moments = max(2, round(config.moment_fraction * n))
        spacing = config.timeline_span / n_moments
        centers = (np.arange(n_moments) + 0.5) * spacing
        # Intervals within a moment all contain its center; the half-width
        # cap keeps neighbouring moments disjoint.
        max_hw = min(3.5, 0.25 * spacing)
        moment = rng.integers(0, n_moments, n)
        left = rng.uniform(0.5, max_hw, n)
        right = rng.uniform(0.5, max_hw, n)
        starts = centers[moment] - left
        ends = centers[moment] + right
        is_time = rng.random(n) < config.time_expression_fraction
        narrative = starts + rng.normal(0.0, config.narrative_jitter, n)
        # Narrative position = rank of the jittered start time.
        order = np.argsort(np.argsort(narrative, kind="stable"), kind="stable")

        entities = []
        for i in range(n):
            kind = TIME_EXPRESSION if is_time[i] else EVENT
            ts = float((starts[i] + ends[i]) / 2.0) if kind == TIME_EXPRESSION else None
            entities.append(
                Entity(id=f"e{i}", kind=kind, position=int(order[i]), timestamp=ts)
            )

        all_pairs = [(i, j) for i in range(n) for j in range(i + 1, n)]
        m = max(1, round(config.annotation_density * len(all_pairs)))
        chosen = rng.choice(len(all_pairs), size=m, replace=False)
        relations = RelationSet(doc_id=f"d{d}")
        for idx in sorted(chosen):
            i, j = all_pairs[idx]
            if rng.random() < 0.5:
                i, j = j, i
            if ends[i] < starts[j]:
                label = BEFORE
            elif ends[j] < starts[i]:
                label = AFTER
            else:
                label = OVERLAP
            relations.add(f"e{i}", f"e{j}", label)
        documents.append(Document(id=f"d{d}", entities=entities, relations=relations))
    return documents


# --- featurization -----------------------------------------------------------

_KIND_SLOTS = {("Event", "Event"): 0, ("Event", "TimeExpression"): 1,
               ("TimeExpression", "Event"): 1, ("TimeExpression", "TimeExpression"): 2}
_TOKEN_BINS = (-8.0, -3.0, 0.0, 3.0, 8.0)  # 6 signed buckets
_TS_BINS = (-15.0, -4.0, 4.0, 15.0)  # 5 signed buckets
FEATURE_DIM = 3 + (len(_TOKEN_BINS) + 1) + (len(_TS_BINS) + 1) + 1 + 1

_NORMAL = statistics.NormalDist()


def _hash_normal(key: str) -> float:
    # Stable pseudo-noise: features must not depend on process seed/state.
    digest = hashlib.blake2b(key.encode("utf-8"), digest_size=8).digest()
    u = int.from_bytes(digest, "big") / 2**64
    return _NORMAL.inv_cdf(min(max(u, 1e-9), 1.0 - 1e-9))


def pair_features(doc: Document, src: str, tgt: str) -> np.ndarray:
    """Explicit features for an ordered entity pair.

    Entity-kind one-hot, signed narrative-distance bucket, signed
    timestamp-delta bucket (timestamps exist only on time expressions; a
    flag marks pairs where the delta is unavailable) and one stable noise
    channel.
    """
    a, b = doc.entity(src), doc.entity(tgt)
    vec = np.zeros(FEATURE_DIM)
    vec[_KIND_SLOTS[(a.kind, b.kind)]] = 1.0
    tok = 3 + bisect_left(_TOKEN_BINS, float(b.position - a.position))
    vec[tok] = 1.0
    base = 3 + len(_TOKEN_BINS) + 1
    if a.timestamp is not None and b.timestamp is not None:
        ts = base + bisect_left(_TS_BINS, b.timestamp - a.timestamp)
        vec[ts] = 1.0
    else:
        vec[base + len(_TS_BINS) + 1] = 1.0  # delta unavailable
    vec[-1] = _hash_normal(f"{doc.id}|{src}|{tgt}")
    return vec


def featurize(documents: Iterable[Document]) -> list[Document]:
    """Attach feature vectors for every annotated pair; returns the input."""
    docs = list(documents)
    for doc in docs:
        doc.features = {
            (s, t): pair_features(doc, s, t) for s, t, _ in doc.relations.triples()
        }
    return docs


# --- simulated classifier ------------------------------------------------------

def simulate_classifier(
    documents: Iterable[Document],
    noise_temperature: float,
    seed: int,
    scheme: LabelScheme | str = CLINICAL3,
    tt_noise_scale: float = 0.15,
    gain: float = 4.0,
) -> list[Prediction]:
    """Turn gold labels into noisy probability distributions.

    Per pair: softmax of (gain * one-hot gold + temperature * N(0, 1)).
    Temperature 0 reproduces the gold argmax everywhere; larger values
    drive accuracy toward chance. Pairs between two time expressions get
    their noise scaled down by ``tt_noise_scale``, making them the most
    reliable predictions.
    """
    scheme = get_scheme(scheme)
    rng = np.random.default_rng(seed)
    out: list[Prediction] = []
    for doc in documents:
        kinds = doc.kinds()
        for s, t, label in doc.relations.triples():
            logits = np.zeros(scheme.size)
            logits[scheme.index(label)] = gain
            scale = noise_temperature
            if kinds[s] == TIME_EXPRESSION and kinds[t] == TIME_EXPRESSION:
                scale *= tt_noise_scale
            logits = logits + scale * rng.standard_normal(scheme.size)
            e = np.exp(logits - logits.max())
            out.append(
                Prediction.from_probs(
                    doc.id, s, t, kinds[s], kinds[t], e / e.sum(), scheme
                )
            )
    return out


def predictions_from_corpus(corpus: Corpus) -> list[Prediction]:
    """Build Prediction objects from a corpus's probability blocks."""
    out: list[Prediction] = []
    for doc in corpus.documents:
        if not doc.probabilities:
            continue
        kinds = doc.kinds()
        for (s, t), probs in doc.probabilities.items():
            out.append(
                Prediction.from_probs(doc.id, s, t, kinds[s], kinds[t], probs, corpus.scheme)
            )
    return out


# --- file format -----------------------------------------------------------

def _doc_to_json(doc: Document) -> dict:
    payload: dict = {
        "id": doc.id,
        "entities": [
            {
                "id": e.id,
                "kind": e.kind,
                "position": e.position,
                **({"timestamp": e.timestamp} if e.timestamp is not None else {}),
            }
            for e in doc.entities
        ],
        "relations": [
            {"src": s, "tgt": t, "label": l} for s, t, l in doc.relations.triples()
        ],
    }
    if doc.probabilities is not None:
        payload["probabilities"] = [
            {"src": s, "tgt": t, "probs": list(map(float, p))}
            for (s, t), p in doc.probabilities.items()
        ]
    return payload


def save_documents(corpus: Corpus, path: str | Path) -> None:
    payload = {
        "format": CORPUS_FORMAT,
        "version": CORPUS_VERSION,
        "scheme": corpus.scheme.name,
        "documents": [_doc_to_json(d) for d in corpus.documents],
    }
    text = json.dumps(payload, indent=2) + "\n"
    if str(path) == "-":
        import sys

        sys.stdout.write(text)
    else:
        Path(path).write_text(text)


def _require(mapping: dict, key: str, where: str):
    if key not in mapping:
        raise CorpusFormatError(f"{where}: missing required field {key!r}")
    return mapping[key]


def load_documents(path: str | Path) -> Corpus:
    """Parse a corpus file; raises CorpusFormatError with position context."""
    if str(path) == "-":
        import sys

        text = sys.stdin.read()
        where = "<stdin>"
    else:
        text = Path(path).read_text()
        where = str(path)
    try:
        payload = json.loads(text)
    except json.JSONDecodeError as e:
        raise CorpusFormatError(
            f"{where}: line {e.lineno}, column {e.colno}: {e.msg}"
        ) from None
    if not isinstance(payload, dict) or payload.get("format") != CORPUS_FORMAT:
        raise CorpusFormatError(f"{where}: not a {CORPUS_FORMAT} file")
    if payload.get("version") != CORPUS_VERSION:
        raise CorpusFormatError(
            f"{where}: unsupported corpus version {payload.get('version')!r}"
        )
    scheme = _require(payload, "scheme", where)
    try:
        scheme = get_scheme(scheme)
    except ValueError as e:
        raise CorpusFormatError(f"{where}: {e}") from None

    documents = []
    for dj in _require(payload, "documents", where):
        doc_id = _require(dj, "id", where)
        ctx = f"{where}: document {doc_id!r}"
        entities = []
        for ej in _require(dj, "entities", ctx):
            try:
                entities.append(
                    Entity(
                        id=_require(ej, "id", ctx),
                        kind=_require(ej, "kind", ctx),
                        position=int(_require(ej, "position", ctx)),
                        timestamp=ej.get("timestamp"),
                    )
                )
            except ValueError as e:
                raise CorpusFormatError(f"{ctx}: {e}") from None
        relations = RelationSet(doc_id=doc_id)
        for rj in _require(dj, "relations", ctx):
            label = _require(rj, "label", ctx)
            if label not in scheme:
                raise CorpusFormatError(
                    f"{ctx}: label {label!r} not in scheme {scheme.name!r}"
                )
            try:
                relations.add(_require(rj, "src", ctx), _require(rj, "tgt", ctx), label)
            except ValueError as e:
                raise CorpusFormatError(f"{ctx}: {e}") from None
        probabilities = None
        if "probabilities" in dj:
            probabilities = {}
            for pj in dj["probabilities"]:
                probs = np.asarray(_require(pj, "probs", ctx), dtype=float)
                if probs.shape != (scheme.size,):
                    raise CorpusFormatError(
                        f"{ctx}: probability vector of length {probs.size}, "
                        f"expected {scheme.size}"
                    )
                probabilities[(pj["src"], pj["tgt"])] = probs
        try:
            doc = Document(
                id=doc_id,
                entities=entities,
                relations=relations,
                probabilities=probabilities,
            )
        except ValueError as e:
            raise CorpusFormatError(f"{ctx}: {e}") from None
        if probabilities:
            known = {e.id for e in entities}
            for s, t in probabilities:
                if s not in known or t not in known:
                    raise CorpusFormatError(
                        f"{ctx}: probability block references unknown entity "
                        f"{s if s not in known else t!r}"
                    )
        documents.append(doc)
    return Corpus(scheme=scheme, documents=documents)


def save_predictions(
    corpus: Corpus, predictions: Sequence[Prediction], path: str | Path
) -> None:
    """Write predictions as a corpus whose relations are the predicted labels."""
    by_doc: dict[str, list[Prediction]] = {}
    for p in predictions:
        by_doc.setdefault(p.doc_id, []).append(p)
    docs = []
    for doc in corpus.documents:
        preds = by_doc.get(doc.id, [])
        relations = RelationSet(doc_id=doc.id)
        probabilities = {}
        for p in preds:
            relations.add(p.src, p.tgt, p.predicted)
            probabilities[(p.src, p.tgt)] = p.probs
        docs.append(
            Document(
                id=doc.id,
                entities=list(doc.entities),
                relations=relations,
                probabilities=probabilities,
            )
        )
    save_documents(Corpus(scheme=corpus.scheme, documents=docs), path)


def load_predictions(path: str | Path) -> tuple[Corpus, list[Prediction]]:
    corpus = load_documents(path)
    return corpus, predictions_from_corpus(corpus)
