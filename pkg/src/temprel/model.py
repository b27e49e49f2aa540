"""Linear softmax relation classifier with soft-logic regularization.

The classifier is a single affine map plus softmax over explicit feature
vectors. The training objective is per-instance cross-entropy plus a
weighted rule-violation distance; both terms backpropagate through the
softmax, the latter via the grounding subgradient.

Training is single-threaded and bitwise deterministic per seed.
"""
from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path
from typing import Sequence

import numpy as np
from sklearn.base import BaseEstimator, ClassifierMixin
from sklearn.utils.validation import check_array, check_is_fitted

from .rules import (
    CLINICAL3,
    LabelScheme,
    PslRule,
    TripletInstance,
    default_rule_set,
    distance_subgradient,
    get_scheme,
)
from .validation import check_probability_vector

MODEL_FORMAT = "temprel-model"
MODEL_VERSION = 1

# Probabilities below this are clamped before the log in the cross-entropy.
_LOG_FLOOR = 1e-12

DEFAULT_LAMBDA = {"clinical3": 5.0, "dense6": 0.5}


class TrainingDivergedError(RuntimeError):
    pass


@dataclass(frozen=True, eq=False)
class ClassifierParams:
    """Affine classifier parameters: one weight row and bias per label."""

    scheme: str
    weights: np.ndarray  # (n_labels, dim)
    bias: np.ndarray  # (n_labels,)

    def __post_init__(self) -> None:
        scheme = get_scheme(self.scheme)
        w = np.asarray(self.weights, dtype=float)
        b = np.asarray(self.bias, dtype=float)
        if w.ndim != 2 or w.shape[0] != scheme.size or b.shape != (scheme.size,):
            raise ValueError(
                f"parameter shapes {w.shape}/{b.shape} inconsistent with "
                f"{scheme.size}-label scheme {scheme.name!r}"
            )
        object.__setattr__(self, "weights", w)
        object.__setattr__(self, "bias", b)

    @property
    def dim(self) -> int:
        return self.weights.shape[1]


def save_params(params: ClassifierParams, path: str | Path) -> None:
    payload = {
        "format": MODEL_FORMAT,
        "version": MODEL_VERSION,
        "scheme": params.scheme,
        "dim": params.dim,
        "weights": params.weights.tolist(),
        "bias": params.bias.tolist(),
    }
    Path(path).write_text(json.dumps(payload, indent=2) + "\n")


def load_params(path: str | Path) -> ClassifierParams:
    payload = json.loads(Path(path).read_text())
    if payload.get("format") != MODEL_FORMAT:
        raise ValueError(f"{path}: not a {MODEL_FORMAT} file")
    if payload.get("version") != MODEL_VERSION:
        raise ValueError(f"{path}: unsupported version {payload.get('version')}")
    params = ClassifierParams(
        scheme=payload["scheme"],
        weights=np.array(payload["weights"], dtype=float),
        bias=np.array(payload["bias"], dtype=float),
    )
    if params.dim != payload["dim"]:
        raise ValueError(
            f"{path}: declared dim {payload['dim']} != weight columns {params.dim}"
        )
    return params


@dataclass(frozen=True, eq=False)
class Prediction:
    """One classified entity pair with its full label distribution."""

    doc_id: str
    src: str
    tgt: str
    src_kind: str
    tgt_kind: str
    probs: np.ndarray
    predicted: str
    confidence: float

    @classmethod
    def from_probs(
        cls,
        doc_id: str,
        src: str,
        tgt: str,
        src_kind: str,
        tgt_kind: str,
        probs,
        scheme: LabelScheme | str = CLINICAL3,
    ) -> "Prediction":
        scheme = get_scheme(scheme)
        probs = check_probability_vector(probs, scheme.size)
        top = int(np.argmax(probs))
        return cls(
            doc_id=doc_id,
            src=src,
            tgt=tgt,
            src_kind=src_kind,
            tgt_kind=tgt_kind,
            probs=probs,
            predicted=scheme.labels[top],
            confidence=float(probs[top]),
        )

    @property
    def is_tt(self) -> bool:
        return self.src_kind == "TimeExpression" and self.tgt_kind == "TimeExpression"

    @property
    def pair(self) -> tuple[str, str]:
        return (self.src, self.tgt)


# --- numeric core ------------------------------------------------------------

def softmax(logits: np.ndarray) -> np.ndarray:
    """Shift-invariant softmax along the last axis."""
    z = np.asarray(logits, dtype=float)
    z = z - z.max(axis=-1, keepdims=True)
    e = np.exp(z)
    return e / e.sum(axis=-1, keepdims=True)


def predict_proba(params: ClassifierParams, features) -> np.ndarray:
    """Per-label probabilities for one feature vector or a stack of them."""
    v = np.asarray(features, dtype=float)
    if v.shape[-1] != params.dim:
        raise ValueError(
            f"feature dim {v.shape[-1]} does not match model dim {params.dim}"
        )
    return softmax(v @ params.weights.T + params.bias)


def cross_entropy(
    instance_probs: np.ndarray,
    gold: Sequence[str | None],
    scheme: LabelScheme | str = CLINICAL3,
) -> float:
    """Summed negative log-likelihood over an instance's annotated slots.

    Slots with no gold label (filler padding) contribute nothing.
    """
    scheme = get_scheme(scheme)
    probs = np.asarray(instance_probs, dtype=float)
    loss = 0.0
    for i, label in enumerate(gold):
        if label is None:
            continue
        loss -= float(np.log(max(probs[i, scheme.index(label)], _LOG_FLOOR)))
    return loss


def total_loss(
    instance: TripletInstance,
    params: ClassifierParams,
    lam: float,
    rules: Sequence[PslRule],
    ground_on: str = "predicted",
) -> tuple[float, np.ndarray, np.ndarray]:
    """Joint loss for one instance and its gradient over the parameters.

    Returns ``(loss, grad_weights, grad_bias)`` where
    ``loss = cross_entropy + lam * rule_distance``. The rule term matches
    rule bodies against the argmax labels of pairs 1 and 2 by default, or
    against the gold labels with ``ground_on="gold"``.
    """
    if lam < 0:
        raise ValueError(f"regularization weight must be nonnegative, got {lam}")
    if instance.features is None:
        raise ValueError("instance carries no features")
    scheme = get_scheme(params.scheme)
    feats = instance.features
    gold = instance.gold if instance.gold is not None else (None, None, None)
    logits = feats @ params.weights.T + params.bias
    probs = softmax(logits)

    dlogits = np.zeros_like(probs)
    loss = 0.0
    active = instance.active_slots()
    for i in active:
        label = gold[i]
        gi = scheme.index(label)
        loss -= float(np.log(max(probs[i, gi], _LOG_FLOOR)))
        dlogits[i] += probs[i]
        dlogits[i, gi] -= 1.0

    if lam > 0.0 and instance.grounded and len(active) == 3:
        if ground_on == "gold":
            gate = [gold[0], gold[1]]
        elif ground_on == "predicted":
            gate = [scheme.labels[int(np.argmax(probs[i]))] for i in (0, 1)]
        else:
            raise ValueError(f"unknown grounding gate {ground_on!r}")
        res = distance_subgradient(instance, probs, gate, rules, scheme)
        loss += lam * res.distance
        dprobs = lam * res.subgradient
        # Backprop through the softmax rows: dz_k = p_k (g_k - sum_j g_j p_j).
        inner = (dprobs * probs).sum(axis=1, keepdims=True)
        dlogits += probs * (dprobs - inner)

    grad_w = dlogits.T @ feats
    grad_b = dlogits.sum(axis=0)
    return loss, grad_w, grad_b


@dataclass(frozen=True)
class TrainConfig:
    """Hyperparameters for the minibatch trainer.

    ``lam`` is the rule-regularization weight; ``None`` picks the scheme
    default (5.0 for the three-label scheme, 0.5 for the six-label one).
    ``lam = 0`` recovers plain multinomial logistic regression. A batch
    holds ``batch_size`` instances, i.e. three times as many pairs.
    """

    lam: float | None = None
    learning_rate: float = 1e-2
    epochs: int = 10
    batch_size: int = 8
    seed: int = 0
    optimizer: str = "adam"
    ground_on: str = "predicted"

    def __post_init__(self) -> None:
        if self.lam is not None and self.lam < 0:
            raise ValueError("lam must be nonnegative")
        if self.learning_rate <= 0:
            raise ValueError("learning_rate must be positive")
        if self.epochs <= 0 or self.batch_size <= 0:
            raise ValueError("epochs and batch_size must be positive")
        if self.optimizer not in ("adam", "sgd"):
            raise ValueError(f"unknown optimizer {self.optimizer!r}")
        if self.ground_on not in ("predicted", "gold"):
            raise ValueError(f"unknown grounding gate {self.ground_on!r}")


@dataclass
class TrainResult:
    params: ClassifierParams
    epoch_losses: list[float] = field(default_factory=list)


class _Adam:
    def __init__(self, shape, lr, b1=0.9, b2=0.999, eps=1e-8):
        self.lr, self.b1, self.b2, self.eps = lr, b1, b2, eps
        self.m = np.zeros(shape)
        self.v = np.zeros(shape)
        self.t = 0

    def step(self, param: np.ndarray, grad: np.ndarray) -> np.ndarray:
        self.t += 1
        self.m = self.b1 * self.m + (1 - self.b1) * grad
        self.v = self.b2 * self.v + (1 - self.b2) * grad * grad
        mhat = self.m / (1 - self.b1**self.t)
        vhat = self.v / (1 - self.b2**self.t)
        return param - self.lr * mhat / (np.sqrt(vhat) + self.eps)


def train(
    dataset: Sequence[TripletInstance],
    config: TrainConfig,
    scheme: LabelScheme | str = CLINICAL3,
    rules: Sequence[PslRule] | None = None,
) -> TrainResult:
    """Fit classifier parameters by minibatch gradient descent.

    Deterministic given the config seed: parameters start at zero and the
    only randomness is the seeded epoch shuffle. Records the mean training
    loss of every epoch. Raises ``TrainingDivergedError`` on a non-finite
    loss.
    """
    scheme = get_scheme(scheme)
    if rules is None:
        rules = default_rule_set(scheme)
    dataset = [inst for inst in dataset if inst.active_slots()]
    if not dataset:
        raise ValueError("empty training dataset")
    dims = {inst.features.shape[1] for inst in dataset if inst.features is not None}
    if len(dims) != 1 or any(inst.features is None for inst in dataset):
        raise ValueError(f"inconsistent or missing feature dims: {dims}")
    dim = dims.pop()
    lam = DEFAULT_LAMBDA[scheme.name] if config.lam is None else config.lam

    rng = np.random.default_rng(config.seed)
    weights = np.zeros((scheme.size, dim))
    bias = np.zeros(scheme.size)
    opt_w = _Adam(weights.shape, config.learning_rate) if config.optimizer == "adam" else None
    opt_b = _Adam(bias.shape, config.learning_rate) if config.optimizer == "adam" else None

    epoch_losses: list[float] = []
    n = len(dataset)
    for epoch in range(config.epochs):
        order = rng.permutation(n)
        running = 0.0
        params = ClassifierParams(scheme.name, weights, bias)
        for start in range(0, n, config.batch_size):
            batch = [dataset[i] for i in order[start : start + config.batch_size]]
            gw = np.zeros_like(weights)
            gb = np.zeros_like(bias)
            batch_loss = 0.0
            for inst in batch:
                loss, giw, gib = total_loss(
                    inst, params, lam, rules, ground_on=config.ground_on
                )
                batch_loss += loss
                gw += giw
                gb += gib
            k = len(batch)
            batch_loss /= k
            gw /= k
            gb /= k
            if not np.isfinite(batch_loss):
                raise TrainingDivergedError(
                    f"non-finite loss {batch_loss!r} in epoch {epoch}"
                )
            if config.optimizer == "adam":
                weights = opt_w.step(weights, gw)
                bias = opt_b.step(bias, gb)
            else:
                weights = weights - config.learning_rate * gw
                bias = bias - config.learning_rate * gb
            params = ClassifierParams(scheme.name, weights, bias)
            running += batch_loss * k
        epoch_losses.append(running / n)
    return TrainResult(ClassifierParams(scheme.name, weights, bias), epoch_losses)


# --- sklearn-style wrapper ---------------------------------------------------

class PslRegularizedClassifier(BaseEstimator, ClassifierMixin):
    """Softmax pair classifier trained with rule-violation regularization.

    Rows of ``X`` are per-pair feature vectors and ``y`` their relation
    labels. ``triplets`` passed to :meth:`fit` is a sequence of
    ``(i, j, k)`` row-index triples marking chains (A,B),(B,C),(A,C);
    rows appearing in no triple are trained on cross-entropy alone.

    With ``lam=0`` this is exactly multinomial logistic regression.
    """

    def __init__(
        self,
        scheme: str = "clinical3",
        lam: float | None = None,
        learning_rate: float = 1e-2,
        epochs: int = 10,
        batch_size: int = 8,
        seed: int = 0,
        optimizer: str = "adam",
        ground_on: str = "predicted",
    ):
        self.scheme = scheme
        self.lam = lam
        self.learning_rate = learning_rate
        self.epochs = epochs
        self.batch_size = batch_size
        self.seed = seed
        self.optimizer = optimizer
        self.ground_on = ground_on

    def _labels(self, y, scheme: LabelScheme) -> list[str]:
        out = []
        for value in y:
            if isinstance(value, (int, np.integer)):
                out.append(scheme.labels[int(value)])
            else:
                out.append(scheme.validate(str(value)))
        return out

    def fit(self, X, y, triplets: Sequence[tuple[int, int, int]] | None = None):
        scheme = get_scheme(self.scheme)
        X = check_array(X, dtype=float)
        labels = self._labels(y, scheme)
        if len(labels) != X.shape[0]:
            raise ValueError("X and y length mismatch")
        rules = default_rule_set(scheme)
        bodies = {r.body for r in rules if r.kind == "transitivity"}

        instances: list[TripletInstance] = []
        covered: set[int] = set()
        for t, (i, j, k) in enumerate(triplets or ()):
            pairs = ((f"t{t}a", f"t{t}b"), (f"t{t}b", f"t{t}c"), (f"t{t}a", f"t{t}c"))
            gold = (labels[i], labels[j], labels[k])
            instances.append(
                TripletInstance(
                    pairs=pairs,
                    gold=gold,
                    grounded=(gold[0], gold[1]) in bodies,
                    features=X[[i, j, k]],
                )
            )
            covered.update((i, j, k))
        rest = [i for i in range(X.shape[0]) if i not in covered]
        for start in range(0, len(rest), 3):
            chunk = rest[start : start + 3]
            pairs = tuple((f"f{i}a", f"f{i}b") for i in chunk) + (None,) * (3 - len(chunk))
            gold = tuple(labels[i] for i in chunk) + (None,) * (3 - len(chunk))
            feats = np.zeros((3, X.shape[1]))
            feats[: len(chunk)] = X[chunk]
            instances.append(
                TripletInstance(pairs=pairs, gold=gold, grounded=False, features=feats)
            )

        config = TrainConfig(
            lam=self.lam,
            learning_rate=self.learning_rate,
            epochs=self.epochs,
            batch_size=self.batch_size,
            seed=self.seed,
            optimizer=self.optimizer,
            ground_on=self.ground_on,
        )
        result = train(instances, config, scheme=scheme, rules=rules)
        self.params_ = result.params
        self.loss_curve_ = result.epoch_losses
        self.classes_ = np.array(scheme.labels)
        self.n_features_in_ = X.shape[1]
        return self

    def predict_proba(self, X) -> np.ndarray:
        check_is_fitted(self, "params_")
        X = check_array(X, dtype=float)
        return predict_proba(self.params_, X)

    def predict(self, X) -> np.ndarray:
        proba = self.predict_proba(X)
        return self.classes_[np.argmax(proba, axis=1)]
