"""Temporal relation learning with soft-logic regularization.

Lukasiewicz-logic transitivity rules as a differentiable training
regularizer, conflict-free document-level inference over a time graph, and
closure-based evaluation, plus a synthetic-timeline harness to exercise it
all end to end.
"""

from .logic import TruthValue, t_and, t_not, t_or
from .rules import (
    AFTER,
    BEFORE,
    CLINICAL3,
    DENSE6,
    OVERLAP,
    SIMULTANEOUS,
    LabelScheme,
    PslRule,
    TripletInstance,
    augment_symmetry,
    default_rule_set,
    distance_subgradient,
    get_scheme,
    ground_and_distance,
    pack_triplets,
)
from .timegraph import UNKNOWN, TimeGraph
from .metrics import EvalReport, RelationSet, micro_f1, temporal_closure, tempeval_scores
from .model import (
    ClassifierParams,
    Prediction,
    PslRegularizedClassifier,
    TrainConfig,
    cross_entropy,
    load_params,
    predict_proba,
    save_params,
    total_loss,
    train,
)
from .inference import (
    InferenceOutcome,
    RankingStrategy,
    check_and_add,
    global_infer,
    rank,
)
from .data import (
    Corpus,
    Document,
    Entity,
    SynthConfig,
    featurize,
    load_documents,
    load_predictions,
    save_documents,
    save_predictions,
    simulate_classifier,
    synth_generate,
)

__version__ = "0.1.0"
