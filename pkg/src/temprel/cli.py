"""Command-line pipeline: synth | train | infer | eval | closure | psl-loss.

Every command is deterministic given its seed flags; a full
synth -> train -> infer -> eval run is reproducible byte for byte.
Exit codes: 0 success, 1 usage error, 2 data/validation error.
"""
from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path

import numpy as np

from . import data as data_mod
from . import inference as inf_mod
from . import metrics as metrics_mod
from . import model as model_mod
from . import rules as rules_mod
from .rules import TripletInstance, default_rule_set, get_scheme

USAGE_ERROR = 1
DATA_ERROR = 2


class _Parser(argparse.ArgumentParser):
    def error(self, message):  # usage errors exit 1, not argparse's default 2
        self.print_usage(sys.stderr)
        self.exit(USAGE_ERROR, f"{self.prog}: error: {message}\n")


def _write_json(path: str, payload: dict) -> None:
    text = json.dumps(payload, indent=2) + "\n"
    if path == "-":
        sys.stdout.write(text)
    else:
        Path(path).write_text(text)


def _parse_lambdas(raw: str | None) -> list[float | None]:
    if raw is None:
        return [None]
    values = []
    for part in raw.split(","):
        values.append(float(part))
        if values[-1] < 0:
            raise ValueError(f"lambda must be nonnegative, got {part}")
    return values


# --- commands ---------------------------------------------------------------

def _cmd_synth(args) -> int:
    config = data_mod.SynthConfig(
        num_documents=args.docs,
        entities_min=args.entities_min,
        entities_max=args.entities_max,
        time_expression_fraction=args.tt_fraction,
        annotation_density=args.density,
        noise_temperature=args.noise_temperature,
        seed=args.seed,
    )
    docs = data_mod.synth_generate(config)
    data_mod.save_documents(
        data_mod.Corpus(scheme=get_scheme(args.scheme), documents=docs), args.out
    )
    return 0


def _train_once(corpus, lam, args):
    scheme = corpus.scheme
    docs = [d.copy() for d in corpus.documents]
    if args.augment:
        docs = rules_mod.augment_symmetry(docs, scheme)
    data_mod.featurize(docs)
    instances = rules_mod.pack_triplets(docs, scheme)
    config = model_mod.TrainConfig(
        lam=lam,
        learning_rate=args.lr,
        epochs=args.epochs,
        batch_size=args.batch_size,
        seed=args.seed,
        optimizer=args.optimizer,
        ground_on=args.ground_on,
    )
    return model_mod.train(instances, config, scheme=scheme)


def _predict_corpus(params, corpus) -> list[model_mod.Prediction]:
    scheme = corpus.scheme
    preds = []
    for doc in corpus.documents:
        data_mod.featurize([doc])
        kinds = doc.kinds()
        for s, t, _ in doc.relations.triples():
            probs = model_mod.predict_proba(params, doc.features[(s, t)])
            preds.append(
                model_mod.Prediction.from_probs(
                    doc.id, s, t, kinds[s], kinds[t], probs, scheme
                )
            )
    return preds


def _cmd_train(args) -> int:
    corpus = data_mod.load_documents(args.corpus)
    lambdas = _parse_lambdas(args.lam)
    sweep = len(lambdas) > 1
    test_corpus = (
        data_mod.load_documents(args.test_corpus) if args.test_corpus else None
    )
    for lam in lambdas:
        result = _train_once(corpus, lam, args)
        out = args.out
        loss_log = args.loss_log or f"{out}.loss.txt"
        if sweep:
            tag = f"lambda-{lam:g}"
            stem = args.out[: -len(".json")] if args.out.endswith(".json") else args.out
            out = f"{stem}.{tag}.json"
            loss_log = f"{out}.loss.txt"
        model_mod.save_params(result.params, out)
        Path(loss_log).write_text(
            "".join(f"{i}\t{loss!r}\n" for i, loss in enumerate(result.epoch_losses))
        )
        if test_corpus is not None:
            preds = _predict_corpus(result.params, test_corpus)
            pred_sets = _prediction_sets(test_corpus, preds)
            gold_sets = [d.relations for d in test_corpus.documents]
            report = metrics_mod.micro_f1(pred_sets, gold_sets)
            _write_json(
                f"{out}.report.json",
                {"lambda": lam, **report.to_dict()},
            )
    return 0


def _prediction_sets(corpus, predictions):
    by_doc = {}
    for p in predictions:
        by_doc.setdefault(p.doc_id, metrics_mod.RelationSet(doc_id=p.doc_id)).add(
            p.src, p.tgt, p.predicted
        )
    # Documents with no predicted pairs still need an (empty) entry.
    return [
        by_doc.get(d.id, metrics_mod.RelationSet(doc_id=d.id))
        for d in corpus.documents
    ]


def _cmd_infer(args) -> int:
    corpus = data_mod.load_documents(args.corpus)
    if (args.model is None) == (args.predictions is None):
        raise ValueError("provide exactly one of --model or --predictions")
    if args.model:
        params = model_mod.load_params(args.model)
        predictions = _predict_corpus(params, corpus)
    else:
        _, predictions = data_mod.load_predictions(args.predictions)

    kind = args.strategy.replace("-", "_")
    strategy = inf_mod.RankingStrategy(
        kind, seed=args.seed if kind == inf_mod.RANDOM else None
    )
    by_doc: dict[str, list] = {}
    for p in predictions:
        by_doc.setdefault(p.doc_id, []).append(p)

    out_docs = []
    drop_records = []
    for doc in corpus.documents:
        doc_preds = by_doc.get(doc.id, [])
        if doc_preds:
            outcome = inf_mod.global_infer(doc_preds, strategy)
            resolved = outcome.resolved_relations()
            drop_records.extend(r.to_dict() for r in outcome.drop_log)
        else:
            resolved = metrics_mod.RelationSet(doc_id=doc.id)
        out_docs.append(
            data_mod.Document(
                id=doc.id,
                entities=list(doc.entities),
                relations=resolved,
                probabilities={(p.src, p.tgt): p.probs for p in doc_preds},
            )
        )
    data_mod.save_documents(
        data_mod.Corpus(scheme=corpus.scheme, documents=out_docs), args.out
    )
    if args.drop_log:
        _write_json(args.drop_log, {"drops": drop_records})
    return 0


def _cmd_eval(args) -> int:
    pred_corpus = data_mod.load_documents(args.predictions)
    gold_corpus = data_mod.load_documents(args.gold)
    pred_sets = [d.relations for d in pred_corpus.documents]
    gold_sets = [d.relations for d in gold_corpus.documents]
    if args.metric == "tempeval":
        report = metrics_mod.tempeval_scores(pred_sets, gold_sets)
    else:
        kinds = {d.id: d.kinds() for d in gold_corpus.documents}
        report = metrics_mod.micro_f1(pred_sets, gold_sets, entity_kinds=kinds)
    sys.stdout.write(report.to_table())
    if args.report:
        _write_json(args.report, report.to_dict())
    return 0


def _cmd_closure(args) -> int:
    corpus = data_mod.load_documents(args.input)
    out_docs = []
    for doc in corpus.documents:
        closed = metrics_mod.temporal_closure(doc.relations)
        for s, t, kept, rejected in closed.contradictions:
            sys.stderr.write(
                f"contradiction in {doc.id}: ({s}, {t}) {kept} vs {rejected}\n"
            )
        out_docs.append(
            data_mod.Document(
                id=doc.id, entities=list(doc.entities), relations=closed
            )
        )
    data_mod.save_documents(
        data_mod.Corpus(scheme=corpus.scheme, documents=out_docs), args.out
    )
    return 0


def _distance_payload(probs, preds, scheme) -> dict:
    scheme = get_scheme(scheme)
    rules = default_rule_set(scheme)
    probs = np.asarray(probs, dtype=float)
    if preds is None:
        pred_labels = [scheme.labels[int(np.argmax(row))] for row in probs[:2]]
    else:
        pred_labels = [scheme.labels[i] for i in preds[:2]]
    instance = TripletInstance(
        pairs=(("A", "B"), ("B", "C"), ("A", "C")), grounded=True
    )
    res = rules_mod.distance_subgradient(instance, probs, pred_labels, rules, scheme)
    return {
        "distance": res.distance,
        "matched_rule": res.matched_rule,
        "subgradient": res.subgradient.tolist(),
    }


def _cmd_psl_loss(args) -> int:
    if (args.probs is None) == (args.batch is None):
        raise ValueError("provide exactly one of --probs or --batch")
    scheme = get_scheme(args.scheme)
    if args.probs is not None:
        rows = [
            [float(x) for x in row.split(",")] for row in args.probs.split(";")
        ]
        if len(rows) != 3:
            raise ValueError("--probs needs three ';'-separated rows")
        preds = None
        if args.preds:
            preds = [scheme.index(l.strip()) for l in args.preds.split(",")]
        _write_json("-", _distance_payload(rows, preds, scheme))
        return 0
    payload = json.loads(Path(args.batch).read_text())
    batch_scheme = get_scheme(payload.get("scheme", scheme.name))
    results = [
        _distance_payload(inst["probs"], inst.get("preds"), batch_scheme)
        for inst in payload["instances"]
    ]
    _write_json(
        "-",
        {
            "scheme": batch_scheme.name,
            "distances": [r["distance"] for r in results],
            "matched_rules": [r["matched_rule"] for r in results],
            "subgradients": [r["subgradient"] for r in results],
        },
    )
    return 0


# --- parser -----------------------------------------------------------------

def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="temprel", description=__doc__)
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("synth", help="generate a synthetic corpus")
    p.add_argument("--out", required=True, help="corpus file ('-' for stdout)")
    p.add_argument("--docs", type=int, default=20)
    p.add_argument("--entities-min", type=int, default=8)
    p.add_argument("--entities-max", type=int, default=14)
    p.add_argument("--tt-fraction", type=float, default=0.3)
    p.add_argument("--density", type=float, default=0.5)
    p.add_argument("--noise-temperature", type=float, default=1.0)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--scheme", default="clinical3", choices=["clinical3", "dense6"])
    p.set_defaults(func=_cmd_synth)

    p = sub.add_parser("train", help="fit the regularized classifier")
    p.add_argument("--corpus", required=True, help="training corpus ('-' for stdin)")
    p.add_argument("--out", required=True, help="model parameter file")
    p.add_argument(
        "--lambda",
        dest="lam",
        default=None,
        help="regularization weight; comma-separated values run a sweep "
        "(default: 5 for clinical3, 0.5 for dense6)",
    )
    p.add_argument("--lr", type=float, default=1e-2,
                   help="learning rate, tuned for the small linear model")
    p.add_argument("--epochs", type=int, default=10)
    p.add_argument("--batch-size", type=int, default=8, help="instances per batch")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--optimizer", default="adam", choices=["adam", "sgd"])
    p.add_argument("--ground-on", default="predicted", choices=["predicted", "gold"])
    p.add_argument("--no-augment", dest="augment", action="store_false",
                   help="skip symmetry augmentation of the training relations")
    p.add_argument("--loss-log", default=None, help="per-epoch loss file "
                   "(default: <out>.loss.txt)")
    p.add_argument("--test-corpus", default=None,
                   help="also evaluate each trained model on this corpus")
    p.set_defaults(func=_cmd_train, augment=True)

    p = sub.add_parser("infer", help="conflict-free global inference")
    p.add_argument("--corpus", required=True, help="corpus with entities and pairs")
    p.add_argument("--model", default=None, help="model parameter file")
    p.add_argument("--predictions", default=None,
                   help="prediction corpus with probability blocks")
    p.add_argument(
        "--strategy",
        default="confidence-time-anchor",
        choices=["random", "confidence", "confidence-time-anchor"],
    )
    p.add_argument("--seed", type=int, default=0, help="seed for --strategy random")
    p.add_argument("--out", required=True, help="resolved prediction corpus")
    p.add_argument("--drop-log", default=None, help="JSON log of dropped predictions")
    p.set_defaults(func=_cmd_infer)

    p = sub.add_parser("eval", help="score predictions against gold")
    p.add_argument("--predictions", required=True)
    p.add_argument("--gold", required=True)
    p.add_argument("--metric", default="tempeval", choices=["tempeval", "micro"])
    p.add_argument("--report", default=None, help="machine-readable report file")
    p.set_defaults(func=_cmd_eval)

    p = sub.add_parser("closure", help="temporal closure of a relation corpus")
    p.add_argument("--input", required=True)
    p.add_argument("--out", required=True)
    p.set_defaults(func=_cmd_closure)

    p = sub.add_parser(
        "psl-loss",
        help="rule-violation distance and subgradient for explicit probabilities",
    )
    p.add_argument("--scheme", default="clinical3", choices=["clinical3", "dense6"])
    p.add_argument(
        "--probs",
        default=None,
        help="three ';'-separated probability rows, e.g. "
        "'0.15,0.15,0.7;0.1,0.1,0.8;0.35,0.35,0.3'",
    )
    p.add_argument("--preds", default=None,
                   help="comma-separated matched labels for pairs 1,2 "
                   "(default: row argmaxes)")
    p.add_argument("--batch", default=None, help="JSON batch file")
    p.set_defaults(func=_cmd_psl_loss)
    return parser


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except (ValueError, KeyError, OSError) as e:
        sys.stderr.write(f"temprel: {e}\n")
        return DATA_ERROR


if __name__ == "__main__":
    sys.exit(main())
