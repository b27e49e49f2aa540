"""Acceptance suite: one test per criterion, one PASS/FAIL line each.

Run with ``pytest tests/test_acceptance.py -v -s`` to see the lines.
All seeds are fixed; every tolerance is stated inline.
"""
import math
import time

import numpy as np
from scipy import stats

from temprel import (
    CLINICAL3,
    DENSE6,
    RankingStrategy,
    SynthConfig,
    TrainConfig,
    TripletInstance,
    augment_symmetry,
    default_rule_set,
    featurize,
    global_infer,
    ground_and_distance,
    micro_f1,
    pack_triplets,
    predict_proba,
    simulate_classifier,
    synth_generate,
    tempeval_scores,
    total_loss,
    train,
)
from temprel.cli import main as cli_main
from temprel.metrics import RelationSet
from temprel.model import ClassifierParams
from temprel.timegraph import UNKNOWN, TimeGraph

from oracles import TRANS_DENSE, naive_closure, naive_distance

RULES3 = default_rule_set(CLINICAL3)


def report(name, passed, detail=""):
    line = f"[{'PASS' if passed else 'FAIL'}] {name}"
    if detail:
        line += f"  ({detail})"
    print(line)
    assert passed, line


def chain_instance():
    return TripletInstance(pairs=(("a", "b"), ("b", "c"), ("a", "c")), grounded=True)


def test_worked_distance_example():
    t0 = time.time()
    probs = np.array([[0.15, 0.15, 0.7], [0.1, 0.1, 0.8], [0.35, 0.35, 0.3]])
    res = ground_and_distance(chain_instance(), probs, ["Overlap", "Overlap"],
                              RULES3, CLINICAL3)
    ok = res.distance == 0.2 and res.matched_rule == "OOO"
    satisfied = np.array([[0.15, 0.15, 0.7], [0.1, 0.1, 0.8], [0.2, 0.3, 0.5]])
    res2 = ground_and_distance(chain_instance(), satisfied, ["Overlap", "Overlap"],
                               RULES3, CLINICAL3)
    ok = ok and res2.distance == 0.0
    elapsed = time.time() - t0
    report("worked distance example: 0.2 exactly, 0 when satisfied",
           ok and elapsed < 1.0, f"distance={res.distance}, {elapsed:.3f}s")


def test_grid_oracle_10k_per_scheme():
    t0 = time.time()
    rng = np.random.default_rng(2024)
    mismatches = 0
    for scheme, rules, table in (
        (CLINICAL3, RULES3, None),
        (DENSE6, default_rule_set(DENSE6), TRANS_DENSE),
    ):
        inst = chain_instance()
        for _ in range(10_000):
            probs = rng.dirichlet(np.ones(scheme.size), size=3)
            preds = [scheme.labels[int(np.argmax(probs[i]))] for i in range(2)]
            got = ground_and_distance(inst, probs, preds, rules, scheme)
            kwargs = {"table": table} if table is not None else {}
            expected, matched = naive_distance(
                probs[0, scheme.index(preds[0])],
                probs[1, scheme.index(preds[1])],
                list(probs[2]), preds[0], preds[1], list(scheme.labels), **kwargs,
            )
            if got.distance != expected or (got.matched_rule is not None) != matched:
                mismatches += 1
    elapsed = time.time() - t0
    report("grid oracle: 10,000 random triples per scheme, exact match",
           mismatches == 0 and elapsed < 10.0,
           f"mismatches={mismatches}, {elapsed:.1f}s")


def _numeric_gradient(inst, params, lam, h=1e-5):
    def at(w, b):
        return total_loss(inst, ClassifierParams(params.scheme, w, b), lam, RULES3)[0]

    gw = np.zeros_like(params.weights)
    gb = np.zeros_like(params.bias)
    for idx in np.ndindex(*params.weights.shape):
        up, dn = params.weights.copy(), params.weights.copy()
        up[idx] += h
        dn[idx] -= h
        gw[idx] = (at(up, params.bias) - at(dn, params.bias)) / (2 * h)
    for i in range(params.bias.size):
        up, dn = params.bias.copy(), params.bias.copy()
        up[i] += h
        dn[i] -= h
        gb[i] = (at(params.weights, up) - at(params.weights, dn)) / (2 * h)
    return gw, gb


def _away_from_kinks(inst, params, margin=1e-3):
    probs = predict_proba(params, inst.features)
    for row in probs:
        top = np.sort(row)[::-1]
        if top[0] - top[1] < margin:
            return False
    preds = [CLINICAL3.labels[int(np.argmax(probs[i]))] for i in range(2)]
    heads = {r.body: r.head for r in RULES3 if r.kind == "transitivity"}
    head = heads.get(tuple(preds))
    if head is None:
        return True
    p1 = probs[0, CLINICAL3.index(preds[0])]
    p2 = probs[1, CLINICAL3.index(preds[1])]
    p3 = probs[2, CLINICAL3.index(head)]
    inner = p1 + p2 - 1.0
    if abs(inner) < margin:
        return False
    return not (inner > 0 and abs(inner - p3) < margin)


def test_gradient_suite_200_models():
    t0 = time.time()
    rng = np.random.default_rng(77)
    checked = failures = 0
    while checked < 200:
        dim = int(rng.integers(2, 9))
        lam = float(rng.choice([0.0, 0.5, 1.0, 5.0]))
        params = ClassifierParams(
            "clinical3", rng.standard_normal((3, dim)), rng.standard_normal(3)
        )
        gold = tuple(CLINICAL3.labels[i] for i in rng.integers(0, 3, 3))
        inst = TripletInstance(
            pairs=(("a", "b"), ("b", "c"), ("a", "c")), gold=gold, grounded=True,
            features=rng.standard_normal((3, dim)),
        )
        if not _away_from_kinks(inst, params):
            continue
        _, gw, gb = total_loss(inst, params, lam, RULES3)
        ngw, ngb = _numeric_gradient(inst, params, lam)
        if not (np.allclose(gw, ngw, atol=1e-4) and np.allclose(gb, ngb, atol=1e-4)):
            failures += 1
        checked += 1
    elapsed = time.time() - t0
    report("gradient suite: 200 random models match finite differences @1e-4",
           failures == 0 and elapsed < 30.0,
           f"failures={failures}/200, {elapsed:.1f}s")


def _random_consistent(rng, max_nodes=12):
    n = int(rng.integers(3, max_nodes + 1))
    n_moments = int(rng.integers(2, n + 1))
    moment = rng.integers(0, n_moments, n)
    triples = []
    for i in range(n):
        for j in range(i + 1, n):
            if rng.random() > 0.6:
                continue
            a, b = (i, j) if rng.random() < 0.5 else (j, i)
            if moment[a] < moment[b]:
                label = "Before"
            elif moment[a] > moment[b]:
                label = "After"
            else:
                label = "Overlap"
            triples.append((f"n{a}", f"n{b}", label))
    return triples


def _insert(graph, s, t, label):
    if label == "Before":
        return graph.add_before(s, t)
    if label == "After":
        return graph.add_before(t, s)
    return graph.add_overlap(s, t)


def test_closure_timegraph_oracle_1000_sets():
    t0 = time.time()
    rng = np.random.default_rng(404)
    mismatches = 0
    for _ in range(1000):
        triples = _random_consistent(rng)
        graph = TimeGraph()
        accepted = [t for t in triples if _insert(graph, *t)]
        labels, contradictory = naive_closure(accepted)
        assert not contradictory
        entities = sorted({x for s, t, _ in triples for x in (s, t)})
        for a in entities:
            for b in entities:
                if a == b:
                    continue
                derived = labels.get((a, b), set())
                got = graph.query(a, b)
                want = next(iter(derived)) if derived else UNKNOWN
                if got != want:
                    mismatches += 1
    elapsed = time.time() - t0
    report("closure/timegraph oracle: 1000 random sets, every pair exact",
           mismatches == 0 and elapsed < 60.0,
           f"mismatches={mismatches}, {elapsed:.1f}s")


def test_conflict_free_guarantee_1000_documents():
    t0 = time.time()
    violations = 0
    for seed in range(1000):
        docs = synth_generate(SynthConfig(
            num_documents=1, entities_min=6, entities_max=10, seed=9000 + seed,
        ))
        preds = simulate_classifier(docs, 2.5, seed=20_000 + seed)
        for strategy in (
            RankingStrategy.random(seed),
            RankingStrategy.confidence(),
            RankingStrategy.confidence_time_anchor(),
        ):
            outcome = global_infer(preds, strategy)
            triples = [(p.src, p.tgt, p.predicted) for p in outcome.accepted]
            _, contradictory = naive_closure(triples)
            if contradictory:
                violations += 1
    elapsed = time.time() - t0
    report("conflict-free guarantee: 1000 noisy documents x 3 strategies",
           violations == 0 and elapsed < 120.0,
           f"violations={violations}, {elapsed:.1f}s")


def _strategy_f1(docs, preds_by_doc, strategy):
    pred_sets, gold_sets = [], []
    for doc in docs:
        preds = preds_by_doc.get(doc.id, [])
        if strategy is None:
            rs = RelationSet(doc_id=doc.id)
            for p in preds:
                rs.add(p.src, p.tgt, p.predicted)
        else:
            rs = global_infer(preds, strategy).resolved_relations()
            rs.doc_id = doc.id
        pred_sets.append(rs)
        gold_sets.append(doc.relations)
    return tempeval_scores(pred_sets, gold_sets).f1


def _sign_test_p(wins, n):
    """One-sided exact sign test: P(X >= wins) for X ~ Binomial(n, 1/2)."""
    return sum(math.comb(n, k) for k in range(wins, n + 1)) / 2.0**n


def test_strategy_ordering_trend_20_corpora():
    t0 = time.time()
    raw, rand, conf, anchor = [], [], [], []
    for k in range(20):
        docs = synth_generate(SynthConfig(
            num_documents=12, seed=1000 + k,
            time_expression_fraction=0.35, annotation_density=0.5,
        ))
        preds = simulate_classifier(docs, 2.5, seed=2000 + k)
        by_doc = {}
        for p in preds:
            by_doc.setdefault(p.doc_id, []).append(p)
        raw.append(_strategy_f1(docs, by_doc, None))
        rand.append(_strategy_f1(docs, by_doc, RankingStrategy.random(k)))
        conf.append(_strategy_f1(docs, by_doc, RankingStrategy.confidence()))
        anchor.append(_strategy_f1(docs, by_doc, RankingStrategy.confidence_time_anchor()))
    raw, rand, conf, anchor = map(np.array, (raw, rand, conf, anchor))
    wins = int(np.sum(anchor > rand))
    ties = int(np.sum(anchor == rand))
    p_value = _sign_test_p(wins, 20 - ties)
    ordered = anchor.mean() >= conf.mean() >= rand.mean()
    elapsed = time.time() - t0
    report(
        "strategy ordering: anchor >= confidence >= random, anchor>random at 95%",
        ordered and p_value < 0.05 and abs(raw.mean() - 0.8) < 0.05
        and elapsed < 300.0,
        f"baseline={raw.mean():.3f} rand={rand.mean():.3f} conf={conf.mean():.3f} "
        f"anchor={anchor.mean():.3f} wins={wins}/20 p={p_value:.2g} {elapsed:.0f}s",
    )


def _heldout_micro_f1(params, docs):
    correct = total = 0
    for d in docs:
        for s, t, l in d.relations.triples():
            probs = predict_proba(params, d.features[(s, t)])
            correct += CLINICAL3.labels[int(np.argmax(probs))] == l
            total += 1
    return correct / total


def _heldout_mean_distance(params, instances):
    ds = []
    for inst in instances:
        if not inst.grounded:
            continue
        probs = predict_proba(params, inst.features)
        preds = [CLINICAL3.labels[int(np.argmax(probs[i]))] for i in range(2)]
        ds.append(ground_and_distance(inst, probs, preds, RULES3, CLINICAL3).distance)
    return float(np.mean(ds))


def test_regularization_benefit_trend():
    t0 = time.time()
    gen = dict(time_expression_fraction=0.35, annotation_density=0.35,
               narrative_jitter=12.0)
    f1 = {0.0: [], 5.0: []}
    dist = {0.0: [], 5.0: []}
    for seed in range(20):
        train_docs = synth_generate(SynthConfig(num_documents=4, seed=seed, **gen))
        test_docs = synth_generate(SynthConfig(num_documents=100, seed=seed + 5000, **gen))
        train_docs = augment_symmetry(train_docs, CLINICAL3)
        featurize(train_docs)
        featurize(test_docs)
        train_inst = pack_triplets(train_docs, CLINICAL3)
        test_inst = pack_triplets(test_docs, CLINICAL3)
        for lam in (0.0, 5.0):
            config = TrainConfig(lam=lam, learning_rate=0.02, epochs=25, seed=seed)
            result = train(train_inst, config, scheme=CLINICAL3)
            f1[lam].append(_heldout_micro_f1(result.params, test_docs))
            dist[lam].append(_heldout_mean_distance(result.params, test_inst))
    diff = np.array(f1[5.0]) - np.array(f1[0.0])
    # one-sided paired t-test that the regularized model is at least as good
    t_res = stats.ttest_rel(f1[5.0], f1[0.0], alternative="greater")
    mean_d0, mean_d5 = np.mean(dist[0.0]), np.mean(dist[5.0])
    elapsed = time.time() - t0
    report(
        "regularization benefit: heldout micro-F1 >= baseline at 95%, "
        "strictly lower rule distance",
        t_res.pvalue < 0.05 and diff.mean() > 0 and mean_d5 < mean_d0
        and elapsed < 600.0,
        f"f1 {np.mean(f1[0.0]):.4f}->{np.mean(f1[5.0]):.4f} p={t_res.pvalue:.3g} "
        f"dist {mean_d0:.4f}->{mean_d5:.4f} {elapsed:.0f}s",
    )


def test_micro_metric_identity():
    rng = np.random.default_rng(55)
    labels = CLINICAL3.labels
    ok = True
    for trial in range(200):
        n = int(rng.integers(1, 30))
        gold = RelationSet("d")
        preds = RelationSet("d")
        for i in range(n):
            s, t = f"a{i}", f"b{i}"
            gold.add(s, t, labels[int(rng.integers(3))])
            preds.add(s, t, labels[int(rng.integers(3))])
        rep = micro_f1(preds, gold)
        ok = ok and rep.precision == rep.recall == rep.f1
    report("micro-metric identity: P = R = F1 under full pair coverage", ok,
           "200 random prediction/gold sets")


def test_pipeline_determinism(tmp_path):
    outputs = []
    for run_dir in ("a", "b"):
        base = tmp_path / run_dir
        base.mkdir()
        files = {
            "corpus": base / "corpus.json",
            "test": base / "test.json",
            "model": base / "model.json",
            "resolved": base / "resolved.json",
            "report": base / "report.json",
        }
        assert cli_main(["synth", "--out", str(files["corpus"]), "--docs", "8",
                         "--seed", "31"]) == 0
        assert cli_main(["synth", "--out", str(files["test"]), "--docs", "4",
                         "--seed", "32"]) == 0
        assert cli_main(["train", "--corpus", str(files["corpus"]), "--out",
                         str(files["model"]), "--lambda", "5", "--epochs", "6",
                         "--seed", "31"]) == 0
        assert cli_main(["infer", "--corpus", str(files["test"]), "--model",
                         str(files["model"]), "--strategy", "confidence-time-anchor",
                         "--out", str(files["resolved"])]) == 0
        assert cli_main(["eval", "--predictions", str(files["resolved"]), "--gold",
                         str(files["test"]), "--metric", "tempeval", "--report",
                         str(files["report"])]) == 0
        outputs.append({p.name: p.read_bytes() for p in sorted(base.iterdir())})
    identical = outputs[0] == outputs[1]
    report("determinism: synth->train->infer->eval byte-identical across runs",
           identical, f"{len(outputs[0])} files compared")
