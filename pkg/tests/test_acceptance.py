"""End-to-end acceptance suite.

Each test covers one release gate and prints a single PASS line with the
measured figure so a suite run doubles as a release report.
"""

import json
import random
import string
import time

import numpy as np
import pytest
from click.testing import CliRunner

from conceptlink.cli import cli
from conceptlink.embedding import compute_context
from conceptlink.engine import ModelBundle, mention_record, text_hash
from conceptlink.evaluation import GoldCorpus, GoldDocument, learning_curve, score
from conceptlink.linker import LinkerConfig, detect_candidates
from conceptlink.meta import MetaTask, init_model, loss_and_grads, train_meta
from conceptlink.service import create_app
from conceptlink.store import NAME_SEP, Vocabulary, build_cdb, build_vcb
from conceptlink.synthetic import (
    build_ambiguity_experiment,
    build_negation_corpus,
    build_throughput_corpus,
)
from conceptlink.textpipe import Pipeline, spell_correct, tokenize
from conceptlink.trainer import (
    NegativeSampler,
    positive_update,
    self_supervised_train,
)

from test_linker import brute_force_matches, mention_set
from test_meta import NEG_TASK, corpus_to_examples
from test_textpipe import oracle_spell


def report(line):
    print(f"\n{line}", flush=True)


def test_ac1_matcher_oracle_equivalence():
    words = ["red", "blue", "green", "pain", "acute", "left", "renal", "mass"]
    fillers = words + ["and", "of", "x7", "zz", "qq"]
    rng = random.Random(42)
    pipeline = Pipeline()
    config = LinkerConfig(allow_token_reorder=False)
    t0 = time.monotonic()
    for case in range(1000):
        n_concepts = rng.randrange(1, 101)
        rows = []
        for i in range(n_concepts):
            name = " ".join(
                rng.choice(words) for _ in range(rng.randrange(1, 5))
            )
            rows.append((f"C{i}", name))
        cdb = build_cdb(rows, pipeline)
        doc = pipeline(
            " ".join(rng.choice(fillers) for _ in range(rng.randrange(0, 51)))
        )
        got = mention_set(detect_candidates(doc, cdb, config))
        expected = brute_force_matches(doc, cdb, config.max_window_tokens)
        assert got == expected, f"mismatch on case {case}"
    elapsed = time.monotonic() - t0
    assert elapsed < 60
    report(f"AC-1 PASS: 1000/1000 random matcher instances equal the "
           f"all-window oracle ({elapsed:.1f}s)")


def test_ac2_disambiguation_learning_curve():
    t0 = time.monotonic()
    exp = build_ambiguity_experiment()
    n_mentions = sum(len(d.gold_mentions) for d in exp.gold.documents)
    assert n_mentions >= 174
    results = learning_curve(build_ambiguity_experiment, sizes=(1, 5, 10, 30), seed=0)
    sizes = sorted(results)
    for a, b in zip(sizes, sizes[1:]):
        assert results[b] >= results[a] - 0.05, (
            f"F1 dropped from {results[a]:.3f} (n={a}) to {results[b]:.3f} (n={b})"
        )
    assert results[30] >= 0.85
    elapsed = time.monotonic() - t0
    assert elapsed < 300
    curve = ", ".join(f"n={s}: {results[s]:.3f}" for s in sizes)
    report(f"AC-2 PASS: learning curve non-decreasing ({curve}; "
           f"{n_mentions} test mentions, {elapsed:.1f}s)")


def test_ac3_update_rules_and_sampler():
    from conceptlink.store import ConceptRecord

    # first positive update adopts the context exactly
    rec = ConceptRecord(concept_id="C1")
    ctx = np.array([0.3, -0.7, 0.2])
    positive_update(rec, ctx, None, 3)
    assert np.array_equal(rec.vector_long, ctx)

    # identical context is a fixed point (sim=1 => zero delta)
    before = rec.vector_long.copy()
    positive_update(rec, ctx, None, 3)
    assert np.allclose(rec.vector_long, before)

    # lr sequence is 1, 1/2, 1/3, ...
    rec2 = ConceptRecord(concept_id="C2")
    lrs = [positive_update(rec2, np.array([1.0, float(i)]), None, 2)
           for i in range(1, 7)]
    assert lrs == pytest.approx([1, 1 / 2, 1 / 3, 1 / 4, 1 / 5, 1 / 6])

    # sampler probabilities: counts {1, 16} -> 1^{3/4}:16^{3/4} = 1:8
    vcb = Vocabulary(dim=2)
    vcb.add("rare", 1)
    vcb.add("common", 16)
    sampler = NegativeSampler(vcb, seed=0)
    analytic = dict(zip(sampler.words, sampler.probabilities))
    assert analytic["rare"] == pytest.approx(1 / 9)
    assert analytic["common"] == pytest.approx(8 / 9)
    draws = sampler.draw_words(100_000)
    frac_rare = draws.count("rare") / len(draws)
    assert abs(frac_rare - 1 / 9) < 0.01
    report(f"AC-3 PASS: update rules exact; sampler empirical P(rare)="
           f"{frac_rare:.4f} vs 1/9 at 1e5 draws")


def test_ac4_spell_rules_vs_levenshtein_oracle():
    rng = random.Random(7)
    lexicon = [
        "fever", "fevers", "diabetes", "diabetic", "chronic", "cardiac",
        "renal", "failure", "pulse", "lesion", "lesions", "murmur",
        "sepsis", "asthma", "anemia", "anaemia", "oedema", "edema",
    ]
    t0 = time.monotonic()
    for case in range(10_000):
        style = rng.randrange(4)
        if style == 0:
            word = rng.choice(lexicon)
        elif style == 1:  # perturbed lexicon word
            w = list(rng.choice(lexicon))
            for _ in range(rng.randrange(1, 3)):
                op = rng.randrange(3)
                pos = rng.randrange(len(w))
                if op == 0:
                    w[pos] = rng.choice(string.ascii_lowercase)
                elif op == 1 and len(w) > 2:
                    del w[pos]
                else:
                    w.insert(pos, rng.choice(string.ascii_lowercase))
            word = "".join(w)
        elif style == 2:  # short abbreviation-style token
            word = "".join(rng.choice(string.ascii_uppercase)
                           for _ in range(rng.randrange(1, 6)))
        else:
            word = "".join(rng.choice(string.ascii_lowercase)
                           for _ in range(rng.randrange(1, 10)))
        vcb = Vocabulary(dim=2)
        for w in rng.sample(lexicon, rng.randrange(0, len(lexicon))):
            vcb.add(w, rng.randrange(1, 50))
        cdb_words = frozenset(rng.sample(lexicon, rng.randrange(0, len(lexicon))))
        got = spell_correct(word, vcb, cdb_words)
        expected = oracle_spell(word, vcb, cdb_words)
        assert got == expected, (
            f"case {case}: {word!r} -> {got!r}, oracle {expected!r}"
        )
    elapsed = time.monotonic() - t0
    report(f"AC-4 PASS: 10000/10000 spell cases match the Levenshtein "
           f"oracle ({elapsed:.1f}s)")


def test_ac5_meta_classifier():
    # gradient check against central finite differences
    rng = np.random.default_rng(0)
    task = MetaTask(name="t", labels=["a", "b", "c"])
    model = init_model(task, embedding_dim=5, hidden_dim=4, seed=1)
    model.params["W_out"] = rng.uniform(-0.5, 0.5, model.params["W_out"].shape)
    model.params["b_out"] = rng.uniform(-0.5, 0.5, model.params["b_out"].shape)
    X = rng.standard_normal((3, 4, 5))
    mask = np.ones((3, 4))
    mask[1, 3] = 0.0
    y = np.array([0, 2, 1])
    _, grads = loss_and_grads(model, X, mask, y)
    eps = 1e-6
    max_rel = 0.0
    for name, param in model.params.items():
        flat = param.ravel()
        for idx in range(0, flat.size, max(1, flat.size // 10)):
            orig = flat[idx]
            flat[idx] = orig + eps
            lp, _ = loss_and_grads(model, X, mask, y)
            flat[idx] = orig - eps
            lm, _ = loss_and_grads(model, X, mask, y)
            flat[idx] = orig
            numeric = (lp - lm) / (2 * eps)
            analytic = grads[name].ravel()[idx]
            rel = abs(numeric - analytic) / max(abs(numeric), abs(analytic), 1e-8)
            max_rel = max(max_rel, rel)
            assert rel <= 1e-4
    # templated negation corpus within 20 epochs
    corpus = build_negation_corpus(["fever", "cough"], n_per_class=150, seed=3)
    examples = corpus_to_examples(corpus, NEG_TASK)
    vcb = Vocabulary(dim=32)
    trained, metrics = train_meta(
        examples, NEG_TASK, vcb, epochs=20, lr=0.5, hidden_dim=16, seed=0
    )
    f1 = [m for m in metrics if m["split"] == "test"][-1]["macro_f1"]
    assert f1 >= 0.95
    # concept-agnosticism: surface form swap cannot change the prediction
    from conceptlink.meta import predict_meta

    doc_a = tokenize("patient has no sign of fever")
    doc_b = tokenize("patient has no sign of TIA")
    pa = predict_meta(trained, doc_a, (5, 5), vcb)
    pb = predict_meta(trained, doc_b, (5, 5), vcb)
    assert pa[0] == pb[0] and np.array_equal(pa[1], pb[1])
    report(f"AC-5 PASS: gradient check max rel err {max_rel:.2e}; negation "
           f"test macro-F1 {f1:.3f}; concept-agnosticism exact")


def test_ac6_scoring_correctness():
    def doc(doc_id, mentions):
        return GoldDocument(doc_id=doc_id, text="x" * 100, gold_mentions=[
            {"start": s, "end": e, "concept_id": c} for s, e, c in mentions
        ])

    gold = GoldCorpus([
        doc("d1", [(0, 5, "C1"), (10, 15, "C1"), (20, 25, "C2")]),
        doc("d2", [(0, 5, "C3")]),
        doc("d3", []),  # 0/0 -> 0 edge
    ])
    pred = {
        "d1": [(0, 5, "C1"), (10, 15, "C9"), (20, 25, "C2")],  # 2 tp, 1 fp, 1 fn
        "d2": [(0, 5, "C3"), (50, 55, "C3")],                  # 1 tp, 1 fp
        "d3": [],
    }
    rep = score(pred, gold)
    # totals: tp=3, fp=2, fn=1 -> P=3/5, R=3/4, F1=2*.6*.75/1.35=2/3
    assert rep.micro["precision"] == pytest.approx(3 / 5)
    assert rep.micro["recall"] == pytest.approx(3 / 4)
    assert rep.micro["f1"] == pytest.approx(2 / 3)
    # C1: (0,5) predicted right, (10,15) predicted as C9 -> tp=1, fn=1
    assert rep.per_concept["C1"] == pytest.approx(
        {"tp": 1, "fp": 0, "fn": 1, "precision": 1.0, "recall": 0.5, "f1": 2 / 3}
    )
    assert rep.per_concept["C9"]["precision"] == 0.0  # 0 tp / 1 fp
    # group config: C1 and C9 interchangeable
    grouped = score(pred, gold, {"G1": {"C1", "C9"}})
    # both C1 gold spans now match (the C9 prediction shares the group)
    assert grouped.per_group["G1"] == pytest.approx(
        {"tp": 2, "fp": 0, "fn": 0, "precision": 1.0, "recall": 1.0, "f1": 1.0}
    )
    report("AC-6 PASS: 3-doc fixture reproduces hand-computed P/R/F1 exactly "
           "(micro 0.600/0.750/0.667), group scoring exact")


def test_ac7_pipeline_determinism(tmp_path):
    csv_text = (
        "cui,name,type_ids,name_status\n"
        "C1,heart rate,,P\nC1,HR,,A\nC2,hazard ratio,,P\nC3,fever,,P\n"
    )
    docs = [
        {"doc_id": "d0", "text": "monitor pulse bpm and heart rate closely"},
        {"doc_id": "d1", "text": "cohort hazard ratio reached significance"},
        {"doc_id": "d2", "text": "spiking a fever with rising pulse and bpm"},
    ]
    (tmp_path / "cdb.csv").write_text(csv_text)
    (tmp_path / "corpus.jsonl").write_text(
        "\n".join(json.dumps(r) for r in docs) + "\n"
    )
    runner = CliRunner()

    def build(tag):
        model = tmp_path / f"model-{tag}.bin"
        out = tmp_path / f"out-{tag}.jsonl"
        for args in (
            ["build-cdb", str(tmp_path / "cdb.csv"), str(model), "--dim", "50"],
            ["build-vcb", str(model), "--corpus", str(tmp_path / "corpus.jsonl")],
            ["train-self", str(model), "--corpus", str(tmp_path / "corpus.jsonl"),
             "--epochs", "2", "--seed", "11"],
            ["annotate", str(model), "--input", str(tmp_path / "corpus.jsonl"),
             "-o", str(out)],
        ):
            result = runner.invoke(cli, args, catch_exceptions=False)
            assert result.exit_code == 0, result.output
        return model.read_bytes(), out.read_bytes()

    model_a, out_a = build("a")
    model_b, out_b = build("b")
    assert model_a == model_b
    assert out_a == out_b
    report(f"AC-7 PASS: repeated build+train+annotate byte-identical "
           f"(model {len(model_a)} bytes, output {len(out_a)} bytes)")


def test_ac8_throughput():
    cdb, vcb, text = build_throughput_corpus()
    bundle = ModelBundle(cdb=cdb, vcb=vcb)
    lines = text.splitlines()
    t0 = time.monotonic()
    n_mentions = 0
    for i, line in enumerate(lines):
        n_mentions += len(bundle.annotate(line, f"d{i}"))
    elapsed = time.monotonic() - t0
    assert elapsed < 60
    mb = len(text) / (1024 * 1024)
    report(f"AC-8 PASS: {mb:.1f} MB / {len(cdb.concepts)} concepts annotated "
           f"in {elapsed:.1f}s ({n_mentions} mentions)")


def test_ac9_service_parity_and_rollback():
    from fastapi.testclient import TestClient

    exp = build_ambiguity_experiment(n_train_per_concept=10, n_test=5, seed=3)
    corpus = [d for docs in exp.train_docs_by_concept.values() for d in docs]
    self_supervised_train(corpus, exp.cdb, exp.vcb, exp.pipeline, exp.config, seed=0)
    bundle = ModelBundle(cdb=exp.cdb, vcb=exp.vcb, config=exp.config)
    client = TestClient(create_app(bundle))

    rng = random.Random(5)
    vocab = ([f"cardiox{i}" for i in range(10)] + [f"statx{i}" for i in range(10)]
             + ["heart", "rate", "hazard", "ratio", "HR", "the", "of"])
    mismatches = 0
    for i in range(100):
        text = " ".join(rng.choice(vocab) for _ in range(rng.randrange(1, 25)))
        resp = client.post("/api/annotate", json={"text": text, "doc_id": f"t{i}"})
        assert resp.status_code == 200
        expected = {
            "doc_id": f"t{i}",
            "text_hash": text_hash(text),
            "mentions": [mention_record(m) for m in bundle.annotate(text, f"t{i}")],
        }
        if json.dumps(resp.json(), sort_keys=True) != json.dumps(
            expected, sort_keys=True
        ):
            mismatches += 1
    assert mismatches == 0

    # snapshot -> feedback (online update) -> rollback restores bit-equal state
    saved = {
        cui: (rec.train_count,
              None if rec.vector_long is None else rec.vector_long.copy(),
              None if rec.vector_short is None else rec.vector_short.copy())
        for cui, rec in bundle.cdb.concepts.items()
    }
    assert client.post("/api/models/snapshot").status_code == 200
    text = "cardiox0 cardiox1 heart rate cardiox2"
    pid = client.post("/api/projects", json={
        "name": "ac9", "online_learning": True,
        "documents": [{"doc_id": "d", "text": text}],
    }).json()["id"]
    start = text.index("heart rate")
    resp = client.post(f"/api/projects/{pid}/feedback", json={
        "doc_id": "d", "annotator": "a", "verdict": "correct",
        "start": start, "end": start + 10, "cui": "C0018810",
    })
    assert resp.status_code == 200 and resp.json()["trained"]
    assert client.post("/api/models/rollback").status_code == 200
    restored = client.app.state.service.bundle
    for cui, (count, v_long, v_short) in saved.items():
        rec = restored.cdb.concepts[cui]
        assert rec.train_count == count
        for mine, theirs in ((v_long, rec.vector_long), (v_short, rec.vector_short)):
            if mine is None:
                assert theirs is None
            else:
                assert np.array_equal(mine, theirs)
    report("AC-9 PASS: 100/100 service responses byte-identical to library; "
           "snapshot/rollback restores bit-equal vectors")
