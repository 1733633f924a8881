"""Synthetic corpora for the built-in experiments.

These generators back the learning-curve experiment (two concepts
sharing an abbreviation, with distinct context vocabularies), the
templated meta-classification corpora, and throughput benchmarks. All
generation is seeded and deterministic.
"""

from __future__ import annotations

import numpy as np

from .evaluation import AmbiguityExperiment, GoldCorpus, GoldDocument
from .linker import LinkerConfig
from .store import ConceptDatabase, Vocabulary, build_cdb, build_vcb
from .textpipe import Pipeline, tokenize

CONCEPT_A = "C0018810"  # full name "heart rate", abbreviation HR
CONCEPT_B = "C2985465"  # full name "hazard ratio", abbreviation HR


def build_ambiguity_experiment(
    n_train_per_concept: int = 30,
    n_test: int = 174,
    context_words_per_side: int = 9,
    topic_vocab_size: int = 10,
    shared_vocab_size: int = 20,
    topic_prob: float = 0.9,
    identical_contexts: bool = False,
    seed: int = 7,
) -> AmbiguityExperiment:
    """Two concepts, one shared abbreviation, distinct context vocab.

    Training documents mention each concept by its unique full name;
    test documents contain only the ambiguous abbreviation. With
    ``identical_contexts`` both concepts draw from the same vocabulary,
    which should pin disambiguation at chance level.
    """
    rng = np.random.default_rng(seed)
    topic_a = [f"cardiox{i}" for i in range(topic_vocab_size)]
    topic_b = [f"statx{i}" for i in range(topic_vocab_size)]
    shared = [f"commonx{i}" for i in range(shared_vocab_size)]
    if identical_contexts:
        topic_b = topic_a

    rows = [
        (CONCEPT_A, "heart rate", "", ""),
        (CONCEPT_A, "HR", "", ""),
        (CONCEPT_B, "hazard ratio", "", ""),
        (CONCEPT_B, "HR", "", ""),
    ]
    pipeline = Pipeline()
    cdb = build_cdb(rows, pipeline)

    def draw_side(topic):
        words = []
        for _ in range(context_words_per_side):
            if rng.random() < topic_prob:
                words.append(topic[rng.integers(len(topic))])
            else:
                words.append(shared[rng.integers(len(shared))])
        return words

    def make_doc(mention: str, topic) -> str:
        return " ".join(draw_side(topic) + [mention] + draw_side(topic))

    train_docs: dict[str, list[tuple[str, str]]] = {CONCEPT_A: [], CONCEPT_B: []}
    for i in range(n_train_per_concept):
        train_docs[CONCEPT_A].append((f"train-a-{i}", make_doc("heart rate", topic_a)))
        train_docs[CONCEPT_B].append((f"train-b-{i}", make_doc("hazard ratio", topic_b)))

    test_docs = []
    gold_docs = []
    for i in range(n_test):
        cui = CONCEPT_A if i % 2 == 0 else CONCEPT_B
        topic = topic_a if cui == CONCEPT_A else topic_b
        text = make_doc("HR", topic)
        doc_id = f"test-{i}"
        test_docs.append((doc_id, text))
        start = text.index("HR")
        gold_docs.append(
            GoldDocument(
                doc_id=doc_id,
                text=text,
                gold_mentions=[{"start": start, "end": start + 2, "concept_id": cui}],
            )
        )

    all_text = " ".join(
        t for docs in train_docs.values() for _, t in docs
    ) + " " + " ".join(t for _, t in test_docs)
    vcb = build_vcb((t.norm for t in tokenize(all_text).tokens if t.norm), dim=50)

    config = LinkerConfig(min_train_count_for_disambiguation=1)
    return AmbiguityExperiment(
        cdb=cdb,
        vcb=vcb,
        pipeline=pipeline,
        config=config,
        train_docs_by_concept=train_docs,
        test_docs=test_docs,
        gold=GoldCorpus(documents=gold_docs),
    )


NEGATION_TEMPLATES_NEG = [
    "patient has no sign of {m}",
    "there is no evidence of {m} today",
    "the patient denies any {m} since admission",
    "we could not find {m} on review",
    "without any {m} noted during the visit",
    "ruled out {m} after examination",
]

NEGATION_TEMPLATES_POS = [
    "patient has a high {m} this morning",
    "clear evidence of {m} on examination",
    "the patient reports ongoing {m} since admission",
    "findings consistent with {m} on review",
    "presenting with {m} noted during the visit",
    "confirmed {m} after examination",
]


def build_negation_corpus(
    mentions: list[str],
    n_per_class: int = 500,
    seed: int = 3,
) -> list[tuple[str, tuple[int, int], str]]:
    """(text, mention char span, label) triples from fixed templates."""
    rng = np.random.default_rng(seed)
    out = []
    for label, templates in (("yes", NEGATION_TEMPLATES_NEG), ("no", NEGATION_TEMPLATES_POS)):
        for _ in range(n_per_class):
            template = templates[rng.integers(len(templates))]
            mention = mentions[rng.integers(len(mentions))]
            text = template.format(m=mention)
            start = text.index(mention)
            out.append((text, (start, start + len(mention)), label))
    return out


def build_throughput_corpus(
    cdb_size: int = 10_000,
    target_bytes: int = 10 * 1024 * 1024,
    seed: int = 11,
) -> tuple[ConceptDatabase, Vocabulary, str]:
    """A large synthetic CDB plus enough text to hit the target size."""
    rng = np.random.default_rng(seed)
    fillers = [f"word{i}" for i in range(2000)]
    name_parts = [f"term{i}" for i in range(800)]
    rows = []
    used = set()
    i = 0
    while len(rows) < cdb_size:
        n_tokens = int(rng.integers(1, 4))
        name = " ".join(name_parts[rng.integers(len(name_parts))] for _ in range(n_tokens))
        if name in used:
            i += 1
            continue
        used.add(name)
        rows.append((f"C{len(rows):07d}", name, "", ""))
    pipeline = Pipeline()
    cdb = build_cdb(rows, pipeline)

    chunks = []
    size = 0
    while size < target_bytes:
        words = [fillers[rng.integers(len(fillers))] for _ in range(200)]
        if rng.random() < 0.3:
            name = rows[rng.integers(len(rows))][1]
            words[int(rng.integers(len(words)))] = name
        chunk = " ".join(words) + "\n"
        chunks.append(chunk)
        size += len(chunk)
    text = "".join(chunks)
    vcb = build_vcb(iter(fillers + name_parts), dim=50)
    return cdb, vcb, text
