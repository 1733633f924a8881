"""Scoring against gold annotations and the disambiguation learning
curve.

A prediction counts as correct only when its character span exactly
matches a gold mention and the linked concept matches (directly, or via
shared group membership when scoring at group level). A right-span
wrong-concept prediction costs one FP and one FN.
"""

from __future__ import annotations

import copy
import json
import math
from dataclasses import dataclass, field
from typing import Callable, Iterable, Optional

from .errors import ConceptLinkError


@dataclass
class GoldDocument:
    doc_id: str
    text: str
    gold_mentions: list[dict] = field(default_factory=list)


@dataclass
class GoldCorpus:
    documents: list[GoldDocument] = field(default_factory=list)


def _prf(tp: int, fp: int, fn: int) -> dict:
    precision = tp / (tp + fp) if tp + fp else 0.0
    recall = tp / (tp + fn) if tp + fn else 0.0
    f1 = 2 * precision * recall / (precision + recall) if precision + recall else 0.0
    return {
        "tp": tp, "fp": fp, "fn": fn,
        "precision": precision, "recall": recall, "f1": f1,
    }


@dataclass
class MetricReport:
    per_concept: dict[str, dict] = field(default_factory=dict)
    per_group: dict[str, dict] = field(default_factory=dict)
    micro: dict = field(default_factory=dict)
    macro: dict = field(default_factory=dict)
    mean_f1: float = 0.0
    sd_f1: float = 0.0
    iqr_f1: float = 0.0

    def to_dict(self) -> dict:
        return {
            "per_concept": self.per_concept,
            "per_group": self.per_group,
            "micro": self.micro,
            "macro": self.macro,
            "mean_f1": self.mean_f1,
            "sd_f1": self.sd_f1,
            "iqr_f1": self.iqr_f1,
        }


def _match_counts(preds, golds, keyfn):
    """Greedy exact-span matching of predictions to gold mentions.

    Both sides are keyed by ``keyfn`` (identity at concept level, group
    id at group level). Each gold mention matches at most one
    prediction. Returns per-key {tp, fp, fn} counts.
    """
    counts: dict[str, dict[str, int]] = {}

    def bucket(key):
        return counts.setdefault(key, {"tp": 0, "fp": 0, "fn": 0})

    unmatched = {}
    for start, end, cui in golds:
        unmatched.setdefault((start, end, keyfn(cui)), []).append(cui)
    for start, end, cui in sorted(preds):
        key = keyfn(cui)
        slot = unmatched.get((start, end, key))
        if slot:
            slot.pop()
            if not slot:
                del unmatched[(start, end, key)]
            bucket(key)["tp"] += 1
        else:
            bucket(key)["fp"] += 1
    for (_, _, key), remaining in unmatched.items():
        bucket(key)["fn"] += len(remaining)
    return counts


def score(
    pred: dict[str, list[tuple[int, int, str]]],
    gold: GoldCorpus,
    groups: Optional[dict[str, set[str]]] = None,
) -> MetricReport:
    """Exact-span scoring of predictions against a gold corpus.

    ``pred`` maps doc_id to (start, end, cui) triples. All gold doc_ids
    must be present in pred (an empty list means no predictions).
    """
    gold_ids = {d.doc_id for d in gold.documents}
    missing = sorted(gold_ids - set(pred))
    if missing:
        raise ConceptLinkError(f"predictions missing for doc_ids: {', '.join(missing)}")

    concept_to_group = {}
    if groups:
        for gid, members in groups.items():
            for cui in members:
                concept_to_group[cui] = gid
            concept_to_group.setdefault(gid, gid)

    def group_key(cui: str) -> str:
        return concept_to_group.get(cui, cui)

    concept_counts: dict[str, dict[str, int]] = {}
    group_counts: dict[str, dict[str, int]] = {}
    for doc in gold.documents:
        golds = [(m["start"], m["end"], m["concept_id"]) for m in doc.gold_mentions]
        preds = pred.get(doc.doc_id, [])
        for key, c in _match_counts(preds, golds, lambda cui: cui).items():
            agg = concept_counts.setdefault(key, {"tp": 0, "fp": 0, "fn": 0})
            for k in c:
                agg[k] += c[k]
        for key, c in _match_counts(preds, golds, group_key).items():
            agg = group_counts.setdefault(key, {"tp": 0, "fp": 0, "fn": 0})
            for k in c:
                agg[k] += c[k]

    report = MetricReport()
    for cui, c in sorted(concept_counts.items()):
        report.per_concept[cui] = _prf(c["tp"], c["fp"], c["fn"])
    for gid, c in sorted(group_counts.items()):
        report.per_group[gid] = _prf(c["tp"], c["fp"], c["fn"])

    tp = sum(c["tp"] for c in concept_counts.values())
    fp = sum(c["fp"] for c in concept_counts.values())
    fn = sum(c["fn"] for c in concept_counts.values())
    report.micro = _prf(tp, fp, fn)
    keys = report.per_concept
    if keys:
        n = len(keys)
        report.macro = {
            "precision": sum(v["precision"] for v in keys.values()) / n,
            "recall": sum(v["recall"] for v in keys.values()) / n,
            "f1": sum(v["f1"] for v in keys.values()) / n,
        }
    f1s = sorted(v["f1"] for v in (report.per_group or report.per_concept).values())
    if f1s:
        n = len(f1s)
        report.mean_f1 = sum(f1s) / n
        report.sd_f1 = math.sqrt(sum((x - report.mean_f1) ** 2 for x in f1s) / n)
        report.iqr_f1 = _quantile(f1s, 0.75) - _quantile(f1s, 0.25)
    return report


def _quantile(sorted_vals: list[float], q: float) -> float:
    if not sorted_vals:
        return 0.0
    pos = q * (len(sorted_vals) - 1)
    lo = int(math.floor(pos))
    hi = int(math.ceil(pos))
    frac = pos - lo
    return sorted_vals[lo] * (1 - frac) + sorted_vals[hi] * frac


def load_groups(path) -> dict[str, set[str]]:
    """Parse a "group_id: member, member, ..." config file."""
    groups = {}
    with open(path, encoding="utf-8") as fh:
        for line in fh:
            line = line.strip()
            if not line or line.startswith("#"):
                continue
            gid, _, members = line.partition(":")
            groups[gid.strip()] = {
                m.strip() for m in members.split(",") if m.strip()
            }
    return groups


def load_gold_jsonl(path) -> GoldCorpus:
    """Gold corpus from line-delimited records shaped like annotation
    output ({doc_id, text, mentions:[{start,end,cui}]})."""
    docs = []
    with open(path, encoding="utf-8") as fh:
        for line in fh:
            if not line.strip():
                continue
            rec = json.loads(line)
            docs.append(
                GoldDocument(
                    doc_id=str(rec["doc_id"]),
                    text=rec.get("text", ""),
                    gold_mentions=[
                        {"start": m["start"], "end": m["end"], "concept_id": m["cui"]}
                        for m in rec.get("mentions", [])
                    ],
                )
            )
    return GoldCorpus(documents=docs)


def load_pred_jsonl(path) -> dict[str, list[tuple[int, int, str]]]:
    pred: dict[str, list[tuple[int, int, str]]] = {}
    with open(path, encoding="utf-8") as fh:
        for line in fh:
            if not line.strip():
                continue
            rec = json.loads(line)
            pred[str(rec["doc_id"])] = [
                (m["start"], m["end"], m["cui"])
                for m in rec.get("mentions", [])
                if m.get("cui")
            ]
    return pred


def learning_curve(
    corpus_builder: Callable[[], "AmbiguityExperiment"],
    sizes: Iterable[int] = (1, 5, 10, 30),
    seed: int = 0,
) -> dict[int, float]:
    """Disambiguation F1 as a function of training-set size.

    For each size n, the per-concept training pool is split into
    len(pool)//n partitions; each partition trains a fresh copy of the
    concept store, the ambiguous test mentions are annotated, and the
    micro-F1 is averaged over partitions.
    """
    from .trainer import self_supervised_train

    results: dict[int, float] = {}
    for size in sizes:
        experiment = corpus_builder()
        pool = experiment.train_docs_by_concept
        n_each = min(len(docs) for docs in pool.values())
        n_parts = max(1, n_each // size)
        f1s = []
        for part in range(n_parts):
            exp = corpus_builder()
            cdb = copy.deepcopy(exp.cdb)
            subset = []
            for cui in sorted(exp.train_docs_by_concept):
                docs = exp.train_docs_by_concept[cui]
                subset.extend(docs[part * size:(part + 1) * size])
            self_supervised_train(
                subset, cdb, exp.vcb, exp.pipeline, exp.config, seed=seed
            )
            bundle_pred = {}
            from .linker import detect_candidates, link, prune_overlaps

            for doc_id, text in exp.test_docs:
                doc = exp.pipeline(text, doc_id)
                mentions = detect_candidates(doc, cdb, exp.config)
                linked = [
                    m for m in (
                        link(m, doc, cdb, exp.vcb, exp.config) for m in mentions
                    ) if m is not None
                ]
                bundle_pred[doc_id] = [
                    (m.start, m.end, m.linked_concept)
                    for m in prune_overlaps(linked)
                ]
            report = score(bundle_pred, exp.gold)
            f1s.append(report.micro["f1"])
        results[size] = sum(f1s) / len(f1s)
    return results


@dataclass
class AmbiguityExperiment:
    """Everything a learning-curve run needs: stores, config, training
    pool grouped by concept, and ambiguous test documents with gold."""

    cdb: object
    vcb: object
    pipeline: object
    config: object
    train_docs_by_concept: dict[str, list[tuple[str, str]]]
    test_docs: list[tuple[str, str]]
    gold: GoldCorpus
