"""Self-supervised and supervised training of concept vectors.

Each positive example pulls the concept vector toward the mention's
context embedding with a decaying learning rate (1/occurrence-count),
scaled so unfamiliar contexts move the vector more than familiar ones.
Every positive update is paired with a negative update that pushes the
vector away from a random frequency-weighted sample of vocabulary words.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field
from typing import Iterable, Optional

import numpy as np

from .embedding import compute_context, cosine_sim_clamped
from .linker import LinkerConfig, detect_candidates, link
from .store import ConceptDatabase, ConceptRecord, Vocabulary
from .textpipe import Pipeline, TokenizedDocument

log = logging.getLogger(__name__)


@dataclass
class TrainStats:
    docs_seen: int = 0
    mentions_trained: int = 0
    per_concept_counts: dict[str, int] = field(default_factory=dict)
    negative_samples_drawn: int = 0
    skipped: int = 0

    def record(self, cui: str) -> None:
        self.mentions_trained += 1
        self.per_concept_counts[cui] = self.per_concept_counts.get(cui, 0) + 1


class NegativeSampler:
    """Draws vocabulary words with probability proportional to their
    relative corpus frequency raised to the 3/4 power."""

    def __init__(self, vcb: Vocabulary, seed: int = 0):
        self.words = sorted(vcb.entries)
        if not self.words:
            raise ValueError("cannot build a sampler over an empty vocabulary")
        counts = np.array([vcb.entries[w].count for w in self.words], dtype=float)
        freqs = counts / counts.sum()
        weights = freqs ** 0.75
        probs = weights / weights.sum()
        self.probabilities = probs
        self.cumulative = np.cumsum(probs)
        self.rng = np.random.default_rng(seed)
        self._vcb = vcb

    def draw_words(self, k: int) -> list[str]:
        u = self.rng.random(k)
        idx = np.searchsorted(self.cumulative, u, side="right")
        idx = np.minimum(idx, len(self.words) - 1)
        return [self.words[i] for i in idx]

    def draw_context(self, k: int) -> np.ndarray:
        """Mean vector of k sampled words (the negative context)."""
        words = self.draw_words(k)
        return np.mean(np.stack([self._vcb.vector(w) for w in words]), axis=0)


def positive_update(
    record: ConceptRecord,
    v_cntx_long: Optional[np.ndarray],
    v_cntx_short: Optional[np.ndarray],
    dim: int,
) -> float:
    """Pull the concept vectors toward the given contexts.

    The occurrence counter is incremented first, so the first update has
    lr=1 and adopts the context outright. Returns the lr used.
    """
    record.train_count += 1
    lr = 1.0 / record.train_count
    if record.vector_long is None:
        record.vector_long = np.zeros(dim)
        record.vector_short = np.zeros(dim)
    for attr, ctx in (("vector_long", v_cntx_long), ("vector_short", v_cntx_short)):
        if ctx is None:
            continue
        vec = getattr(record, attr)
        sim = cosine_sim_clamped(vec, ctx)
        setattr(record, attr, vec + lr * (1.0 - sim) * ctx)
    return lr


def negative_update(
    record: ConceptRecord,
    sampler: NegativeSampler,
    k_long: int,
    k_short: int,
    lr: float,
) -> int:
    """Push the concept vectors away from random negative contexts.

    Shares the paired positive update's lr and does not touch the
    occurrence counter. Returns the number of words drawn.
    """
    drawn = 0
    for attr, k in (("vector_long", k_long), ("vector_short", k_short)):
        vec = getattr(record, attr)
        if vec is None:
            continue
        v_ncntx = sampler.draw_context(k)
        drawn += k
        sim = cosine_sim_clamped(vec, v_ncntx)
        setattr(record, attr, vec - lr * sim * v_ncntx)
    return drawn


def train_mention(
    cui: str,
    doc: TokenizedDocument,
    token_span: tuple[int, int],
    cdb: ConceptDatabase,
    vcb: Vocabulary,
    sampler: NegativeSampler,
    config: LinkerConfig,
    stats: TrainStats,
) -> bool:
    """One positive + negative update pair for a mention of ``cui``."""
    long_ctx = compute_context(doc, token_span, config.long_context_s, vcb, "long")
    short_ctx = compute_context(doc, token_span, config.short_context_s, vcb, "short")
    if long_ctx is None and short_ctx is None:
        return False
    record = cdb.concepts[cui]
    lr = positive_update(
        record,
        long_ctx.vector if long_ctx else None,
        short_ctx.vector if short_ctx else None,
        vcb.dim,
    )
    stats.negative_samples_drawn += negative_update(
        record,
        sampler,
        2 * config.long_context_s,
        2 * config.short_context_s,
        lr,
    )
    stats.record(cui)
    return True


def self_supervised_train(
    corpus: Iterable[tuple[str, str]],
    cdb: ConceptDatabase,
    vcb: Vocabulary,
    pipeline: Pipeline,
    config: Optional[LinkerConfig] = None,
    seed: int = 0,
    epochs: int = 1,
) -> TrainStats:
    """Train concept vectors from raw documents.

    Only mentions whose matched name is unique and not an abbreviation
    anchor training on a first encounter; ambiguous mentions train when
    linking disambiguates them. ``corpus`` yields (doc_id, text) pairs.
    Deterministic given the seed.
    """
    config = config or LinkerConfig()
    sampler = NegativeSampler(vcb, seed=seed)
    stats = TrainStats()
    docs = list(corpus)
    for _ in range(epochs):
        for doc_id, text in docs:
            doc = pipeline(text, doc_id)
            stats.docs_seen += 1
            mentions = detect_candidates(doc, cdb, config)
            mentions.sort(key=lambda m: (m.start, m.end))
            for mention in mentions:
                if mention.name_is_unique and not mention.name_is_abbrev:
                    train_mention(
                        mention.candidates[0], doc, mention.token_span,
                        cdb, vcb, sampler, config, stats,
                    )
                elif len(mention.candidates) > 1:
                    linked = link(mention, doc, cdb, vcb, config)
                    if linked is not None and linked.linked_concept is not None:
                        train_mention(
                            linked.linked_concept, doc, mention.token_span,
                            cdb, vcb, sampler, config, stats,
                        )
    return stats


def supervised_train(
    export: dict,
    cdb: ConceptDatabase,
    vcb: Vocabulary,
    pipeline: Pipeline,
    config: Optional[LinkerConfig] = None,
    seed: int = 0,
) -> TrainStats:
    """Apply human-confirmed annotations from a project export.

    Confirmed-correct annotations update vectors regardless of name
    uniqueness; incorrect/killed ones are counted but change nothing.
    Annotations naming unknown concepts are skipped with a warning.
    """
    config = config or LinkerConfig()
    sampler = NegativeSampler(vcb, seed=seed)
    stats = TrainStats()
    for project in export.get("projects", []):
        for document in project.get("documents", []):
            doc = pipeline(document["text"], str(document.get("doc_id", "")))
            stats.docs_seen += 1
            annotations = sorted(
                document.get("annotations", []),
                key=lambda a: (a["start"], a["end"], a["cui"]),
            )
            for ann in annotations:
                cui = ann["cui"]
                if cui not in cdb.concepts:
                    log.warning("unknown concept %s in export; skipping", cui)
                    stats.skipped += 1
                    continue
                if not ann.get("correct", False) or ann.get("killed", False):
                    stats.skipped += 1
                    continue
                span = _token_span_for(doc, ann["start"], ann["end"])
                if span is None:
                    log.warning(
                        "annotation span (%s, %s) matches no tokens; skipping",
                        ann["start"], ann["end"],
                    )
                    stats.skipped += 1
                    continue
                train_mention(cui, doc, span, cdb, vcb, sampler, config, stats)
    return stats


def _token_span_for(doc: TokenizedDocument, start: int, end: int):
    idxs = [
        i for i, t in enumerate(doc.tokens)
        if t.start >= start and t.end <= end and not t.is_punct
    ]
    if not idxs:
        return None
    return (idxs[0], idxs[-1])
