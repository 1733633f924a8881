"""Candidate detection with a moving expanding window, and linking via
context-embedding similarity.

Detection walks every start position; at each one the window grows while
its normalized key is either a full concept name (emit a candidate and
keep growing) or a strict prefix of a longer name. Token order may be
ignored for windows of up to two non-stopword tokens. All nested and
overlapping candidates are emitted; overlap resolution happens after
linking (longest match wins, ties by confidence, then earlier start).
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Optional

from .embedding import compute_context, cosine_sim_clamped
from .store import NAME_SEP, ConceptDatabase, Vocabulary
from .textpipe import TokenizedDocument

UNTRAINED_CONFIDENCE = 0.5


@dataclass
class LinkerConfig:
    similarity_threshold: float = 0.3
    long_context_s: int = 9
    short_context_s: int = 2
    min_train_count_for_disambiguation: int = 30
    allow_token_reorder: bool = True
    max_window_tokens: int = 10

    def __post_init__(self):
        if not 0.0 <= self.similarity_threshold <= 1.0:
            raise ValueError("similarity_threshold must be in [0, 1]")
        if self.long_context_s < 1 or self.short_context_s < 1:
            raise ValueError("context sizes must be >= 1")


@dataclass
class EntityMention:
    start: int
    end: int
    token_span: tuple[int, int]
    matched_key: str
    candidates: list[str]
    name_is_unique: bool = False
    name_is_abbrev: bool = False
    linked_concept: Optional[str] = None
    confidence: Optional[float] = None
    untrained: bool = False
    meta: dict[str, str] = field(default_factory=dict)

    @property
    def text_span(self) -> tuple[int, int]:
        return (self.start, self.end)


def detect_candidates(
    doc: TokenizedDocument,
    cdb: ConceptDatabase,
    config: LinkerConfig,
) -> list[EntityMention]:
    """All (possibly nested) concept-name matches in the document."""
    matchable = doc.matchable()
    mentions: list[EntityMention] = []
    seen: set[tuple[int, int, str]] = set()
    n = len(matchable)
    cap = config.max_window_tokens
    name_index = cdb.name_index
    subnames = cdb.subname_index
    reorder = config.allow_token_reorder

    for p in range(n):
        parts: list[str] = []
        for w in range(1, cap + 1):
            q = p + w - 1
            if q >= n:
                break
            parts.append(matchable[q][1].norm)
            key = NAME_SEP.join(parts)
            matched_here = False
            if key in name_index:
                _emit(mentions, seen, doc, matchable, p, q, key, name_index[key], cdb)
                matched_here = True
            grow = matched_here or key in subnames
            if reorder and not grow:
                window_toks = [matchable[i][1] for i in range(p, q + 1)]
                content = sorted(
                    t.norm for t in window_toks if not t.is_stopword
                )
                if 1 <= len(content) <= 2:
                    rkey = NAME_SEP.join(content)
                    # spurious wider duplicates are avoided by requiring
                    # the window to start and end on content tokens
                    at_boundary = (
                        not window_toks[0].is_stopword
                        and not window_toks[-1].is_stopword
                    )
                    if (
                        not matched_here
                        and at_boundary
                        and rkey in cdb.reorder_index
                    ):
                        _emit(
                            mentions, seen, doc, matchable, p, q, rkey,
                            cdb.reorder_index[rkey], cdb,
                        )
                        grow = True
                    if rkey in cdb.reorder_subnames or any(
                        t in cdb.reorder_subnames for t in content
                    ):
                        grow = True
                elif len(content) == 0:
                    # all-stopword window may still start a reordered name
                    grow = True
            if not grow:
                break
    mentions.sort(key=lambda m: (m.start, m.end, m.matched_key))
    return mentions


def _emit(mentions, seen, doc, matchable, p, q, key, cuis, cdb):
    first_idx = matchable[p][0]
    last_idx = matchable[q][0]
    sig = (first_idx, last_idx, key)
    if sig in seen:
        return
    seen.add(sig)
    mentions.append(
        EntityMention(
            start=doc.tokens[first_idx].start,
            end=doc.tokens[last_idx].end,
            token_span=(first_idx, last_idx),
            matched_key=key,
            candidates=sorted(cuis),
            name_is_unique=len(cuis) == 1,
            name_is_abbrev=key in cdb.abbrev_keys,
        )
    )


def blended_similarity(
    record,
    doc: TokenizedDocument,
    token_span: tuple[int, int],
    vcb: Vocabulary,
    config: LinkerConfig,
) -> float:
    """Average of long- and short-context cosine similarities against a
    concept's learned vectors."""
    long_ctx = compute_context(doc, token_span, config.long_context_s, vcb, "long")
    short_ctx = compute_context(doc, token_span, config.short_context_s, vcb, "short")
    sims = []
    for ctx, vec in ((long_ctx, record.vector_long), (short_ctx, record.vector_short)):
        if ctx is None or vec is None:
            sims.append(0.0)
        else:
            sims.append(cosine_sim_clamped(ctx.vector, vec))
    return (sims[0] + sims[1]) / 2.0


def link(
    mention: EntityMention,
    doc: TokenizedDocument,
    cdb: ConceptDatabase,
    vcb: Vocabulary,
    config: LinkerConfig,
) -> Optional[EntityMention]:
    """Attach a concept to a detected mention, or drop it.

    Single trained candidates link with the blended similarity as
    confidence; single untrained candidates link only via a unique name,
    at a fixed flagged confidence. Ambiguous mentions link to the
    highest-similarity candidate when it clears both the similarity
    threshold and the training-count floor.
    """
    if not mention.candidates:
        return None
    if len(mention.candidates) == 1:
        cui = mention.candidates[0]
        record = cdb.concepts[cui]
        if record.is_trained:
            sim = blended_similarity(record, doc, mention.token_span, vcb, config)
            mention.linked_concept = cui
            mention.confidence = sim
            return mention
        if mention.name_is_unique:
            mention.linked_concept = cui
            mention.confidence = UNTRAINED_CONFIDENCE
            mention.untrained = True
            return mention
        return None

    best_cui = None
    best_sim = -1.0
    for cui in mention.candidates:
        record = cdb.concepts[cui]
        sim = blended_similarity(record, doc, mention.token_span, vcb, config)
        if sim > best_sim:
            best_cui, best_sim = cui, sim
    record = cdb.concepts[best_cui]
    if (
        best_sim >= config.similarity_threshold
        and record.train_count >= config.min_train_count_for_disambiguation
    ):
        mention.linked_concept = best_cui
        mention.confidence = best_sim
        return mention
    return None


def prune_overlaps(mentions: list[EntityMention]) -> list[EntityMention]:
    """Keep the longest match per overlapping cluster; ties go to the
    higher confidence, then the earlier start."""
    ordered = sorted(
        mentions,
        key=lambda m: (
            -(m.token_span[1] - m.token_span[0]),
            -(m.confidence if m.confidence is not None else 0.0),
            m.start,
        ),
    )
    kept: list[EntityMention] = []
    for m in ordered:
        if all(
            m.token_span[1] < k.token_span[0] or m.token_span[0] > k.token_span[1]
            for k in kept
        ):
            kept.append(m)
    kept.sort(key=lambda m: m.start)
    return kept
