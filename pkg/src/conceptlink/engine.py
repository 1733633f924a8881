"""The full annotation engine: model bundle + end-to-end annotate.

A bundle holds the concept database, vocabulary, linker configuration,
pipeline resources and any trained meta-classifiers, and serializes to a
single versioned file.
"""

from __future__ import annotations

import hashlib
import json
from dataclasses import dataclass, field
from typing import Optional

from . import serialization
from .linker import EntityMention, LinkerConfig, detect_candidates, link, prune_overlaps
from .store import ConceptDatabase, Vocabulary
from .textpipe import DEFAULT_STOPWORDS, Pipeline


@dataclass
class ModelBundle:
    cdb: ConceptDatabase
    vcb: Vocabulary
    config: LinkerConfig = field(default_factory=LinkerConfig)
    lemma_table: dict[str, str] = field(default_factory=dict)
    stopwords: frozenset[str] = DEFAULT_STOPWORDS
    meta_models: dict = field(default_factory=dict)

    def __post_init__(self):
        self._pipeline: Optional[Pipeline] = None

    @property
    def pipeline(self) -> Pipeline:
        if self._pipeline is None:
            self._pipeline = Pipeline(
                lemma_table=self.lemma_table,
                stopwords=self.stopwords,
                vcb=self.vcb,
                cdb_words=self.cdb.name_words(),
            )
        return self._pipeline

    def invalidate_pipeline(self) -> None:
        self._pipeline = None

    def annotate(self, text: str, doc_id: str = "") -> list[EntityMention]:
        """Detect, link, prune and meta-classify mentions in ``text``."""
        if not text:
            return []
        doc = self.pipeline(text, doc_id)
        mentions = detect_candidates(doc, self.cdb, self.config)
        linked = []
        for m in mentions:
            out = link(m, doc, self.cdb, self.vcb, self.config)
            if out is not None:
                linked.append(out)
        final = prune_overlaps(linked)
        if self.meta_models:
            from .meta import predict_meta

            for m in final:
                for task_name, model in self.meta_models.items():
                    label, _ = predict_meta(model, doc, m.token_span, self.vcb)
                    m.meta[task_name] = label
        final.sort(key=lambda m: m.start)
        return final

    def save(self, path) -> None:
        pipeline, self._pipeline = self._pipeline, None
        try:
            serialization.save_payload(
                path,
                {
                    "cdb": self.cdb,
                    "vcb": self.vcb,
                    "config": self.config,
                    "lemma_table": self.lemma_table,
                    "stopwords": self.stopwords,
                    "meta_models": self.meta_models,
                },
            )
        finally:
            self._pipeline = pipeline

    @classmethod
    def load(cls, path) -> "ModelBundle":
        payload = serialization.load_payload(path)
        return cls(
            cdb=payload["cdb"],
            vcb=payload["vcb"],
            config=payload["config"],
            lemma_table=payload["lemma_table"],
            stopwords=payload["stopwords"],
            meta_models=payload["meta_models"],
        )


def text_hash(text: str) -> str:
    return hashlib.sha256(text.encode("utf-8")).hexdigest()


def mention_record(m: EntityMention) -> dict:
    return {
        "start": m.start,
        "end": m.end,
        "cui": m.linked_concept,
        "confidence": m.confidence,
        "meta": dict(m.meta),
    }


def annotation_record(doc_id: str, text: str, mentions: list[EntityMention]) -> dict:
    """One line-delimited output record per document."""
    return {
        "doc_id": doc_id,
        "text_hash": text_hash(text),
        "mentions": [mention_record(m) for m in mentions],
    }


def dump_annotation_line(doc_id: str, text: str, mentions: list[EntityMention]) -> str:
    return json.dumps(annotation_record(doc_id, text, mentions), sort_keys=True)
