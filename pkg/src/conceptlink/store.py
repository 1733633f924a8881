"""Vocabulary and concept database.

The vocabulary maps words to corpus frequencies and optional word
vectors; it drives spell checking and context embeddings. The concept
database maps concept IDs to their names and learned per-concept state,
plus the name/prefix indexes the expanding-window matcher needs.
"""

from __future__ import annotations

import csv
import hashlib
import logging
from dataclasses import dataclass, field
from typing import Iterable, Iterator, Optional

import numpy as np

from . import serialization
from .errors import BuildError, DimensionMismatchError
from .textpipe import Pipeline, is_abbreviation

log = logging.getLogger(__name__)

DEFAULT_DIM = 300

NAME_SEP = " "


def fallback_vector(word: str, dim: int) -> np.ndarray:
    """Deterministic pseudo-random unit vector for words without a
    pretrained embedding, seeded by a stable hash of the word."""
    digest = hashlib.blake2b(word.encode("utf-8"), digest_size=8).digest()
    rng = np.random.default_rng(int.from_bytes(digest, "little"))
    v = rng.standard_normal(dim)
    return v / np.linalg.norm(v)


@dataclass
class VocabEntry:
    count: int
    vector: Optional[np.ndarray] = None
    is_fallback: bool = False


class Vocabulary:
    """Word -> corpus frequency + optional dense vector."""

    def __init__(self, dim: int = DEFAULT_DIM):
        self.dim = dim
        self.entries: dict[str, VocabEntry] = {}

    def __contains__(self, word: str) -> bool:
        return word in self.entries

    def __len__(self) -> int:
        return len(self.entries)

    def __iter__(self) -> Iterator[str]:
        return iter(self.entries)

    def count(self, word: str) -> int:
        entry = self.entries.get(word)
        return entry.count if entry else 0

    def add(self, word: str, count: int = 1) -> None:
        if not word:
            raise ValueError("empty word")
        word = word.lower()
        entry = self.entries.get(word)
        if entry is None:
            self.entries[word] = VocabEntry(count=count)
        else:
            entry.count += count

    def vector(self, word: str) -> np.ndarray:
        """Stored vector, or the deterministic fallback (cached)."""
        entry = self.entries.get(word)
        if entry is not None and entry.vector is not None:
            return entry.vector
        vec = fallback_vector(word, self.dim)
        if entry is not None:
            entry.vector = vec
            entry.is_fallback = True
        return vec


def build_vcb(corpus: Iterable[str], min_count: int = 1, dim: int = DEFAULT_DIM) -> Vocabulary:
    """Count tokens from a token stream; keep those at or above min_count."""
    counts: dict[str, int] = {}
    total = 0
    for tok in corpus:
        tok = tok.lower()
        if not tok:
            continue
        counts[tok] = counts.get(tok, 0) + 1
        total += 1
    if total == 0:
        raise BuildError("empty corpus: no tokens to build a vocabulary from")
    vcb = Vocabulary(dim=dim)
    for word, c in counts.items():
        if c >= min_count:
            vcb.entries[word] = VocabEntry(count=c)
    return vcb


def attach_vectors(vcb: Vocabulary, path) -> Vocabulary:
    """Attach word vectors from a text file ("<size> <dim>" header, then
    one "<word> <f1> ... <fD>" line per word). Words missing from the
    file keep a deterministic fallback vector, flagged as such."""
    vectors: dict[str, np.ndarray] = {}
    dim = None
    with open(path, encoding="utf-8") as fh:
        header = fh.readline().split()
        if len(header) == 2 and all(p.isdigit() for p in header):
            dim = int(header[1])
        else:
            fh.seek(0)
        for line in fh:
            parts = line.rstrip().split()
            if not parts:
                continue
            word, values = parts[0], parts[1:]
            if dim is None:
                dim = len(values)
            if len(values) != dim:
                raise DimensionMismatchError(
                    f"vector for {word!r} has dimension {len(values)}, expected {dim}"
                )
            vectors[word.lower()] = np.asarray([float(x) for x in values])
    if dim is not None:
        vcb.dim = dim
    for word, entry in vcb.entries.items():
        vec = vectors.get(word)
        if vec is not None:
            entry.vector = vec
            entry.is_fallback = False
        else:
            entry.vector = fallback_vector(word, vcb.dim)
            entry.is_fallback = True
    return vcb


@dataclass
class ConceptName:
    raw: str
    normalized_tokens: list[str]
    status: str = "synonym"  # "preferred" | "synonym"
    is_abbreviation: bool = False
    is_unique: bool = True

    @property
    def key(self) -> str:
        return NAME_SEP.join(self.normalized_tokens)


@dataclass
class ConceptRecord:
    concept_id: str
    names: list[ConceptName] = field(default_factory=list)
    type_ids: set[str] = field(default_factory=set)
    vector_long: Optional[np.ndarray] = None
    vector_short: Optional[np.ndarray] = None
    train_count: int = 0

    @property
    def is_trained(self) -> bool:
        return self.train_count > 0


class ConceptDatabase:
    """Concept records plus derived name and prefix indexes."""

    def __init__(self):
        self.concepts: dict[str, ConceptRecord] = {}
        self.name_index: dict[str, set[str]] = {}
        self.subname_index: set[str] = set()
        # Reorder matching support: names with <= 2 non-stopword tokens,
        # keyed by the sorted non-stopword tokens.
        self.reorder_index: dict[str, set[str]] = {}
        self.reorder_subnames: set[str] = set()
        # key -> True when any name with that key is an abbreviation
        self.abbrev_keys: set[str] = set()
        self._stopwords: frozenset[str] = frozenset()

    def add_name(
        self,
        concept_id: str,
        raw: str,
        tokens: list[str],
        status: str = "synonym",
        abbreviation: Optional[bool] = None,
    ) -> None:
        record = self.concepts.get(concept_id)
        if record is None:
            record = ConceptRecord(concept_id=concept_id)
            self.concepts[concept_id] = record
        if abbreviation is None:
            abbreviation = is_abbreviation(raw)
        name = ConceptName(
            raw=raw,
            normalized_tokens=tokens,
            status=status,
            is_abbreviation=abbreviation,
        )
        if any(n.key == name.key for n in record.names):
            return
        record.names.append(name)

    def rebuild_indexes(self, stopwords: frozenset[str] = frozenset()) -> None:
        self._stopwords = stopwords
        self.name_index = {}
        self.subname_index = set()
        self.reorder_index = {}
        self.reorder_subnames = set()
        self.abbrev_keys = set()
        for cui, record in self.concepts.items():
            for name in record.names:
                self.name_index.setdefault(name.key, set()).add(cui)
                if name.is_abbreviation:
                    self.abbrev_keys.add(name.key)
                toks = name.normalized_tokens
                for k in range(1, len(toks)):
                    self.subname_index.add(NAME_SEP.join(toks[:k]))
                content = sorted(t for t in toks if t not in stopwords)
                if 1 <= len(content) <= 2:
                    rkey = NAME_SEP.join(content)
                    self.reorder_index.setdefault(rkey, set()).add(cui)
                    if len(content) == 2:
                        for t in content:
                            self.reorder_subnames.add(t)
        for record in self.concepts.values():
            for name in record.names:
                name.is_unique = len(self.name_index[name.key]) == 1

    def name_words(self) -> frozenset[str]:
        """All normalized tokens appearing in any concept name (the set
        spell correction targets)."""
        words = set()
        for record in self.concepts.values():
            for name in record.names:
                words.update(name.normalized_tokens)
        return frozenset(words)

    def unique_nonabbrev_keys(self) -> dict[str, str]:
        """Name key -> concept id, for names usable as self-supervised
        training anchors (unique and not abbreviations)."""
        out = {}
        for cui, record in self.concepts.items():
            for name in record.names:
                if name.is_unique and not name.is_abbreviation:
                    out[name.key] = cui
        return out


def build_cdb(
    rows: Iterable[tuple],
    pipeline: Optional[Pipeline] = None,
    stopwords: Optional[frozenset[str]] = None,
) -> ConceptDatabase:
    """Build a concept database from (concept_id, name[, type_ids[,
    name_status]]) rows. Malformed rows are logged and skipped; zero
    valid rows is a hard error."""
    pipeline = pipeline or Pipeline()
    stops = pipeline.stopwords if stopwords is None else stopwords
    cdb = ConceptDatabase()
    valid = 0
    for lineno, row in enumerate(rows, 1):
        row = tuple(row)
        if len(row) < 2 or not str(row[0]).strip() or not str(row[1]).strip():
            log.warning("skipping malformed concept row %d: %r", lineno, row)
            continue
        cui, raw = str(row[0]).strip(), str(row[1]).strip()
        type_ids = set()
        if len(row) > 2 and row[2]:
            type_ids = {t.strip() for t in str(row[2]).split("|") if t.strip()}
        status = "synonym"
        abbrev = None
        if len(row) > 3 and row[3]:
            flags = str(row[3]).strip().lower()
            if "p" in flags or flags == "preferred":
                status = "preferred"
            if "a" in flags or flags == "abbreviation":
                abbrev = True
        tokens = pipeline.normalize_name(raw)
        if not tokens:
            log.warning("skipping concept row %d: name normalizes to nothing", lineno)
            continue
        cdb.add_name(cui, raw, tokens, status=status, abbreviation=abbrev)
        cdb.concepts[cui].type_ids.update(type_ids)
        valid += 1
    if valid == 0:
        raise BuildError("no valid concept rows")
    cdb.rebuild_indexes(stops)
    return cdb


def read_cdb_csv(path) -> Iterator[tuple]:
    """Yield concept rows from a UTF-8 CSV with header
    cui,name,type_ids,name_status."""
    with open(path, encoding="utf-8", newline="") as fh:
        reader = csv.DictReader(fh)
        if reader.fieldnames is None or "cui" not in reader.fieldnames:
            raise BuildError(f"{path}: expected a CSV header with a 'cui' column")
        for row in reader:
            yield (
                row.get("cui", ""),
                row.get("name", ""),
                row.get("type_ids", ""),
                row.get("name_status", ""),
            )


def save_model(path, cdb: ConceptDatabase, vcb: Vocabulary, extra: Optional[dict] = None) -> None:
    payload = {"cdb": cdb, "vcb": vcb, "extra": extra or {}}
    serialization.save_payload(path, payload)


def load_model(path) -> tuple[ConceptDatabase, Vocabulary, dict]:
    payload = serialization.load_payload(path)
    return payload["cdb"], payload["vcb"], payload.get("extra", {})
