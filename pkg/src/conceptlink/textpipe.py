"""Tokenization, normalization and spell correction for input text.

All downstream matching operates on the normalized token stream produced
here. Offsets always index into the original document so annotations can
be rendered against the source text.
"""

from __future__ import annotations

import re
from dataclasses import dataclass, field
from typing import Optional

# Words, optionally with internal apostrophes, or single non-space
# punctuation characters. Alphanumeric runs are kept intact.
_TOKEN_RE = re.compile(r"\w+(?:'\w+)*|[^\w\s]", re.UNICODE)

# Pinned built-in stopword list (overridable via config file). Matching
# and context windows depend on this, so it must be stable.
DEFAULT_STOPWORDS = frozenset(
    """a an and are as at be but by for from had has have he her his i if in
    into is it its no not of on or s she that the their there they this to
    was were will with""".split()
)


@dataclass
class Token:
    text: str
    norm: str
    start: int
    end: int
    is_stopword: bool = False
    was_corrected: bool = False

    @property
    def is_punct(self) -> bool:
        return self.norm == ""


@dataclass
class TokenizedDocument:
    doc_id: str
    text: str
    tokens: list[Token] = field(default_factory=list)

    def matchable(self) -> list[tuple[int, Token]]:
        """Non-punctuation tokens with their indices in ``tokens``."""
        return [(i, t) for i, t in enumerate(self.tokens) if not t.is_punct]


def is_abbreviation(word: str) -> bool:
    """All-uppercase short words are treated as abbreviations."""
    return word.isupper() and word.isalpha() and len(word) <= 5


def normalize_word(word: str, lemma_table: Optional[dict[str, str]] = None) -> str:
    low = word.lower()
    if lemma_table:
        return lemma_table.get(low, low)
    return low


def tokenize(
    text: str,
    doc_id: str = "",
    lemma_table: Optional[dict[str, str]] = None,
    stopwords: Optional[frozenset[str]] = None,
) -> TokenizedDocument:
    """Split ``text`` into tokens with exact offsets and normalized forms.

    Pure punctuation tokens get an empty norm and are excluded from
    matching. Deterministic for a given input.
    """
    stops = DEFAULT_STOPWORDS if stopwords is None else stopwords
    tokens = []
    for m in _TOKEN_RE.finditer(text):
        raw = m.group(0)
        if raw[0].isalnum() or raw[0] == "_":
            norm = normalize_word(raw, lemma_table)
        else:
            norm = ""
        tokens.append(
            Token(
                text=raw,
                norm=norm,
                start=m.start(),
                end=m.end(),
                is_stopword=norm in stops if norm else False,
            )
        )
    return TokenizedDocument(doc_id=doc_id, text=text, tokens=tokens)


def edit_distance(a: str, b: str, limit: int | None = None) -> int:
    """Levenshtein distance with an optional early-exit band."""
    if a == b:
        return 0
    if limit is not None and abs(len(a) - len(b)) > limit:
        return limit + 1
    prev = list(range(len(b) + 1))
    for i, ca in enumerate(a, 1):
        cur = [i]
        best = i
        for j, cb in enumerate(b, 1):
            cost = min(prev[j] + 1, cur[j - 1] + 1, prev[j - 1] + (ca != cb))
            cur.append(cost)
            best = min(best, cost)
        if limit is not None and best > limit:
            return limit + 1
        prev = cur
    return prev[-1]


def allowed_edits(word: str) -> int:
    """Correction budget: 1 change for short words, 2 otherwise."""
    return 1 if len(word) < 6 else 2


def spell_correct(
    word: str,
    vcb,
    cdb_words: set[str] | frozenset[str],
) -> Optional[str]:
    """Return a corrected word, or None when no correction applies.

    A word is spelled against the vocabulary but corrected only against
    the words occurring in concept names. Abbreviations are never
    corrected. The edit budget grows with word length. Ties among
    candidates go to the highest corpus frequency, then lexicographic.
    """
    if not word or not word.isalpha():
        return None
    if is_abbreviation(word):
        return None
    low = word.lower()
    if vcb is not None and low in vcb:
        return None
    budget = allowed_edits(word)
    candidates = [
        c for c in cdb_words
        if c != low
        and abs(len(c) - len(low)) <= budget
        and edit_distance(low, c, limit=budget) <= budget
    ]
    if not candidates:
        return None

    def rank(c: str):
        freq = vcb.count(c) if vcb is not None else 0
        return (-freq, c)

    return min(candidates, key=rank)


def load_lemma_table(path) -> dict[str, str]:
    """Read a two-column surface<TAB>lemma file."""
    table = {}
    with open(path, encoding="utf-8") as fh:
        for line in fh:
            line = line.rstrip("\n")
            if not line:
                continue
            surface, _, lemma = line.partition("\t")
            if surface and lemma:
                table[surface.lower()] = lemma.lower()
    return table


def load_stopwords(path) -> frozenset[str]:
    with open(path, encoding="utf-8") as fh:
        return frozenset(w.strip().lower() for w in fh if w.strip())


class Pipeline:
    """Tokenize + normalize + spell-correct, configured once per model."""

    def __init__(
        self,
        lemma_table: Optional[dict[str, str]] = None,
        stopwords: Optional[frozenset[str]] = None,
        vcb=None,
        cdb_words: Optional[frozenset[str]] = None,
    ):
        self.lemma_table = lemma_table or {}
        self.stopwords = DEFAULT_STOPWORDS if stopwords is None else stopwords
        self.vcb = vcb
        self.cdb_words = cdb_words or frozenset()
        self._correction_cache: dict[str, Optional[str]] = {}

    def __call__(self, text: str, doc_id: str = "") -> TokenizedDocument:
        doc = tokenize(text, doc_id, self.lemma_table, self.stopwords)
        if self.cdb_words:
            for tok in doc.tokens:
                if tok.is_punct or tok.norm in self.cdb_words:
                    continue
                if self.vcb is not None and tok.norm in self.vcb:
                    continue
                fixed = self._correct(tok.text)
                if fixed is not None:
                    tok.norm = fixed
                    tok.was_corrected = True
                    tok.is_stopword = fixed in self.stopwords
        return doc

    def _correct(self, word: str) -> Optional[str]:
        hit = self._correction_cache.get(word, _MISS)
        if hit is not _MISS:
            return hit
        fixed = spell_correct(word, self.vcb, self.cdb_words)
        self._correction_cache[word] = fixed
        return fixed

    def normalize_name(self, name: str) -> list[str]:
        """Normalized token list for a concept name (punctuation dropped)."""
        doc = tokenize(name, "", self.lemma_table, self.stopwords)
        return [t.norm for t in doc.tokens if not t.is_punct]


_MISS = object()
