"""Context embeddings and vector similarity.

A mention's context embedding is the average of the word vectors of up
to ``s`` non-stopword tokens on each side plus the mention's own tokens,
normalized by the number of vectors actually used (windows truncate at
document edges). Similarity is cosine clamped at zero.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Optional

import numpy as np

from .errors import DimensionMismatchError
from .store import Vocabulary
from .textpipe import TokenizedDocument


@dataclass
class ContextEmbedding:
    vector: np.ndarray
    scope: str  # "long" | "short"
    n_words_used: int


def cosine_sim_clamped(a: np.ndarray, b: np.ndarray) -> float:
    """max(0, cos(a, b)); zero-norm inputs give 0 instead of NaN."""
    a = np.asarray(a, dtype=float)
    b = np.asarray(b, dtype=float)
    if a.shape != b.shape:
        raise DimensionMismatchError(f"dimension mismatch: {a.shape} vs {b.shape}")
    na = np.linalg.norm(a)
    nb = np.linalg.norm(b)
    if na == 0.0 or nb == 0.0:
        return 0.0
    # the upper clamp guards against values like 1 + 1e-16 from rounding
    return float(min(1.0, max(0.0, np.dot(a, b) / (na * nb))))


def compute_context(
    doc: TokenizedDocument,
    token_span: tuple[int, int],
    s: int,
    vcb: Vocabulary,
    scope: str = "long",
) -> Optional[ContextEmbedding]:
    """Average word vectors around a mention.

    ``token_span`` is (first, last) index into doc.tokens, inclusive.
    Stopwords and punctuation neither contribute nor occupy window
    slots. Returns None when no usable token exists ("no-context").
    """
    if s < 1:
        raise ValueError("window size must be >= 1")
    first, last = token_span
    vectors = []

    def usable(tok) -> bool:
        return not tok.is_punct and not tok.is_stopword

    # left side, nearest-first until s non-stopword tokens are taken
    taken = 0
    for i in range(first - 1, -1, -1):
        if taken >= s:
            break
        tok = doc.tokens[i]
        if usable(tok):
            vectors.append(vcb.vector(tok.norm))
            taken += 1
    # mention's own tokens
    for i in range(first, last + 1):
        tok = doc.tokens[i]
        if usable(tok):
            vectors.append(vcb.vector(tok.norm))
    # right side
    taken = 0
    for i in range(last + 1, len(doc.tokens)):
        if taken >= s:
            break
        tok = doc.tokens[i]
        if usable(tok):
            vectors.append(vcb.vector(tok.norm))
            taken += 1

    if not vectors:
        return None
    mean = np.mean(np.stack(vectors), axis=0)
    return ContextEmbedding(vector=mean, scope=scope, n_words_used=len(vectors))
