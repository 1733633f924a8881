import numpy as np
import pytest

from conceptlink.store import Vocabulary, VocabEntry


@pytest.fixture
def small_vcb():
    """Tiny vocabulary with hand-set 2-d vectors."""
    vcb = Vocabulary(dim=2)
    vectors = {
        "alpha": [1.0, 0.0],
        "beta": [0.0, 1.0],
        "gamma": [1.0, 1.0],
        "delta": [2.0, 0.0],
        "fever": [0.5, 0.5],
    }
    for word, vec in vectors.items():
        vcb.entries[word] = VocabEntry(count=1, vector=np.asarray(vec))
    return vcb
