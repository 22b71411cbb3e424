import numpy as np
import pytest

from stylo_ensemble.corpus import AnnotatedDocument, AnnotatedToken, Corpus


def doc(doc_id, author, surfaces, pos=None, starts=None):
    """Compact document builder for tests."""
    toks = []
    for i, s in enumerate(surfaces):
        toks.append(
            AnnotatedToken(
                surface=s,
                pos=None if pos is None else pos[i],
                phrase_start=False if starts is None else starts[i],
            )
        )
    return AnnotatedDocument(doc_id, author, tuple(toks))


@pytest.fixture
def tiny_corpus():
    return Corpus(
        (
            doc("d1", "X", ["the", "cat", "sat"]),
            doc("d2", "Y", ["a", "dog", "ran"]),
        )
    )


@pytest.fixture
def rng():
    return np.random.default_rng(12345)
