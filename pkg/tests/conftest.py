import random

import pytest

from qac.models import WeightedQuery
from qac.scorer import train_ngram
from qac.tokenizer import EOS_ID, train_bpe


@pytest.fixture(scope="session")
def tiny_queries():
    return [
        WeightedQuery("paris tourism", 5),
        WeightedQuery("paris history", 3),
        WeightedQuery("python", 7),
    ]


@pytest.fixture(scope="session")
def tiny_tok(tiny_queries):
    return train_bpe([q.text for q in tiny_queries], 40)


@pytest.fixture(scope="session")
def tiny_lm(tiny_tok, tiny_queries):
    seqs = []
    for q in tiny_queries * 3:
        for i in range(1, len(q.text)):
            seqs.append(tiny_tok.encode_split(q.text[:i], q.text[i:]) + [EOS_ID])
    return train_ngram(seqs, 4, tiny_tok.vocab_size, 0.75)


def random_queries(rng: random.Random, n: int, alphabet="abcdef "):
    """Random normalized-ish query strings of length 3..14."""
    out = []
    while len(out) < n:
        length = rng.randint(3, 14)
        text = "".join(rng.choice(alphabet) for _ in range(length))
        text = " ".join(text.split())
        if len(text) >= 3:
            out.append(text)
    return out
