"""Deterministic synthetic corpus for demos, tests, and the acceptance run.

Roughly 200 documents and 5,000 weighted queries, generated from a fixed
seed. Documents cluster into topics that share query phrases, so the
seen/unseen quadrants are all populated: a held-out (query, doc) pair's
query usually recurs with other documents of the same topic.
"""

from __future__ import annotations

import random

from .models import DocumentRecord, QueryDocPair, WeightedQuery

_CONSONANTS = "bcdfghklmnprstvz"
_VOWELS = "aeiou"

DEFAULT_SEED = 7


def _make_word(rng: random.Random) -> str:
    n_syllables = rng.randint(2, 4)
    parts = []
    for _ in range(n_syllables):
        parts.append(rng.choice(_CONSONANTS))
        parts.append(rng.choice(_VOWELS))
        if rng.random() < 0.25:
            parts.append(rng.choice(_CONSONANTS))
    return "".join(parts)


def generate_corpus(
    n_docs: int = 200,
    n_queries: int = 5000,
    seed: int = DEFAULT_SEED,
    n_topics: int = 25,
) -> tuple[list[DocumentRecord], list[QueryDocPair]]:
    """Build documents and clicked (query, doc) pairs.

    Every document receives 11..40 queries drawn mostly from its topic's
    shared phrase pool (plus a few unique ones), with Zipf-flavored click
    counts. Totals land near the requested n_queries.
    """
    rng = random.Random(seed)
    words = []
    seen_words = set()
    while len(words) < n_topics * 14:
        word = _make_word(rng)
        if word not in seen_words:
            seen_words.add(word)
            words.append(word)
    topics = [words[i * 14 : (i + 1) * 14] for i in range(n_topics)]

    glue = ["guide", "manual", "notes", "report", "summary", "index"]

    topic_phrases: list[list[str]] = []
    for topic in topics:
        pool = set()
        while len(pool) < 70:
            n_words = rng.choice((2, 2, 3))
            phrase = " ".join(rng.sample(topic, n_words))
            pool.add(phrase)
        topic_phrases.append(sorted(pool))

    per_doc = max(11, round(n_queries / n_docs))
    docs: list[DocumentRecord] = []
    pairs: list[QueryDocPair] = []
    for d in range(n_docs):
        t = d % n_topics
        topic = topics[t]
        doc_id = f"d{d:03d}"
        title_words = rng.sample(topic, 2) + [rng.choice(glue)]
        title = " ".join(title_words)
        url = f"https://docs.example.com/{topic[0]}/{doc_id}"
        sentences = []
        for _ in range(rng.randint(5, 9)):
            length = rng.randint(6, 11)
            sent_words = [rng.choice(topic) for _ in range(length)]
            if rng.random() < 0.5:
                sent_words.insert(rng.randrange(length), rng.choice(glue))
            sentences.append(" ".join(sent_words) + ".")
        body = " ".join(sentences)

        n_doc_queries = rng.randint(per_doc - 8, per_doc + 8)
        n_doc_queries = max(11, n_doc_queries)
        shared = rng.sample(topic_phrases[t], min(n_doc_queries - 2, 60))
        unique = []
        while len(unique) < n_doc_queries - len(shared):
            phrase = " ".join(rng.sample(topic, rng.choice((2, 3))))
            if phrase not in shared and phrase not in unique:
                unique.append(phrase)
        queries = []
        for rank, text in enumerate(shared + unique):
            clicks = round(90.0 / (1 + rank) ** 1.1 + 1, 2)
            queries.append(WeightedQuery(text, clicks))
            pairs.append(
                QueryDocPair(
                    query=WeightedQuery(text, clicks),
                    doc_id=doc_id,
                    origin="clicked",
                )
            )
        docs.append(
            DocumentRecord(
                doc_id=doc_id, url=url, title=title, body=body, queries=queries
            )
        )
    return docs, pairs
