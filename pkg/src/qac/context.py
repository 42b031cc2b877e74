"""Document context assembly for the scorer.

Seven context modes of increasing richness, each producing a bounded bundle
of text sections (title, url, document-derived content) with per-section
token budgets of 32 / 32 / 352. The bundle carries both display text and the
truncated token-id sequences that the engine trains the per-document scorer
on, so the budget is exact at the token level.

Modes:
    P             nothing (prefix only; interpolation weight forced to 0)
    P_TU          title + url
    P_TUD         title + url + truncated body
    P_TUK         title + url + extracted keyphrases
    SPARSE_RAG    title + url + top BM25 sentences for the typed prefix
    DENSE_RAG     title + url + top embedding-similar chunks (external vectors)
    REL_DENSE_RAG as DENSE_RAG, also searching chunks of similar documents
    P_TUS         reserved; needs a generative summarizer and is rejected
"""

from __future__ import annotations

import math
import re
from dataclasses import dataclass, field
from typing import Mapping, Sequence

import numpy as np

from .errors import (
    CorruptFileError,
    InvalidInputError,
    UnavailableContextError,
)
from .models import DocumentRecord
from .stopwords import STOPWORDS
from .textnorm import normalize, words
from .tokenizer import TokenizerModel

CONTEXT_MODES = (
    "P",
    "P_TU",
    "P_TUD",
    "P_TUK",
    "SPARSE_RAG",
    "DENSE_RAG",
    "REL_DENSE_RAG",
)
RESERVED_MODES = ("P_TUS",)

TITLE_BUDGET = 32
URL_BUDGET = 32
CONTENT_BUDGET = 352

CHUNK_SIZE = 200
CHUNK_OVERLAP = 30
CHUNK_STRIDE = CHUNK_SIZE - CHUNK_OVERLAP

BM25_K1 = 1.2
BM25_B = 0.75

VECTOR_MAGIC = "QVEC1"

_SENTENCE_SPLIT = re.compile(r"(?<=[.?!])\s+")


@dataclass
class ContextBundle:
    mode: str
    text: str
    token_budget_used: dict[str, int]
    sequences: list[list[int]] = field(default_factory=list)


def split_sentences(body: str) -> list[str]:
    """Split on end punctuation followed by whitespace."""
    return [s for s in _SENTENCE_SPLIT.split(body.strip()) if s]


def extract_keyphrases(
    doc: DocumentRecord, max_n: int = 3, limit: int = 50
) -> list[str]:
    """Top phrases by term-frequency product, damped by first occurrence.

    Candidates are the n-grams (n <= max_n) of maximal stopword-free word
    runs; a phrase first seen in sentence s scores prod(tf(word)) / (1 + s).
    """
    sentences = split_sentences(doc.body)
    tf: dict[str, int] = {}
    for sent in sentences:
        for word in words(sent):
            tf[word] = tf.get(word, 0) + 1
    first_seen: dict[str, int] = {}
    for s_idx, sent in enumerate(sentences):
        run: list[str] = []
        runs: list[list[str]] = []
        for word in words(sent):
            if word in STOPWORDS:
                if run:
                    runs.append(run)
                run = []
            else:
                run.append(word)
        if run:
            runs.append(run)
        for run in runs:
            for n in range(1, max_n + 1):
                for i in range(len(run) - n + 1):
                    phrase = " ".join(run[i : i + n])
                    first_seen.setdefault(phrase, s_idx)
    scored = []
    for phrase, s_idx in first_seen.items():
        score = 1.0
        for word in phrase.split():
            score *= tf[word]
        score /= 1.0 + s_idx
        scored.append((phrase, score))
    scored.sort(key=lambda ps: (-ps[1], ps[0]))
    return [phrase for phrase, _ in scored[:limit]]


def bm25_retrieve(
    doc: DocumentRecord, prefix: str, k: int = 20
) -> list[tuple[str, float]]:
    """Rank the document's own sentences against the typed prefix.

    Standard BM25 (k1=1.2, b=0.75) with idf = ln(1 + (N - n + 0.5)/(n + 0.5))
    computed over the document's sentences; query terms are the whitespace
    tokens of the normalized prefix. Zero-score ties keep document order.
    """
    sentences = split_sentences(doc.body)
    if not sentences:
        return []
    sent_words = [words(s) for s in sentences]
    n_sent = len(sentences)
    avg_len = sum(len(sw) for sw in sent_words) / n_sent
    terms = normalize(prefix).split()
    scores = []
    for idx, sw in enumerate(sent_words):
        counts: dict[str, int] = {}
        for w in sw:
            counts[w] = counts.get(w, 0) + 1
        score = 0.0
        for term in terms:
            tf_term = counts.get(term, 0)
            if tf_term == 0:
                continue
            containing = sum(1 for other in sent_words if term in other)
            idf = math.log(1.0 + (n_sent - containing + 0.5) / (containing + 0.5))
            denom = tf_term + BM25_K1 * (
                1.0 - BM25_B + BM25_B * (len(sw) / avg_len if avg_len else 0.0)
            )
            score += idf * tf_term * (BM25_K1 + 1.0) / denom
        scores.append((idx, score))
    scores.sort(key=lambda pair: (-pair[1], pair[0]))
    return [(sentences[idx], score) for idx, score in scores[:k]]


def chunk_spans(body: str) -> list[tuple[int, int]]:
    """Fixed 200-character windows with 30-character overlap (stride 170)."""
    spans = []
    offset = 0
    while offset < len(body):
        spans.append((offset, min(offset + CHUNK_SIZE, len(body))))
        offset += CHUNK_STRIDE
    return spans


def chunk_texts(body: str) -> list[str]:
    return [body[a:b] for a, b in chunk_spans(body)]


def cosine(a: np.ndarray, b: np.ndarray) -> float:
    na = float(np.linalg.norm(a))
    nb = float(np.linalg.norm(b))
    if na == 0.0 or nb == 0.0:
        return 0.0
    return float(np.dot(a, b) / (na * nb))


class VectorTable:
    """External embedding table keyed by `doc_id#chunk` or literal strings."""

    def __init__(self, dim: int, vectors: dict[str, np.ndarray]):
        self.dim = dim
        self.vectors = vectors

    def get(self, key: str) -> np.ndarray | None:
        return self.vectors.get(key)

    def chunk_vectors(self, doc_id: str, n_chunks: int) -> list[np.ndarray]:
        out = []
        for i in range(n_chunks):
            vec = self.vectors.get(f"{doc_id}#{i}")
            if vec is None:
                raise UnavailableContextError(
                    f"missing vector for chunk {doc_id}#{i}"
                )
            out.append(vec)
        return out


def load_vectors(path: str) -> VectorTable:
    with open(path, "r", encoding="utf-8") as fh:
        lines = fh.read().splitlines()
    if not lines:
        raise CorruptFileError("empty vector file")
    header = lines[0].split(" ")
    if len(header) != 2 or header[0] != VECTOR_MAGIC:
        raise CorruptFileError(f"bad vector file magic in {path}")
    try:
        dim = int(header[1])
    except ValueError as exc:
        raise CorruptFileError("bad vector dimension") from exc
    vectors: dict[str, np.ndarray] = {}
    for line in lines[1:]:
        if not line:
            continue
        key, _, csv = line.partition("\t")
        if not csv:
            raise CorruptFileError(f"malformed vector line for key {key!r}")
        vec = np.array([float(x) for x in csv.split(",")], dtype=np.float64)
        if vec.shape[0] != dim:
            raise CorruptFileError(
                f"vector for {key!r} has dimension {vec.shape[0]}, expected {dim}"
            )
        vectors[key] = vec
    return VectorTable(dim, vectors)


def save_vectors(table: VectorTable, path: str) -> None:
    lines = [f"{VECTOR_MAGIC} {table.dim}"]
    for key in sorted(table.vectors):
        csv = ",".join(repr(float(x)) for x in table.vectors[key])
        lines.append(f"{key}\t{csv}")
    with open(path, "w", encoding="utf-8") as fh:
        fh.write("\n".join(lines) + "\n")


def dense_retrieve(
    doc: DocumentRecord,
    vectors: VectorTable | None,
    prefix_vector: np.ndarray | None,
    k: int = 20,
) -> list[tuple[str, float]]:
    """Top-k body chunks by cosine similarity to the prefix embedding."""
    if vectors is None or prefix_vector is None:
        raise UnavailableContextError("dense retrieval needs external vectors")
    if prefix_vector.shape[0] != vectors.dim:
        raise UnavailableContextError(
            f"prefix vector dimension {prefix_vector.shape[0]} != {vectors.dim}"
        )
    chunks = chunk_texts(doc.body)
    chunk_vecs = vectors.chunk_vectors(doc.doc_id, len(chunks))
    sims = [
        (i, cosine(prefix_vector, vec)) for i, vec in enumerate(chunk_vecs)
    ]
    sims.sort(key=lambda pair: (-pair[1], pair[0]))
    return [(chunks[i], sim) for i, sim in sims[:k]]


def _doc_embedding(
    doc: DocumentRecord, vectors: VectorTable
) -> np.ndarray | None:
    chunks = chunk_texts(doc.body)
    if not chunks:
        return None
    try:
        vecs = vectors.chunk_vectors(doc.doc_id, len(chunks))
    except UnavailableContextError:
        return None
    return np.mean(vecs, axis=0)


def related_dense_retrieve(
    doc: DocumentRecord,
    corpus: Mapping[str, DocumentRecord],
    vectors: VectorTable | None,
    prefix_vector: np.ndarray | None,
    k: int = 20,
    n_related: int = 10,
) -> list[tuple[str, float]]:
    """Dense retrieval over this document plus its most similar neighbors.

    Documents are compared by the mean of their chunk embeddings (the table
    carries no document-level keys).
    """
    if vectors is None or prefix_vector is None:
        raise UnavailableContextError("dense retrieval needs external vectors")
    own = _doc_embedding(doc, vectors)
    if own is None:
        raise UnavailableContextError(f"no chunk vectors for {doc.doc_id}")
    neighbors = []
    for other_id in sorted(corpus):
        if other_id == doc.doc_id:
            continue
        emb = _doc_embedding(corpus[other_id], vectors)
        if emb is not None:
            neighbors.append((other_id, cosine(own, emb)))
    neighbors.sort(key=lambda pair: (-pair[1], pair[0]))
    pool_docs = [doc] + [corpus[did] for did, _ in neighbors[:n_related]]
    pooled: list[tuple[str, float]] = []
    for record in pool_docs:
        chunks = chunk_texts(record.body)
        if not chunks:
            continue
        vecs = vectors.chunk_vectors(record.doc_id, len(chunks))
        pooled.extend(
            (chunk, cosine(prefix_vector, vec))
            for chunk, vec in zip(chunks, vecs)
        )
    pooled.sort(key=lambda pair: (-pair[1], pair[0]))
    return pooled[:k]


def _section(tok: TokenizerModel, text: str, budget: int) -> tuple[str, list[int]]:
    # Pre-trim very long text; the cut is far past the token budget, so the
    # kept tokens are unaffected.
    ids = tok.encode(text[: budget * 24])[:budget]
    return tok.decode(ids), ids


def assemble_context(
    doc: DocumentRecord,
    mode: str,
    prefix: str,
    tok: TokenizerModel,
    *,
    vectors: VectorTable | None = None,
    corpus: Mapping[str, DocumentRecord] | None = None,
) -> ContextBundle:
    """Build the bounded context bundle for one completion request."""
    mode = mode.upper()
    if mode in RESERVED_MODES:
        raise InvalidInputError(
            "context mode P_TUS requires an external summary generator and "
            "is not available"
        )
    if mode not in CONTEXT_MODES:
        raise InvalidInputError(f"unknown context mode {mode!r}")
    if mode == "P":
        return ContextBundle("P", "", {"title": 0, "url": 0, "content": 0})

    title_text, title_ids = _section(tok, normalize(doc.title), TITLE_BUDGET)
    url_text, url_ids = _section(tok, doc.url.lower(), URL_BUDGET)

    if mode == "P_TU":
        content_raw = ""
    elif mode == "P_TUD":
        content_raw = normalize(doc.body)
    elif mode == "P_TUK":
        content_raw = "; ".join(extract_keyphrases(doc))
    elif mode == "SPARSE_RAG":
        content_raw = " ".join(
            normalize(sent) for sent, _ in bm25_retrieve(doc, prefix)
        )
    else:  # DENSE_RAG | REL_DENSE_RAG
        prefix_vector = None
        if vectors is not None:
            prefix_vector = vectors.get(normalize(prefix))
            if prefix_vector is None:
                prefix_vector = vectors.get(prefix)
        if mode == "DENSE_RAG":
            ranked = dense_retrieve(doc, vectors, prefix_vector)
        else:
            ranked = related_dense_retrieve(
                doc, corpus or {}, vectors, prefix_vector
            )
        content_raw = " ".join(normalize(chunk) for chunk, _ in ranked)

    content_text, content_ids = _section(tok, content_raw, CONTENT_BUDGET)
    pieces = [p for p in (title_text, url_text, content_text) if p]
    sequences = [ids for ids in (title_ids, url_ids, content_ids) if ids]
    return ContextBundle(
        mode=mode,
        text=" ".join(pieces),
        token_budget_used={
            "title": len(title_ids),
            "url": len(url_ids),
            "content": len(content_ids),
        },
        sequences=sequences,
    )
