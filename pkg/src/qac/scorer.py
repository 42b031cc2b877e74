"""Token scorer: smoothed n-gram language model with document interpolation.

The decoder consumes any object exposing

    logits(ctx: ScorerContext, tokens: Sequence[int]) -> np.ndarray

returning a log-probability vector over the full vocabulary (entries must
exponentiate to a distribution). The shipped implementation is an n-gram
model with absolute discounting and recursive backoff down to a uniform
floor, which normalizes exactly by construction:

    P(v | c) = max(count(c, v) - D, 0) / total(c)
             + D * distinct(c) / total(c) * P(v | c[1:])

Document context enters as a linear interpolation: the per-request context
text is used to train a small n-gram over the same vocabulary, and the
served distribution is (1 - lambda) * P_global + lambda * P_doc. This is a
deliberate, exactly-specified stand-in for conditioning a neural encoder on
the document.
"""

from __future__ import annotations

import base64
import io
import json
import subprocess
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from .binio import (
    expect_eof,
    expect_magic,
    read_f64,
    read_u32,
    read_varint,
    write_f64,
    write_u32,
    write_varint,
)
from .errors import CorruptFileError, InvalidInputError

NGRAM_MAGIC = b"QNGRM1"


class NgramModel:
    """Absolute-discount n-gram model over token ids."""

    def __init__(
        self,
        order: int,
        vocab_size: int,
        discount: float,
        counts: dict[tuple[int, ...], dict[int, int]],
    ):
        if order < 2:
            raise InvalidInputError("order must be at least 2")
        if not 0.0 < discount < 1.0:
            raise InvalidInputError("discount must lie in (0, 1)")
        self.order = order
        self.vocab_size = vocab_size
        self.discount = discount
        self.counts = counts
        self._totals = {
            ctx: (sum(table.values()), len(table)) for ctx, table in counts.items()
        }

    def prob_vector(self, context: Sequence[int]) -> np.ndarray:
        """Full-vocabulary distribution after truncating the context."""
        ctx = tuple(context[-(self.order - 1) :]) if self.order > 1 else ()
        p = np.full(self.vocab_size, 1.0 / self.vocab_size)
        for length in range(len(ctx) + 1):
            sub = ctx[len(ctx) - length :]
            table = self.counts.get(sub)
            if not table:
                continue
            total, distinct = self._totals[sub]
            vec = np.zeros(self.vocab_size)
            for token, count in table.items():
                vec[token] = max(count - self.discount, 0.0) / total
            p = vec + (self.discount * distinct / total) * p
        return p

    def logits(self, ctx: "ScorerContext | None", tokens: Sequence[int]) -> np.ndarray:
        """Log of the (optionally document-interpolated) next-token distribution."""
        span = self.order - 1
        if ctx is not None and ctx.doc_model is not None:
            span = max(span, ctx.doc_model.order - 1)
        key = tuple(tokens[-span:])
        if ctx is not None:
            cached = ctx.cache.get(key)
            if cached is not None:
                return cached
        p = self.prob_vector(key)
        if ctx is not None and ctx.doc_model is not None and ctx.lam > 0.0:
            p_doc = ctx.doc_model.prob_vector(tokens)
            p = (1.0 - ctx.lam) * p + ctx.lam * p_doc
        logp = np.log(p)
        if ctx is not None:
            if len(ctx.cache) > ctx.cache_limit:
                ctx.cache.clear()
            ctx.cache[key] = logp
        return logp


@dataclass
class ScorerContext:
    """Document conditioning for one request: doc model plus mixing weight."""

    doc_model: NgramModel | None = None
    lam: float = 0.0
    doc_id: str | None = None
    cache: dict = field(default_factory=dict)
    cache_limit: int = 50000

    def __post_init__(self):
        if self.doc_model is None:
            self.lam = 0.0
        if not 0.0 <= self.lam <= 1.0:
            raise InvalidInputError("lambda must lie in [0, 1]")


def train_ngram(
    sequences: Sequence[Sequence[int]],
    order: int,
    vocab_size: int,
    discount: float = 0.75,
) -> NgramModel:
    """Accumulate counts for every context length 0..order-1 (for backoff)."""
    sequences = [list(s) for s in sequences if len(s) > 0]
    if not sequences:
        raise InvalidInputError("no training sequences")
    counts: dict[tuple[int, ...], dict[int, int]] = {}
    for seq in sequences:
        for t, token in enumerate(seq):
            for length in range(min(t, order - 1) + 1):
                ctx = tuple(seq[t - length : t])
                table = counts.setdefault(ctx, {})
                table[token] = table.get(token, 0) + 1
    return NgramModel(order, vocab_size, discount, counts)


def save_ngram(model: NgramModel, path: str) -> None:
    out = io.BytesIO()
    out.write(NGRAM_MAGIC)
    write_u32(out, model.order)
    write_u32(out, model.vocab_size)
    write_f64(out, model.discount)
    write_u32(out, len(model.counts))
    for ctx in sorted(model.counts, key=lambda c: (len(c), c)):
        table = model.counts[ctx]
        write_varint(out, len(ctx))
        for token in ctx:
            write_varint(out, token)
        write_varint(out, len(table))
        for token in sorted(table):
            write_varint(out, token)
            write_varint(out, table[token])
    with open(path, "wb") as fh:
        fh.write(out.getvalue())


def load_ngram(path: str) -> NgramModel:
    with open(path, "rb") as fh:
        buf = io.BytesIO(fh.read())
    expect_magic(buf, NGRAM_MAGIC)
    order = read_u32(buf)
    vocab_size = read_u32(buf)
    discount = read_f64(buf)
    n_contexts = read_u32(buf)
    counts: dict[tuple[int, ...], dict[int, int]] = {}
    for _ in range(n_contexts):
        ctx_len = read_varint(buf)
        if ctx_len >= order:
            raise CorruptFileError("context longer than model order")
        ctx = tuple(read_varint(buf) for _ in range(ctx_len))
        n_entries = read_varint(buf)
        table = {}
        for _ in range(n_entries):
            token = read_varint(buf)
            count = read_varint(buf)
            if token >= vocab_size or count <= 0:
                raise CorruptFileError("count table entry out of range")
            table[token] = count
        counts[ctx] = table
    expect_eof(buf)
    return NgramModel(order, vocab_size, discount, counts)


class ExternalProcessScorer:
    """Adapter for an external scorer process speaking the line protocol.

    Each request is one JSON line ``{"tokens": [...], "doc_id": ...}``; the
    process answers with one line of base64-encoded little-endian f32 values
    of length ``vocab_size`` interpreted as the log-score vector. Scores are
    renormalized through softmax by the decoder, so any consistent scale
    works.
    """

    def __init__(self, argv: list[str], vocab_size: int):
        self.vocab_size = vocab_size
        self._proc = subprocess.Popen(
            argv,
            stdin=subprocess.PIPE,
            stdout=subprocess.PIPE,
            text=True,
        )

    def logits(self, ctx: ScorerContext | None, tokens: Sequence[int]) -> np.ndarray:
        request = {
            "tokens": list(tokens),
            "doc_id": ctx.doc_id if ctx is not None else None,
        }
        assert self._proc.stdin is not None and self._proc.stdout is not None
        self._proc.stdin.write(json.dumps(request) + "\n")
        self._proc.stdin.flush()
        line = self._proc.stdout.readline()
        if not line:
            raise InvalidInputError("external scorer closed its output")
        vec = np.frombuffer(base64.b64decode(line.strip()), dtype="<f4")
        if vec.shape[0] != self.vocab_size:
            raise InvalidInputError(
                f"external scorer returned {vec.shape[0]} values, "
                f"expected {self.vocab_size}"
            )
        return vec.astype(np.float64)

    def close(self) -> None:
        if self._proc.stdin:
            self._proc.stdin.close()
        self._proc.terminate()
        self._proc.wait(timeout=5)
