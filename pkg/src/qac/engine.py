"""Corpus state and completion dispatch across the three modes.

The engine owns everything a completion request touches: the tokenizer, the
global n-gram scorer, the global popularity and guidance tries, and one
index per ingested document (DocQ/DocC tries, a DocQ guidance trie,
sentences, keyphrases, cached context scorers). Ingestion builds a fresh
document index aside and swaps it in atomically; readers always see a
consistent snapshot.
"""

from __future__ import annotations

import random
import threading
from dataclasses import dataclass, field, replace

from . import context as ctxmod
from .context import ContextBundle, VectorTable, assemble_context
from .dataset import dynamic_prefix_split
from .decoder import DecodeConfig, guided_beam_search
from .errors import (
    InvalidInputError,
    NotFoundError,
    UnavailableContextError,
)
from .models import DocumentRecord, QueryDocPair, Suggestion, WeightedQuery
from .scorer import NgramModel, ScorerContext, train_ngram
from .textnorm import normalize
from .tokenizer import EOS_ID, TokenizerModel, train_bpe
from .trie import (
    CompletionTrie,
    GuidanceTrie,
    build_completion_trie,
    build_docc_trie,
    build_guidance_trie,
)

MODES = ("mpc", "lm", "guided")
TRIE_SOURCES = ("docq", "docc", "global")

DEFAULT_VOCAB_SIZE = 1024
DEFAULT_ORDER = 4
DEFAULT_DISCOUNT = 0.75
DEFAULT_LAMBDA = 0.3


@dataclass
class DocIndex:
    record: DocumentRecord
    docq_trie: CompletionTrie
    docc_trie: CompletionTrie
    docq_guidance: GuidanceTrie
    sentences: list[str]
    keyphrases: list[str]
    context_cache: dict[str, ScorerContext] = field(default_factory=dict)


@dataclass
class CorpusState:
    documents: dict[str, DocIndex] = field(default_factory=dict)
    global_trie: CompletionTrie = field(default_factory=CompletionTrie)
    global_guidance: GuidanceTrie | None = None


def build_doc_index(record: DocumentRecord, tok: TokenizerModel) -> DocIndex:
    return DocIndex(
        record=record,
        docq_trie=build_completion_trie(record.queries),
        docc_trie=build_docc_trie(record.body),
        docq_guidance=build_guidance_trie(record.queries, tok),
        sentences=ctxmod.split_sentences(record.body),
        keyphrases=ctxmod.extract_keyphrases(record),
    )


class Engine:
    """Thread-safe completion engine over an immutable-per-epoch corpus."""

    def __init__(
        self,
        tokenizer: TokenizerModel,
        scorer: NgramModel,
        decode_config: DecodeConfig | None = None,
        *,
        default_context: str = "P",
        guided_trie: str = "global",
        lam: float = DEFAULT_LAMBDA,
        vectors: VectorTable | None = None,
    ):
        self.tokenizer = tokenizer
        self.scorer = scorer
        self.decode_config = decode_config or DecodeConfig()
        self.default_context = default_context
        self.guided_trie = guided_trie
        self.lam = lam
        self.vectors = vectors
        self.state = CorpusState()
        self._write_lock = threading.Lock()

    # -- construction --------------------------------------------------

    @classmethod
    def from_training(
        cls,
        docs: list[DocumentRecord],
        train_pairs: list[QueryDocPair],
        *,
        vocab_size: int = DEFAULT_VOCAB_SIZE,
        order: int = DEFAULT_ORDER,
        discount: float = DEFAULT_DISCOUNT,
        seed: int = 0,
        lm_samples: int = 2,
        decode_config: DecodeConfig | None = None,
        default_context: str = "P",
        guided_trie: str = "global",
        lam: float = DEFAULT_LAMBDA,
        vectors: VectorTable | None = None,
        ingest: bool = True,
        tokenizer: TokenizerModel | None = None,
        scorer: NgramModel | None = None,
    ) -> "Engine":
        """Index the corpus, training tokenizer/scorer unless prebuilt ones
        are passed in."""
        queries = [p.query for p in train_pairs]
        if not queries:
            raise InvalidInputError("no training pairs")
        tok = tokenizer or train_bpe(
            [normalize(q.text) for q in queries], vocab_size
        )
        if scorer is None:
            rng = random.Random(seed)
            sequences = []
            for pair in train_pairs:
                text = normalize(pair.query.text)
                if len(text) < 3:
                    continue
                for _ in range(lm_samples):
                    prefix, suffix = dynamic_prefix_split(text, rng)
                    seq = tok.encode_split(prefix, suffix)
                    seq.append(EOS_ID)
                    sequences.append(seq)
            scorer = train_ngram(sequences, order, tok.vocab_size, discount)
        engine = cls(
            tok,
            scorer,
            decode_config,
            default_context=default_context,
            guided_trie=guided_trie,
            lam=lam,
            vectors=vectors,
        )
        engine.set_global_structures(
            build_completion_trie(queries), build_guidance_trie(queries, tok)
        )
        if ingest:
            by_doc: dict[str, list[WeightedQuery]] = {}
            for pair in train_pairs:
                by_doc.setdefault(pair.doc_id, []).append(pair.query)
            for doc in docs:
                record = replace_queries(doc, by_doc.get(doc.doc_id, []))
                engine.ingest_document(record)
        return engine

    def set_global_structures(
        self, trie: CompletionTrie, guidance: GuidanceTrie | None
    ) -> None:
        with self._write_lock:
            state = CorpusState(
                documents=dict(self.state.documents),
                global_trie=trie,
                global_guidance=guidance,
            )
            self.state = state

    def ingest_document(self, record: DocumentRecord) -> dict:
        """Index one document and swap it into the corpus atomically."""
        if not record.doc_id:
            raise InvalidInputError("doc_id must be non-empty")
        index = build_doc_index(record, self.tokenizer)
        with self._write_lock:
            replaced = record.doc_id in self.state.documents
            documents = dict(self.state.documents)
            documents[record.doc_id] = index
            self.state = CorpusState(
                documents=documents,
                global_trie=self.state.global_trie,
                global_guidance=self.state.global_guidance,
            )
        return {
            "doc_id": record.doc_id,
            "replaced": replaced,
            "docq_terminals": index.docq_trie.n_terminals,
            "docc_terminals": index.docc_trie.n_terminals,
            "guidance_sequences": index.docq_guidance.n_sequences,
            "sentences": len(index.sentences),
            "keyphrases": len(index.keyphrases),
        }

    def list_documents(self) -> list[dict]:
        state = self.state
        return [
            {"doc_id": doc_id, "title": index.record.title}
            for doc_id, index in sorted(state.documents.items())
        ]

    # -- completion -----------------------------------------------------

    def _doc(self, state: CorpusState, doc_id: str | None) -> DocIndex:
        if not doc_id:
            raise NotFoundError("doc_id required for document-scoped modes")
        index = state.documents.get(doc_id)
        if index is None:
            raise NotFoundError(f"unknown doc_id {doc_id!r}")
        return index

    def scorer_context(
        self,
        doc_id: str | None,
        context_mode: str | None,
        prefix: str,
        lam: float | None = None,
    ) -> tuple[ScorerContext, str]:
        """Build (or fetch cached) scorer conditioning for one request.

        Dense modes without usable vectors fall back to SPARSE_RAG, per the
        context module's contract; the mode actually used is returned.
        """
        state = self.state
        mode = (context_mode or self.default_context).upper()
        lam = self.lam if lam is None else lam
        if mode == "P":
            return ScorerContext(None, 0.0, doc_id=doc_id), "P"
        index = self._doc(state, doc_id)
        prefix_independent = mode in ("P_TU", "P_TUD", "P_TUK")
        cache_key = f"{mode}|{lam!r}"
        if prefix_independent and cache_key in index.context_cache:
            return index.context_cache[cache_key], mode
        try:
            bundle = assemble_context(
                index.record,
                mode,
                prefix,
                self.tokenizer,
                vectors=self.vectors,
                corpus={
                    d: i.record for d, i in state.documents.items()
                },
            )
            used = mode
        except UnavailableContextError:
            bundle = assemble_context(
                index.record, "SPARSE_RAG", prefix, self.tokenizer
            )
            used = "SPARSE_RAG"
        sctx = self._context_from_bundle(bundle, lam, doc_id)
        if prefix_independent and used == mode:
            index.context_cache[cache_key] = sctx
        return sctx, used

    def _context_from_bundle(
        self, bundle: ContextBundle, lam: float, doc_id: str | None
    ) -> ScorerContext:
        sequences = [seq + [EOS_ID] for seq in bundle.sequences if seq]
        if not sequences or lam == 0.0:
            return ScorerContext(None, 0.0, doc_id=doc_id)
        doc_model = train_ngram(
            sequences,
            self.scorer.order,
            self.scorer.vocab_size,
            self.scorer.discount,
        )
        return ScorerContext(doc_model, lam, doc_id=doc_id)

    def complete(
        self,
        mode: str,
        doc_id: str | None,
        prefix: str,
        k: int = 10,
        *,
        alpha: float | None = None,
        beta: float | None = None,
        bias: float | None = None,
        lam: float | None = None,
        context_mode: str | None = None,
        trie_source: str | None = None,
        beam_size: int | None = None,
        max_steps: int | None = None,
    ) -> list[Suggestion]:
        """Dispatch one completion request; always returns <= k suggestions."""
        if mode not in MODES:
            raise InvalidInputError(
                f"unknown mode {mode!r}; expected one of {MODES}"
            )
        if k <= 0:
            raise InvalidInputError("k must be positive")
        state = self.state
        if mode == "mpc":
            source = trie_source or "docq"
            if source not in TRIE_SOURCES:
                raise InvalidInputError(f"unknown trie source {source!r}")
            if source == "global":
                trie = state.global_trie
            else:
                index = self._doc(state, doc_id)
                trie = index.docq_trie if source == "docq" else index.docc_trie
            return trie.mpc(prefix, k)

        cfg = self.decode_config.override(
            alpha=alpha,
            beta=beta,
            initial_bias=bias,
            beam_size=beam_size,
            max_steps=max_steps,
            top_k_out=k,
        )
        sctx, _ = self.scorer_context(doc_id, context_mode, prefix, lam)
        guidance = None
        if mode == "guided":
            source = trie_source or self.guided_trie
            if source == "docq":
                guidance = self._doc(state, doc_id).docq_guidance
            elif source == "global":
                guidance = state.global_guidance
            else:
                raise InvalidInputError(
                    f"guided mode expects trie source docq or global, got {source!r}"
                )
            if guidance is None:
                raise InvalidInputError("no global guidance trie loaded")
        return guided_beam_search(
            self.tokenizer, self.scorer, sctx, guidance, prefix, cfg
        )


def replace_queries(
    doc: DocumentRecord, queries: list[WeightedQuery]
) -> DocumentRecord:
    return DocumentRecord(
        doc_id=doc.doc_id,
        url=doc.url,
        title=doc.title,
        body=doc.body,
        queries=queries,
    )
