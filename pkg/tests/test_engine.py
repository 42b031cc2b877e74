import threading

import pytest

from qac.dataset import SplitFractions, make_splits, preprocess
from qac.decoder import DecodeConfig
from qac.engine import Engine
from qac.errors import InvalidInputError, NotFoundError
from qac.models import DocumentRecord, QueryDocPair, WeightedQuery
from qac.synth import generate_corpus


def small_world(seed=7):
    docs, pairs = generate_corpus(n_docs=24, n_queries=600, seed=seed, n_topics=4)
    kept, _ = preprocess(pairs, {d.doc_id: d for d in docs})
    manifest = make_splits(
        kept, seed=seed, fractions=SplitFractions(quadrant_cap=40)
    )
    return docs, manifest


@pytest.fixture(scope="module")
def world():
    docs, manifest = small_world()
    engine = Engine.from_training(
        docs,
        manifest.train,
        vocab_size=512,
        seed=7,
        decode_config=DecodeConfig(beam_size=6, max_steps=26, top_k_out=10),
    )
    return docs, manifest, engine


class TestCompleteDispatch:
    def test_mpc_mode_matches_trie(self, world):
        docs, manifest, engine = world
        pair = manifest.train[0]
        prefix = pair.query.text[:2]
        got = engine.complete("mpc", pair.doc_id, prefix, 10)
        index = engine.state.documents[pair.doc_id]
        want = index.docq_trie.mpc(prefix, 10)
        assert [(s.text, s.score) for s in got] == [
            (s.text, s.score) for s in want
        ]

    def test_mpc_global_needs_no_doc(self, world):
        _, manifest, engine = world
        pair = manifest.train[0]
        got = engine.complete(
            "mpc", None, pair.query.text[:2], 5, trie_source="global"
        )
        assert all(s.source == "mpc" for s in got)

    def test_lm_equals_guided_with_zero_bias(self, world):
        _, manifest, engine = world
        pair = manifest.train[1]
        prefix = pair.query.text[:3]
        lm = engine.complete("lm", pair.doc_id, prefix, 10)
        guided0 = engine.complete("guided", pair.doc_id, prefix, 10, bias=0.0)
        assert [s.text for s in lm] == [s.text for s in guided0]

    def test_guided_suggestions_marked(self, world):
        _, manifest, engine = world
        pair = manifest.train[2]
        got = engine.complete(
            "guided", pair.doc_id, pair.query.text[:3], 10, bias=1e4,
            alpha=0.0, beta=0.0,
        )
        assert got and all(s.trie_conforming for s in got)

    def test_unknown_mode_rejected(self, world):
        _, _, engine = world
        with pytest.raises(InvalidInputError):
            engine.complete("fancy", "d000", "ab", 5)

    def test_unknown_doc_not_found(self, world):
        _, _, engine = world
        with pytest.raises(NotFoundError):
            engine.complete("mpc", "missing-doc", "ab", 5)

    def test_bad_k_rejected(self, world):
        _, _, engine = world
        with pytest.raises(InvalidInputError):
            engine.complete("mpc", "d000", "ab", 0)

    def test_k_bounds_output(self, world):
        _, manifest, engine = world
        pair = manifest.train[3]
        got = engine.complete("guided", pair.doc_id, pair.query.text[:2], 3)
        assert len(got) <= 3
        assert [s.rank for s in got] == list(range(1, len(got) + 1))

    def test_context_modes_run(self, world):
        _, manifest, engine = world
        pair = manifest.train[4]
        prefix = pair.query.text[:3]
        for mode in ("P", "P_TU", "P_TUD", "P_TUK", "SPARSE_RAG"):
            got = engine.complete(
                "guided", pair.doc_id, prefix, 5, context_mode=mode, lam=0.3
            )
            assert isinstance(got, list)

    def test_dense_without_vectors_falls_back(self, world):
        _, manifest, engine = world
        pair = manifest.train[5]
        _, used = engine.scorer_context(
            pair.doc_id, "DENSE_RAG", pair.query.text[:3]
        )
        assert used == "SPARSE_RAG"

    def test_summary_mode_rejected(self, world):
        _, manifest, engine = world
        with pytest.raises(InvalidInputError):
            engine.complete(
                "guided", manifest.train[0].doc_id, "abc", 5,
                context_mode="P_TUS",
            )


class TestIngestion:
    def make_record(self, doc_id="fresh", n=3):
        return DocumentRecord(
            doc_id=doc_id,
            url="https://x/y",
            title="fresh title",
            body="fresh body content. more content here.",
            queries=[WeightedQuery(f"fresh query {i}", i + 1.0) for i in range(n)],
        )

    def engine(self):
        docs, manifest = small_world()
        return Engine.from_training(
            docs[:8], manifest.train, vocab_size=256, seed=1, ingest=False
        )

    def test_ingest_stats(self):
        engine = self.engine()
        stats = engine.ingest_document(self.make_record(n=3))
        assert stats["doc_id"] == "fresh"
        assert stats["replaced"] is False
        assert stats["docq_terminals"] == 3

    def test_reingest_replaces(self):
        engine = self.engine()
        engine.ingest_document(self.make_record(n=3))
        stats = engine.ingest_document(self.make_record(n=5))
        assert stats["replaced"] is True
        assert engine.state.documents["fresh"].docq_trie.n_terminals == 5

    def test_empty_body_ok(self):
        engine = self.engine()
        record = self.make_record()
        record.body = ""
        stats = engine.ingest_document(record)
        assert stats["docc_terminals"] == 0

    def test_empty_doc_id_rejected(self):
        engine = self.engine()
        record = self.make_record(doc_id="")
        with pytest.raises(InvalidInputError):
            engine.ingest_document(record)

    def test_list_documents(self):
        engine = self.engine()
        assert engine.list_documents() == []
        engine.ingest_document(self.make_record("a"))
        engine.ingest_document(self.make_record("b"))
        assert [d["doc_id"] for d in engine.list_documents()] == ["a", "b"]

    def test_concurrent_reads_during_ingest(self):
        engine = self.engine()
        engine.ingest_document(self.make_record("stable", n=4))
        errors = []
        stop = threading.Event()

        def reader():
            while not stop.is_set():
                try:
                    engine.complete("mpc", "stable", "fresh", 5)
                    engine.list_documents()
                except Exception as exc:  # noqa: BLE001
                    errors.append(exc)
                    return

        threads = [threading.Thread(target=reader) for _ in range(4)]
        for t in threads:
            t.start()
        for i in range(30):
            engine.ingest_document(self.make_record(f"doc{i % 5}"))
        stop.set()
        for t in threads:
            t.join()
        assert errors == []
