import json
from pathlib import Path

import pytest

from qac.cli import main
from qac.dataset import load_manifest, read_corpus_tsv, read_pairs_tsv
from qac.scorer import load_ngram
from qac.tokenizer import load_tokenizer
from qac.trie import deserialize_completion_trie, deserialize_guidance_trie


@pytest.fixture(scope="module")
def corpus_dir(tmp_path_factory):
    root = tmp_path_factory.mktemp("cli-corpus")
    assert main([
        "synth", "--out", str(root), "--docs", "16", "--queries", "400",
        "--seed", "3", "--topics", "4",
    ]) == 0
    assert main([
        "make-splits", "--pairs", str(root / "pairs.tsv"),
        "--corpus", str(root / "corpus.tsv"), "--out", str(root),
        "--seed", "3", "--quadrant-cap", "30",
    ]) == 0
    return root


class TestSynthAndSplits:
    def test_outputs_exist(self, corpus_dir):
        assert (corpus_dir / "corpus.tsv").is_file()
        assert (corpus_dir / "pairs.tsv").is_file()
        assert (corpus_dir / "manifest.json").is_file()
        docs = read_corpus_tsv(corpus_dir / "corpus.tsv")
        assert len(docs) == 16

    def test_synth_deterministic(self, corpus_dir, tmp_path):
        other = tmp_path / "again"
        main([
            "synth", "--out", str(other), "--docs", "16", "--queries", "400",
            "--seed", "3", "--topics", "4",
        ])
        assert (other / "corpus.tsv").read_bytes() == (
            corpus_dir / "corpus.tsv"
        ).read_bytes()
        assert (other / "pairs.tsv").read_bytes() == (
            corpus_dir / "pairs.tsv"
        ).read_bytes()


class TestArtifactCommands:
    def test_tokenizer_lm_trie_round_trip(self, corpus_dir, tmp_path):
        tok_path = tmp_path / "tok.qtok"
        assert main([
            "train-tokenizer", "--train", str(corpus_dir / "train.tsv"),
            "--vocab-size", "256", "--out", str(tok_path),
        ]) == 0
        tok = load_tokenizer(str(tok_path))
        assert tok.vocab_size == 256

        lm_path = tmp_path / "lm.qngram"
        assert main([
            "train-lm", "--train", str(corpus_dir / "train.tsv"),
            "--tokenizer", str(tok_path), "--order", "3",
            "--out", str(lm_path), "--seed", "5",
        ]) == 0
        lm = load_ngram(str(lm_path))
        assert lm.order == 3

        ct_path = tmp_path / "global.qtrie"
        assert main([
            "build-trie", "--train", str(corpus_dir / "train.tsv"),
            "--kind", "completion", "--out", str(ct_path),
        ]) == 0
        trie = deserialize_completion_trie(ct_path.read_bytes())
        assert trie.n_terminals > 0

        gt_path = tmp_path / "global.gtrie"
        assert main([
            "build-trie", "--train", str(corpus_dir / "train.tsv"),
            "--kind", "guidance", "--tokenizer", str(tok_path),
            "--out", str(gt_path),
        ]) == 0
        gt = deserialize_guidance_trie(gt_path.read_bytes())
        assert gt.n_sequences > 0

    def test_guidance_without_tokenizer_is_usage_error(self, corpus_dir, tmp_path):
        assert main([
            "build-trie", "--train", str(corpus_dir / "train.tsv"),
            "--kind", "guidance", "--out", str(tmp_path / "x.gtrie"),
        ]) == 1


class TestComplete:
    def args(self, corpus_dir, *extra):
        return [
            "complete", "--corpus-dir", str(corpus_dir),
            "--vocab-size", "256", "--beam", "5", "--steps", "22",
            *extra,
        ]

    def first_train_pair(self, corpus_dir):
        return read_pairs_tsv(corpus_dir / "train.tsv")[0]

    def test_bias_zero_equals_lm(self, corpus_dir, capsys):
        pair = self.first_train_pair(corpus_dir)
        prefix = pair.query.text[:3]
        assert main(self.args(
            corpus_dir, "--doc", pair.doc_id, "--prefix", prefix,
            "--mode", "guided", "--bias", "0",
        )) == 0
        guided_out = capsys.readouterr().out
        assert main(self.args(
            corpus_dir, "--doc", pair.doc_id, "--prefix", prefix,
            "--mode", "lm",
        )) == 0
        lm_out = capsys.readouterr().out
        assert guided_out == lm_out
        assert guided_out.strip()
        for line in guided_out.strip().splitlines():
            rank, score, text = line.split("\t")
            int(rank), float(score)
            assert text

    def test_unknown_doc_is_data_error(self, corpus_dir, capsys):
        code = main(self.args(
            corpus_dir, "--doc", "missing", "--prefix", "ab", "--mode", "mpc",
        ))
        assert code == 2


class TestEval:
    def test_cli_equals_library(self, corpus_dir, tmp_path, capsys):
        out = tmp_path / "report.tsv"
        assert main([
            "eval", "--corpus-dir", str(corpus_dir), "--vocab-size", "256",
            "--mode", "guided", "--quadrants", "SS", "--limit", "4",
            "--no-tes", "--seed", "3", "--beam", "5", "--steps", "22",
            "--out", str(out),
        ]) == 0
        capsys.readouterr()
        tsv = out.read_text()
        lines = tsv.strip().splitlines()
        assert lines[0].startswith("quadrant\tmode\tn")
        assert len(lines) == 2

        # independent library-path computation with identical inputs
        import random

        from qac.dataset import dynamic_prefix_split
        from qac.decoder import DecodeConfig
        from qac.engine import Engine
        from qac.metrics import evaluate_run, report_tsv
        from qac.models import EvalExample

        docs = read_corpus_tsv(corpus_dir / "corpus.tsv")
        manifest = load_manifest(corpus_dir)
        engine = Engine.from_training(
            docs, manifest.train, vocab_size=256, seed=3,
            decode_config=DecodeConfig(beam_size=5, max_steps=22),
        )
        rng = random.Random(3)
        examples = []
        for pair in manifest.test["SS"][:4]:
            prefix, _ = dynamic_prefix_split(pair.query.text, rng)
            examples.append(EvalExample(pair.query.text, pair.doc_id, prefix, "SS"))

        def system(doc_id, prefix):
            return [s.text for s in engine.complete("guided", doc_id, prefix, 10)]

        reports = evaluate_run(
            examples, system, mode_label="guided", with_tes=False
        )
        assert report_tsv(reports) == tsv


class TestSweep:
    def test_48_deterministic_rows(self, corpus_dir, tmp_path, capsys):
        outs = []
        for name in ("a.tsv", "b.tsv"):
            out = tmp_path / name
            assert main([
                "sweep", "--corpus-dir", str(corpus_dir),
                "--vocab-size", "256", "--limit", "2", "--seed", "3",
                "--beam", "4", "--steps", "20", "--out", str(out),
            ]) == 0
            capsys.readouterr()
            outs.append(out.read_bytes())
        assert outs[0] == outs[1]
        lines = outs[0].decode().strip().splitlines()
        assert len(lines) == 1 + 48
        cells = [tuple(line.split("\t")[:3]) for line in lines[1:]]
        assert len(set(cells)) == 48
        alphas = {c[0] for c in cells}
        assert alphas == {"0.05", "0.1", "0.2", "0.5"}


class TestUsageErrors:
    def test_unknown_command(self, capsys):
        assert main(["frobnicate"]) == 1

    def test_missing_required_flag(self, capsys):
        assert main(["synth"]) == 1

    def test_missing_corpus_dir(self, capsys):
        assert main(["complete", "--prefix", "ab"]) == 1

    def test_bad_data_file(self, tmp_path, capsys):
        bad = tmp_path / "corpus.tsv"
        bad.write_text("one\tfield missing\n")
        code = main([
            "complete", "--corpus-dir", str(tmp_path), "--prefix", "ab",
        ])
        assert code == 2
