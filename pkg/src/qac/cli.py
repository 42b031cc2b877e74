"""Command-line driver for every pipeline stage.

    qac synth            write the deterministic synthetic corpus
    qac make-splits      build train/val/SS/SU/US/UU manifest files
    qac train-tokenizer  learn the subword vocabulary from training pairs
    qac train-lm         train the n-gram scorer on split-encoded pairs
    qac build-trie       build and serialize a completion or guidance trie
    qac complete         print ranked completions for one prefix
    qac eval             per-quadrant metric report (TSV + table)
    qac sweep            full decay/bias grid, one report row per cell
    qac serve            run the HTTP service (and the typing UI)

Exit codes: 0 success, 1 usage error, 2 data error. Every run logs its
resolved configuration to stderr for reproducibility.
"""

from __future__ import annotations

import argparse
import json
import logging
import random
import sys
from pathlib import Path

from . import __version__
from .dataset import (
    SplitFractions,
    dynamic_prefix_split,
    load_manifest,
    make_splits,
    preprocess,
    read_corpus_tsv,
    read_pairs_tsv,
    write_corpus_tsv,
    write_manifest,
    write_pairs_tsv,
)
from .decoder import DecodeConfig
from .engine import (
    DEFAULT_DISCOUNT,
    DEFAULT_ORDER,
    DEFAULT_VOCAB_SIZE,
    Engine,
)
from .errors import QacError
from .metrics import evaluate_run, report_table, report_tsv
from .models import EvalExample
from .scorer import load_ngram, save_ngram, train_ngram
from .synth import DEFAULT_SEED, generate_corpus
from .tokenizer import EOS_ID, load_tokenizer, save_tokenizer, train_bpe
from .trie import (
    build_completion_trie,
    build_guidance_trie,
    serialize_completion_trie,
    serialize_guidance_trie,
)

LOG = logging.getLogger("qac.cli")

SWEEP_ALPHAS = (0.05, 0.1, 0.2, 0.5)
SWEEP_BETAS = (0.05, 0.1, 0.2, 0.5)
SWEEP_BIASES = (20.0, 30.0, 40.0)


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise UsageError(message)


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="qac", description=__doc__.splitlines()[0])
    parser.add_argument("--version", action="version", version=__version__)
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("synth", help="write the synthetic corpus")
    p.add_argument("--out", required=True, help="output directory")
    p.add_argument("--seed", type=int, default=DEFAULT_SEED)
    p.add_argument("--docs", type=int, default=200)
    p.add_argument("--queries", type=int, default=5000)
    p.add_argument("--topics", type=int, default=25)

    p = sub.add_parser("make-splits", help="build the split manifest")
    p.add_argument("--pairs", required=True)
    p.add_argument("--corpus", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--unseen-query-frac", type=float, default=0.25)
    p.add_argument("--unseen-doc-frac", type=float, default=0.25)
    p.add_argument("--val-frac", type=float, default=0.08)
    p.add_argument("--quadrant-cap", type=int, default=3000)

    p = sub.add_parser("train-tokenizer", help="learn the BPE vocabulary")
    p.add_argument("--train", required=True, help="training pairs TSV")
    p.add_argument("--vocab-size", type=int, default=DEFAULT_VOCAB_SIZE)
    p.add_argument("--out", required=True)

    p = sub.add_parser("train-lm", help="train the n-gram scorer")
    p.add_argument("--train", required=True)
    p.add_argument("--tokenizer", required=True)
    p.add_argument("--order", type=int, default=DEFAULT_ORDER)
    p.add_argument("--discount", type=float, default=DEFAULT_DISCOUNT)
    p.add_argument("--samples", type=int, default=2,
                   help="dynamic prefix splits per pair")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", required=True)

    p = sub.add_parser("build-trie", help="build and serialize a trie")
    p.add_argument("--train", required=True)
    p.add_argument("--kind", choices=("completion", "guidance"), required=True)
    p.add_argument("--tokenizer", help="required for guidance tries")
    p.add_argument("--out", required=True)

    for name in ("complete", "eval", "sweep", "serve"):
        p = sub.add_parser(name)
        p.add_argument("--corpus-dir",
                       help="directory with corpus.tsv and split TSVs")
        p.add_argument("--synthetic", action="store_true",
                       help="use the built-in synthetic corpus")
        p.add_argument("--tokenizer", help="prebuilt tokenizer file")
        p.add_argument("--lm", help="prebuilt n-gram model file")
        p.add_argument("--seed", type=int, default=0)
        p.add_argument("--vocab-size", type=int, default=DEFAULT_VOCAB_SIZE)
        p.add_argument("--order", type=int, default=DEFAULT_ORDER)
        p.add_argument("--guided-trie", choices=("global", "docq"),
                       default="global")
        if name == "complete":
            p.add_argument("--doc")
            p.add_argument("--prefix", required=True)
            p.add_argument("--mode", choices=("mpc", "lm", "guided"),
                           default="guided")
            p.add_argument("--k", type=int, default=10)
            p.add_argument("--trie", choices=("docq", "docc", "global"))
        p.add_argument("--beam", type=int, help="default beam size")
        p.add_argument("--steps", type=int, help="default decoding steps")
        if name in ("complete", "eval", "sweep"):
            p.add_argument("--alpha", type=float)
            p.add_argument("--beta", type=float)
            p.add_argument("--bias", type=float)
            p.add_argument("--lambda", dest="lam", type=float)
            p.add_argument("--context")
        if name == "eval":
            p.add_argument("--mode", choices=("mpc", "lm", "guided"),
                           default="guided")
            p.add_argument("--trie", choices=("docq", "docc", "global"))
            p.add_argument("--quadrants", default="SS,SU,US,UU")
            p.add_argument("--limit", type=int, default=0,
                           help="examples per quadrant (0 = all)")
            p.add_argument("--no-tes", action="store_true")
            p.add_argument("--out", help="write TSV here instead of stdout")
        if name == "sweep":
            p.add_argument("--quadrant", default="SS")
            p.add_argument("--limit", type=int, default=20)
            p.add_argument("--out", help="write TSV here instead of stdout")
        if name == "serve":
            p.add_argument("--port", type=int)
            p.add_argument("--ui", help="static UI directory")
    return parser


# -- shared bootstrap -----------------------------------------------------


def _load_world(args):
    """Corpus records plus train/test pairs from --corpus-dir or --synthetic."""
    if args.synthetic:
        docs, pairs = generate_corpus(seed=args.seed or DEFAULT_SEED)
        kept, _ = preprocess(pairs, {d.doc_id: d for d in docs})
        manifest = make_splits(
            kept, seed=args.seed or DEFAULT_SEED,
            fractions=SplitFractions(quadrant_cap=200),
        )
        return docs, manifest
    if not args.corpus_dir:
        raise UsageError("either --corpus-dir or --synthetic is required")
    root = Path(args.corpus_dir)
    docs = read_corpus_tsv(root / "corpus.tsv")
    if (root / "manifest.json").is_file():
        manifest = load_manifest(root)
        return docs, manifest
    pairs_file = root / "train.tsv"
    if not pairs_file.is_file():
        pairs_file = root / "pairs.tsv"
    if not pairs_file.is_file():
        raise QacError(f"no train.tsv or pairs.tsv in {root}")
    pairs = read_pairs_tsv(pairs_file)
    manifest = SplitManifestShim(pairs)
    return docs, manifest


class SplitManifestShim:
    """Corpus dir without splits: everything is training data."""

    def __init__(self, pairs):
        self.train = pairs
        self.validation = []
        self.test = {}


def _build_engine(args, docs, manifest) -> Engine:
    tokenizer = load_tokenizer(args.tokenizer) if args.tokenizer else None
    scorer = load_ngram(args.lm) if args.lm else None
    cfg = DecodeConfig()
    if getattr(args, "beam", None):
        cfg = cfg.override(beam_size=args.beam)
    if getattr(args, "steps", None):
        cfg = cfg.override(max_steps=args.steps)
    engine = Engine.from_training(
        docs,
        manifest.train,
        vocab_size=args.vocab_size,
        order=args.order,
        seed=args.seed,
        decode_config=cfg,
        guided_trie=args.guided_trie,
        tokenizer=tokenizer,
        scorer=scorer,
    )
    return engine


def _examples_for(manifest, quadrants, limit, seed) -> list[EvalExample]:
    rng = random.Random(seed)
    examples = []
    for quadrant in quadrants:
        bucket = manifest.test.get(quadrant, [])
        chosen = bucket if limit <= 0 else bucket[:limit]
        for pair in chosen:
            prefix, _ = dynamic_prefix_split(pair.query.text, rng)
            examples.append(
                EvalExample(
                    target=pair.query.text,
                    doc_id=pair.doc_id,
                    prefix=prefix,
                    quadrant=quadrant,
                )
            )
    return examples


def _system_callback(engine, mode, args):
    from .errors import NotFoundError

    def system(doc_id, prefix):
        try:
            suggestions = engine.complete(
                mode,
                doc_id,
                prefix,
                10,
                alpha=getattr(args, "alpha", None),
                beta=getattr(args, "beta", None),
                bias=getattr(args, "bias", None),
                lam=getattr(args, "lam", None),
                context_mode=getattr(args, "context", None),
                trie_source=getattr(args, "trie", None),
            )
        except NotFoundError:
            return []
        return [s.text for s in suggestions]

    return system


# -- subcommands ----------------------------------------------------------


def cmd_synth(args) -> int:
    docs, pairs = generate_corpus(
        n_docs=args.docs,
        n_queries=args.queries,
        seed=args.seed,
        n_topics=args.topics,
    )
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    write_corpus_tsv(docs, out / "corpus.tsv")
    write_pairs_tsv(pairs, out / "pairs.tsv")
    print(f"wrote {len(docs)} documents, {len(pairs)} pairs to {out}")
    return 0


def cmd_make_splits(args) -> int:
    pairs = read_pairs_tsv(args.pairs)
    docs = read_corpus_tsv(args.corpus)
    kept, stats = preprocess(pairs, {d.doc_id: d for d in docs})
    LOG.info("preprocess: %s", stats)
    manifest = make_splits(
        kept,
        seed=args.seed,
        fractions=SplitFractions(
            unseen_query=args.unseen_query_frac,
            unseen_doc=args.unseen_doc_frac,
            validation=args.val_frac,
            quadrant_cap=args.quadrant_cap,
        ),
    )
    write_manifest(manifest, args.out)
    counts = {q: len(v) for q, v in manifest.test.items()}
    print(
        f"train={len(manifest.train)} val={len(manifest.validation)} "
        f"test={counts}"
    )
    return 0


def _train_queries(path):
    return [p.query for p in read_pairs_tsv(path)]


def cmd_train_tokenizer(args) -> int:
    queries = _train_queries(args.train)
    model = train_bpe([q.text for q in queries], args.vocab_size)
    save_tokenizer(model, args.out)
    print(f"vocab {model.vocab_size} ({len(model.merges)} merges) -> {args.out}")
    return 0


def cmd_train_lm(args) -> int:
    tok = load_tokenizer(args.tokenizer)
    pairs = read_pairs_tsv(args.train)
    rng = random.Random(args.seed)
    sequences = []
    for pair in pairs:
        for _ in range(args.samples):
            prefix, suffix = dynamic_prefix_split(pair.query.text, rng)
            seq = tok.encode_split(prefix, suffix)
            seq.append(EOS_ID)
            sequences.append(seq)
    model = train_ngram(sequences, args.order, tok.vocab_size, args.discount)
    save_ngram(model, args.out)
    print(
        f"order {model.order}, {len(model.counts)} contexts -> {args.out}"
    )
    return 0


def cmd_build_trie(args) -> int:
    queries = _train_queries(args.train)
    if args.kind == "completion":
        data = serialize_completion_trie(build_completion_trie(queries))
    else:
        if not args.tokenizer:
            raise UsageError("--tokenizer is required for guidance tries")
        tok = load_tokenizer(args.tokenizer)
        data = serialize_guidance_trie(build_guidance_trie(queries, tok))
    Path(args.out).write_bytes(data)
    print(f"{args.kind} trie ({len(data)} bytes) -> {args.out}")
    return 0


def cmd_complete(args) -> int:
    docs, manifest = _load_world(args)
    engine = _build_engine(args, docs, manifest)
    suggestions = engine.complete(
        args.mode,
        args.doc,
        args.prefix,
        args.k,
        alpha=args.alpha,
        beta=args.beta,
        bias=args.bias,
        lam=args.lam,
        context_mode=args.context,
        trie_source=args.trie,
    )
    for s in suggestions:
        print(f"{s.rank}\t{s.score:.6f}\t{s.text}")
    return 0


def cmd_eval(args) -> int:
    docs, manifest = _load_world(args)
    engine = _build_engine(args, docs, manifest)
    quadrants = [q.strip().upper() for q in args.quadrants.split(",") if q.strip()]
    examples = _examples_for(manifest, quadrants, args.limit, args.seed)
    reports = evaluate_run(
        examples,
        _system_callback(engine, args.mode, args),
        mode_label=args.mode,
        with_tes=not args.no_tes,
    )
    tsv = report_tsv(reports)
    if args.out:
        Path(args.out).write_text(tsv, encoding="utf-8")
    else:
        sys.stdout.write(tsv)
    sys.stdout.write(report_table(reports))
    return 0


def cmd_sweep(args) -> int:
    docs, manifest = _load_world(args)
    engine = _build_engine(args, docs, manifest)
    examples = _examples_for(
        manifest, [args.quadrant.upper()], args.limit, args.seed
    )
    lines = [
        "\t".join(
            ("alpha", "beta", "bias", "n", "MRR", "aNDCG", "BLEU_RR",
             "PPN", "PRN")
        )
    ]
    for alpha in SWEEP_ALPHAS:
        for beta in SWEEP_BETAS:
            for bias in SWEEP_BIASES:
                ns = argparse.Namespace(
                    alpha=alpha, beta=beta, bias=bias,
                    lam=args.lam, context=args.context, trie=None,
                )
                reports = evaluate_run(
                    examples,
                    _system_callback(engine, "guided", ns),
                    mode_label="guided",
                    with_tes=False,
                )
                rep = reports[0]
                lines.append(
                    "\t".join(
                        (
                            f"{alpha}", f"{beta}", f"{bias:g}",
                            str(rep.n_examples),
                            f"{rep.mrr:.4f}", f"{rep.alpha_ndcg:.4f}",
                            f"{rep.bleu_rr:.4f}", f"{rep.ppn:.4f}",
                            f"{rep.prn:.4f}",
                        )
                    )
                )
    text = "\n".join(lines) + "\n"
    if args.out:
        Path(args.out).write_text(text, encoding="utf-8")
    else:
        sys.stdout.write(text)
    return 0


def cmd_serve(args) -> int:
    import os

    from .service import ENV_CORPUS, create_server

    if not args.corpus_dir and not args.synthetic:
        env_dir = os.environ.get(ENV_CORPUS)
        if env_dir:
            args.corpus_dir = env_dir
        else:
            args.synthetic = True
    docs, manifest = _load_world(args)
    engine = _build_engine(args, docs, manifest)
    server = create_server(engine, args.port, args.ui)
    host, port = server.server_address[:2]
    print(f"listening on http://{host}:{port}/ "
          f"({len(engine.state.documents)} documents)")
    try:
        server.serve_forever()
    except KeyboardInterrupt:
        server.shutdown()
    return 0


_COMMANDS = {
    "synth": cmd_synth,
    "make-splits": cmd_make_splits,
    "train-tokenizer": cmd_train_tokenizer,
    "train-lm": cmd_train_lm,
    "build-trie": cmd_build_trie,
    "complete": cmd_complete,
    "eval": cmd_eval,
    "sweep": cmd_sweep,
    "serve": cmd_serve,
}


def main(argv=None) -> int:
    logging.basicConfig(
        level=logging.INFO, format="%(levelname)s %(name)s %(message)s",
        stream=sys.stderr,
    )
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except UsageError as exc:
        print(f"usage error: {exc}", file=sys.stderr)
        return 1
    LOG.info("resolved config: %s", {k: v for k, v in vars(args).items()})
    try:
        return _COMMANDS[args.command](args)
    except UsageError as exc:
        print(f"usage error: {exc}", file=sys.stderr)
        return 1
    except (QacError, OSError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
