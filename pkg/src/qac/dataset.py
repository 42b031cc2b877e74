"""Dataset pipeline: filtering, quadrant splits, prefix sampling, pseudo-clicks.

The test set is partitioned into four quadrants by whether the query and the
document were seen during training:

    SS  query in train queries, doc in train docs (the pair itself held out)
    SU  query seen, doc unseen
    US  query unseen, doc seen
    UU  both unseen

No test pair ever appears in train. Pools are drawn with a seeded RNG so the
whole pipeline is reproducible byte for byte.
"""

from __future__ import annotations

import json
import logging
import math
import random
import urllib.error
import urllib.request
from collections import Counter
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Callable, Mapping, Sequence

from .errors import InvalidInputError, ResponseParseError
from .models import DocumentRecord, QueryDocPair, WeightedQuery
from .textnorm import normalize

LOG = logging.getLogger(__name__)

MIN_QUERY_CHARS = 3
MIN_DOC_QUERIES = 10  # exclusive: keep docs with strictly more
MAX_DOC_QUERIES = 500  # exclusive: keep docs with strictly fewer


def preprocess(
    pairs: Sequence[QueryDocPair],
    docs: Mapping[str, DocumentRecord] | set[str],
) -> tuple[list[QueryDocPair], dict[str, int]]:
    """Apply the corpus filters; returns surviving pairs plus drop counts."""
    doc_ids = set(docs.keys()) if isinstance(docs, Mapping) else set(docs)
    stats = Counter()
    merged: dict[tuple[str, str], QueryDocPair] = {}
    for pair in pairs:
        text = normalize(pair.query.text)
        if len(text) < MIN_QUERY_CHARS:
            stats["short_query"] += 1
            continue
        key = (text, pair.doc_id)
        if key in merged:
            stats["duplicate_pair"] += 1
            old = merged[key]
            merged[key] = QueryDocPair(
                query=WeightedQuery(text, old.query.clicks + pair.query.clicks),
                doc_id=pair.doc_id,
                origin=old.origin,
            )
        else:
            merged[key] = QueryDocPair(
                query=WeightedQuery(text, pair.query.clicks),
                doc_id=pair.doc_id,
                origin=pair.origin,
            )
    per_doc = Counter(p.doc_id for p in merged.values())
    out = []
    for key in sorted(merged):
        pair = merged[key]
        if pair.doc_id not in doc_ids:
            stats["missing_doc"] += 1
            continue
        if per_doc[pair.doc_id] <= MIN_DOC_QUERIES:
            stats["doc_too_few_queries"] += 1
            continue
        if per_doc[pair.doc_id] >= MAX_DOC_QUERIES:
            stats["doc_too_many_queries"] += 1
            continue
        out.append(pair)
    stats["kept"] = len(out)
    return out, dict(stats)


@dataclass(frozen=True)
class SplitFractions:
    unseen_query: float = 0.25
    unseen_doc: float = 0.25
    validation: float = 0.08
    ss_holdout: float = 0.12
    quadrant_cap: int = 3000


@dataclass
class SplitManifest:
    train: list[QueryDocPair]
    validation: list[QueryDocPair]
    test: dict[str, list[QueryDocPair]]
    seed: int
    fractions: SplitFractions = field(default_factory=SplitFractions)

    @property
    def train_queries(self) -> set[str]:
        return {p.query.text for p in self.train}

    @property
    def train_docs(self) -> set[str]:
        return {p.doc_id for p in self.train}


def make_splits(
    pairs: Sequence[QueryDocPair],
    seed: int,
    fractions: SplitFractions = SplitFractions(),
) -> SplitManifest:
    """Partition preprocessed pairs into train/validation/test quadrants."""
    pairs = sorted(pairs, key=lambda p: (p.query.text, p.doc_id))
    rng = random.Random(seed)

    queries = sorted({p.query.text for p in pairs})
    docs = sorted({p.doc_id for p in pairs})
    rng.shuffle(queries)
    rng.shuffle(docs)
    n_uq = int(math.ceil(len(queries) * fractions.unseen_query))
    n_ud = int(math.ceil(len(docs) * fractions.unseen_doc))
    unseen_q = set(queries[:n_uq])
    unseen_d = set(docs[:n_ud])

    both_seen, su, us, uu = [], [], [], []
    for pair in pairs:
        q_unseen = pair.query.text in unseen_q
        d_unseen = pair.doc_id in unseen_d
        if not q_unseen and not d_unseen:
            both_seen.append(pair)
        elif not q_unseen and d_unseen:
            su.append(pair)
        elif q_unseen and not d_unseen:
            us.append(pair)
        else:
            uu.append(pair)

    rng.shuffle(both_seen)
    n_val = int(len(both_seen) * fractions.validation)
    validation = both_seen[:n_val]
    remainder = both_seen[n_val:]

    # Hold out SS pairs only while their query and doc stay covered by the
    # remaining train pairs, otherwise "seen" would stop being true.
    q_count = Counter(p.query.text for p in remainder)
    d_count = Counter(p.doc_id for p in remainder)
    ss_budget = min(
        fractions.quadrant_cap, int(len(remainder) * fractions.ss_holdout)
    )
    ss: list[QueryDocPair] = []
    train: list[QueryDocPair] = []
    for pair in remainder:
        if (
            len(ss) < ss_budget
            and q_count[pair.query.text] > 1
            and d_count[pair.doc_id] > 1
        ):
            ss.append(pair)
            q_count[pair.query.text] -= 1
            d_count[pair.doc_id] -= 1
        else:
            train.append(pair)

    train_queries = {p.query.text for p in train}
    train_docs = {p.doc_id for p in train}

    su = [p for p in su if p.query.text in train_queries]
    us = [p for p in us if p.doc_id in train_docs]
    rng.shuffle(su)
    rng.shuffle(us)
    rng.shuffle(uu)

    test = {}
    for name, bucket in (("SS", ss), ("SU", su), ("US", us), ("UU", uu)):
        capped = bucket[: fractions.quadrant_cap]
        if len(capped) < fractions.quadrant_cap:
            LOG.warning(
                "quadrant %s has only %d pairs (requested %d)",
                name,
                len(capped),
                fractions.quadrant_cap,
            )
        test[name] = sorted(capped, key=lambda p: (p.query.text, p.doc_id))

    manifest = SplitManifest(
        train=sorted(train, key=lambda p: (p.query.text, p.doc_id)),
        validation=sorted(validation, key=lambda p: (p.query.text, p.doc_id)),
        test=test,
        seed=seed,
        fractions=fractions,
    )
    problems = check_manifest(manifest)
    if problems:
        raise AssertionError(f"split invariants violated: {problems}")
    return manifest


def check_manifest(manifest: SplitManifest) -> list[str]:
    """Re-check every quadrant membership predicate and train/test leakage."""
    problems = []
    tq = manifest.train_queries
    td = manifest.train_docs
    train_pairs = {(p.query.text, p.doc_id) for p in manifest.train}
    wants = {
        "SS": lambda p: p.query.text in tq and p.doc_id in td,
        "SU": lambda p: p.query.text in tq and p.doc_id not in td,
        "US": lambda p: p.query.text not in tq and p.doc_id in td,
        "UU": lambda p: p.query.text not in tq and p.doc_id not in td,
    }
    for quadrant, pred in wants.items():
        for pair in manifest.test.get(quadrant, []):
            if not pred(pair):
                problems.append(
                    f"{quadrant} violated by ({pair.query.text!r}, {pair.doc_id!r})"
                )
            if (pair.query.text, pair.doc_id) in train_pairs:
                problems.append(
                    f"test pair leaked into train: "
                    f"({pair.query.text!r}, {pair.doc_id!r})"
                )
    return problems


def dynamic_prefix_split(query: str, rng: random.Random) -> tuple[str, str]:
    """Uniform random character split into non-empty prefix and suffix."""
    if len(query) < MIN_QUERY_CHARS:
        raise InvalidInputError(f"query too short to split: {query!r}")
    point = rng.randint(1, len(query) - 1)
    return query[:point], query[point:]


def trigram_cosine(a: str, b: str) -> float:
    """Cosine over character-trigram count vectors; short strings count whole."""

    def profile(s: str) -> Counter:
        if len(s) < 3:
            return Counter({s: 1}) if s else Counter()
        return Counter(s[i : i + 3] for i in range(len(s) - 2))

    pa, pb = profile(a), profile(b)
    if not pa or not pb:
        return 0.0
    dot = sum(c * pb.get(g, 0) for g, c in pa.items())
    na = math.sqrt(sum(c * c for c in pa.values()))
    nb = math.sqrt(sum(c * c for c in pb.values()))
    return dot / (na * nb)


def estimate_clicks(
    aug_query: str,
    known: Sequence[WeightedQuery],
    sim: Callable[[str, str], float] = trigram_cosine,
    top: int = 5,
) -> float:
    """Similarity-weighted mean of the closest known queries' click counts."""
    if not known:
        raise InvalidInputError("no known queries to estimate from")
    scored = sorted(
        ((sim(aug_query, wq.text), wq) for wq in known),
        key=lambda pair: (-pair[0], pair[1].text),
    )[:top]
    weight_sum = sum(s for s, _ in scored)
    if weight_sum == 0.0:
        return 0.0
    return sum(s * wq.clicks for s, wq in scored) / weight_sum


def levenshtein(a: str, b: str) -> int:
    if len(a) < len(b):
        a, b = b, a
    previous = list(range(len(b) + 1))
    for i, ca in enumerate(a, start=1):
        current = [i]
        for j, cb in enumerate(b, start=1):
            current.append(
                min(
                    previous[j] + 1,
                    current[j - 1] + 1,
                    previous[j - 1] + (ca != cb),
                )
            )
        previous = current
    return previous[-1]


def near_duplicate(a: str, b: str) -> bool:
    """True iff edit distance is at most 1."""
    if abs(len(a) - len(b)) > 1:
        return False
    return levenshtein(a, b) <= 1


_RELEVANCE_INSTRUCTION = (
    "You are a strict binary relevance classifier for in-document search. "
    "Given a document and a candidate search query, decide whether the "
    "document genuinely addresses the query's topic, entities, or intent. "
    "Answer with JSON only, exactly in this shape: "
    '{"query_relevance": bool, "id": string, "Query": string, "docid": string}.'
)


def relevance_client(
    endpoint: str | None,
    doc: DocumentRecord,
    query: str,
    pair_id: str = "",
    timeout: float = 10.0,
) -> bool | None:
    """Ask a chat-completion-style endpoint whether query fits document.

    Returns None ("unavailable") when no endpoint is configured or it cannot
    be reached in time; the pipeline then keeps the pair. A reachable
    endpoint answering without the expected JSON fields raises
    ResponseParseError.
    """
    if not endpoint:
        return None
    payload = {
        "messages": [
            {"role": "system", "content": _RELEVANCE_INSTRUCTION},
            {
                "role": "user",
                "content": json.dumps(
                    {
                        "Document": doc.body,
                        "Query": query,
                        "id": pair_id,
                        "docid": doc.doc_id,
                    }
                ),
            },
        ]
    }
    request = urllib.request.Request(
        endpoint,
        data=json.dumps(payload).encode("utf-8"),
        headers={"Content-Type": "application/json"},
        method="POST",
    )
    try:
        with urllib.request.urlopen(request, timeout=timeout) as response:
            raw = response.read().decode("utf-8")
    except (urllib.error.URLError, TimeoutError, OSError):
        return None
    try:
        body = json.loads(raw)
    except json.JSONDecodeError as exc:
        LOG.error("relevance endpoint returned non-JSON: %r", raw)
        raise ResponseParseError(f"unparseable relevance response: {raw!r}") from exc
    if isinstance(body, dict) and "choices" in body:
        try:
            content = body["choices"][0]["message"]["content"]
            body = json.loads(content)
        except (KeyError, IndexError, TypeError, json.JSONDecodeError) as exc:
            LOG.error("relevance endpoint returned odd envelope: %r", raw)
            raise ResponseParseError(
                f"unparseable relevance envelope: {raw!r}"
            ) from exc
    if not isinstance(body, dict) or "query_relevance" not in body:
        LOG.error("relevance response missing query_relevance: %r", raw)
        raise ResponseParseError(f"missing query_relevance field: {raw!r}")
    return bool(body["query_relevance"])


def filter_augmented(
    candidates: Sequence[QueryDocPair],
    docs: Mapping[str, DocumentRecord],
    clicked: Sequence[QueryDocPair],
) -> list[QueryDocPair]:
    """Keep pre-mined similar queries that pass the shareability filters:

    verbatim presence in the paired document's body, no near-duplicate of a
    clicked query for the same document, and not already clicked there.
    """
    clicked_by_doc: dict[str, list[str]] = {}
    for pair in clicked:
        clicked_by_doc.setdefault(pair.doc_id, []).append(
            normalize(pair.query.text)
        )
    kept = []
    for pair in candidates:
        text = normalize(pair.query.text)
        doc = docs.get(pair.doc_id)
        if doc is None or text not in normalize(doc.body):
            continue
        existing = clicked_by_doc.get(pair.doc_id, [])
        if text in existing:
            continue
        if any(near_duplicate(text, other) for other in existing):
            continue
        kept.append(
            QueryDocPair(
                query=WeightedQuery(text, pair.query.clicks),
                doc_id=pair.doc_id,
                origin="augmented",
            )
        )
    return kept


# ---------------------------------------------------------------------------
# File formats

_TEST_FILES = {
    "SS": "test_ss.tsv",
    "SU": "test_su.tsv",
    "US": "test_us.tsv",
    "UU": "test_uu.tsv",
}


def write_pairs_tsv(pairs: Sequence[QueryDocPair], path: str | Path) -> None:
    lines = [
        f"{p.query.text}\t{p.doc_id}\t{p.query.clicks!r}\t{p.origin}"
        for p in pairs
    ]
    Path(path).write_text(
        "\n".join(lines) + ("\n" if lines else ""), encoding="utf-8"
    )


def read_pairs_tsv(path: str | Path) -> list[QueryDocPair]:
    pairs = []
    for line in Path(path).read_text(encoding="utf-8").splitlines():
        if not line:
            continue
        parts = line.split("\t")
        if len(parts) != 4:
            raise InvalidInputError(f"malformed pair line: {line!r}")
        text, doc_id, clicks, origin = parts
        pairs.append(
            QueryDocPair(
                query=WeightedQuery(text, float(clicks)),
                doc_id=doc_id,
                origin=origin,
            )
        )
    return pairs


def write_manifest(manifest: SplitManifest, out_dir: str | Path) -> None:
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    write_pairs_tsv(manifest.train, out / "train.tsv")
    write_pairs_tsv(manifest.validation, out / "val.tsv")
    for quadrant, filename in _TEST_FILES.items():
        write_pairs_tsv(manifest.test.get(quadrant, []), out / filename)
    meta = {
        "seed": manifest.seed,
        "fractions": asdict(manifest.fractions),
        "counts": {
            "train": len(manifest.train),
            "validation": len(manifest.validation),
            **{q: len(manifest.test.get(q, [])) for q in _TEST_FILES},
        },
    }
    (out / "manifest.json").write_text(
        json.dumps(meta, indent=2, sort_keys=True) + "\n", encoding="utf-8"
    )


def load_manifest(out_dir: str | Path) -> SplitManifest:
    out = Path(out_dir)
    meta = json.loads((out / "manifest.json").read_text(encoding="utf-8"))
    return SplitManifest(
        train=read_pairs_tsv(out / "train.tsv"),
        validation=read_pairs_tsv(out / "val.tsv"),
        test={
            q: read_pairs_tsv(out / f) for q, f in _TEST_FILES.items()
        },
        seed=meta["seed"],
        fractions=SplitFractions(**meta["fractions"]),
    )


def escape_field(text: str) -> str:
    return text.replace("\\", "\\\\").replace("\t", "\\t").replace("\n", "\\n")


def unescape_field(raw: str) -> str:
    out = []
    i = 0
    while i < len(raw):
        ch = raw[i]
        if ch == "\\" and i + 1 < len(raw):
            nxt = raw[i + 1]
            out.append({"t": "\t", "n": "\n", "\\": "\\"}.get(nxt, nxt))
            i += 2
        else:
            out.append(ch)
            i += 1
    return "".join(out)


def write_corpus_tsv(
    docs: Sequence[DocumentRecord], path: str | Path
) -> None:
    lines = [
        "\t".join(
            (
                d.doc_id,
                escape_field(d.url),
                escape_field(d.title),
                escape_field(d.body),
            )
        )
        for d in docs
    ]
    Path(path).write_text(
        "\n".join(lines) + ("\n" if lines else ""), encoding="utf-8"
    )


def read_corpus_tsv(path: str | Path) -> list[DocumentRecord]:
    docs = []
    for line in Path(path).read_text(encoding="utf-8").splitlines():
        if not line:
            continue
        parts = line.split("\t")
        if len(parts) != 4:
            raise InvalidInputError(f"malformed corpus line: {line[:80]!r}")
        doc_id, url, title, body = parts
        docs.append(
            DocumentRecord(
                doc_id=doc_id,
                url=unescape_field(url),
                title=unescape_field(title),
                body=unescape_field(body),
            )
        )
    return docs
