"""Completion tries with popularity ranking, and the token-level guidance trie.

Two structures share serialization machinery but serve different lookups:

* ``CompletionTrie`` is a character trie over full query strings. Each
  terminal stores the query's click weight, and every node caches the
  maximum terminal weight in its subtree, so the top-k most popular
  completions of a prefix are found best-first without scanning the
  whole subtree.

* ``GuidanceTrie`` is a trie over token-id sequences of the form
  ``encode(prefix) + [SEP_SPLIT] + encode(suffix) + [EOS]``, one sequence
  per character split point of every indexed query. During decoding it
  answers "which tokens may legally follow this partial hypothesis".
"""

from __future__ import annotations

import heapq
import io
from collections import Counter
from typing import Iterator, Sequence

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
from .models import Suggestion, WeightedQuery
from .textnorm import normalize, normalize_prefix, words
from .tokenizer import EOS_ID, SEP_SPLIT_ID, TokenizerModel

COMPLETION_MAGIC = b"QTRIE1"
GUIDANCE_MAGIC = b"QGTRI1"


class _CNode:
    __slots__ = ("children", "terminal", "weight", "max_weight")

    def __init__(self):
        self.children: dict[str, _CNode] = {}
        self.terminal = False
        self.weight = 0.0
        self.max_weight = 0.0


class CompletionTrie:
    """Character trie with per-node max subtree weight for top-k pruning."""

    def __init__(self):
        self.root = _CNode()
        self.n_terminals = 0

    def insert(self, text: str, weight: float) -> None:
        """Add ``text`` (assumed normalized); duplicate weights accumulate."""
        if not text:
            return
        node = self.root
        path = [node]
        for ch in text:
            node = node.children.setdefault(ch, _CNode())
            path.append(node)
        if not node.terminal:
            node.terminal = True
            self.n_terminals += 1
        node.weight += weight
        # Weights only grow, so a path max update keeps the cache exact.
        for n in path:
            if node.weight > n.max_weight:
                n.max_weight = node.weight

    def _walk(self, text: str) -> _CNode | None:
        node = self.root
        for ch in text:
            node = node.children.get(ch)
            if node is None:
                return None
        return node

    def items(self) -> Iterator[tuple[str, float]]:
        stack = [("", self.root)]
        while stack:
            text, node = stack.pop()
            if node.terminal:
                yield text, node.weight
            for ch, child in node.children.items():
                stack.append((text + ch, child))

    def mpc(self, prefix: str, k: int) -> list[Suggestion]:
        """Top-k most popular completions of ``prefix``.

        Ranking is weight descending, then text ascending. An absent prefix
        path yields an empty list (the "no matches" outcome), never an error.
        """
        if k <= 0:
            raise InvalidInputError("k must be positive")
        norm = normalize_prefix(prefix)
        if not norm:
            raise InvalidInputError("prefix must be non-empty")
        start = self._walk(norm)
        if start is None:
            return []
        # Best-first over (weight desc, text asc); a subtree entry's key is a
        # lower bound for every terminal inside it, so pops arrive in final
        # rank order. kind 0 = terminal, 1 = subtree, so an exact terminal
        # precedes its own subtree expansion on ties.
        heap: list[tuple[float, str, int, _CNode]] = [
            (-start.max_weight, norm, 1, start)
        ]
        out: list[Suggestion] = []
        while heap and len(out) < k:
            negw, text, kind, node = heapq.heappop(heap)
            if kind == 0:
                out.append(
                    Suggestion(
                        text=text,
                        score=-negw,
                        rank=len(out) + 1,
                        source="mpc",
                        trie_conforming=True,
                    )
                )
                continue
            if node.terminal:
                heapq.heappush(heap, (-node.weight, text, 0, node))
            for ch, child in node.children.items():
                heapq.heappush(heap, (-child.max_weight, text + ch, 1, child))
        return out


def build_completion_trie(queries: Sequence[WeightedQuery]) -> CompletionTrie:
    """Index weighted queries; duplicates merge by summing clicks."""
    trie = CompletionTrie()
    for wq in queries:
        text = normalize(wq.text)
        if text:
            trie.insert(text, wq.clicks)
    return trie


def build_docc_trie(body: str, max_n: int = 5) -> CompletionTrie:
    """Completion trie over the body's word n-grams (n in [1, max_n]).

    Weight is the n-gram's occurrence count; n-grams shorter than 3
    characters are dropped, matching the minimum query length.
    """
    tokens = words(body)
    grams: Counter = Counter()
    for n in range(1, max_n + 1):
        for i in range(len(tokens) - n + 1):
            gram = " ".join(tokens[i : i + n])
            if len(gram) >= 3:
                grams[gram] += 1
    trie = CompletionTrie()
    for gram, count in grams.items():
        trie.insert(gram, float(count))
    return trie


class _GNode:
    __slots__ = ("children", "terminal")

    def __init__(self):
        self.children: dict[int, _GNode] = {}
        self.terminal = False


class GuidanceTrie:
    """Trie over token-id sequences; drives valid-next-token lookups."""

    def __init__(self):
        self.root = _GNode()
        self.n_sequences = 0

    def insert(self, seq: Sequence[int]) -> None:
        node = self.root
        for tok in seq:
            node = node.children.setdefault(tok, _GNode())
        if not node.terminal:
            node.terminal = True
            self.n_sequences += 1

    def node_after(self, path: Sequence[int]) -> _GNode | None:
        node = self.root
        for tok in path:
            node = node.children.get(tok)
            if node is None:
                return None
        return node

    def valid_next_tokens(self, path: Sequence[int]) -> set[int]:
        """Edge labels leaving the node reached by ``path``; empty if absent."""
        node = self.node_after(path)
        if node is None:
            return set()
        return set(node.children.keys())

    def has_path(self, path: Sequence[int]) -> bool:
        return self.node_after(path) is not None

    def is_terminal_sequence(self, seq: Sequence[int]) -> bool:
        node = self.node_after(seq)
        return node is not None and node.terminal


def build_guidance_trie(
    queries: Sequence[WeightedQuery], tok: TokenizerModel
) -> GuidanceTrie:
    """Insert every character split point of every query, EOS-terminated.

    For query q and split point i in [1, |q|] the stored sequence is
    ``encode(q[:i]) + [SEP_SPLIT] + encode(q[i:]) + [EOS]``, so a decode
    that starts from any typed prefix of q can follow a trie path all the
    way to a validated end of query.
    """
    trie = GuidanceTrie()
    seen: set[str] = set()
    for wq in queries:
        text = normalize(wq.text)
        if not text or text in seen:
            continue
        seen.add(text)
        for i in range(1, len(text) + 1):
            seq = tok.encode_split(text[:i], text[i:])
            seq.append(EOS_ID)
            trie.insert(seq)
    return trie


def _label_of_char(ch: str) -> int:
    return ord(ch)


def _serialize_nodes(root, magic: bytes, with_weights: bool) -> bytes:
    # Preorder with children sorted by label; child references are preorder
    # indices, validated as strictly forward on load.
    order: list = []
    index: dict[int, int] = {}
    stack = [root]
    while stack:
        node = stack.pop()
        index[id(node)] = len(order)
        order.append(node)
        children = sorted(node.children.items(), key=lambda kv: kv[0])
        for _, child in reversed(children):
            stack.append(child)
    body = io.BytesIO()
    body.write(magic)
    write_u32(body, len(order))
    for node in order:
        children = sorted(node.children.items(), key=lambda kv: kv[0])
        write_varint(body, len(children))
        for label, child in children:
            lab = _label_of_char(label) if isinstance(label, str) else label
            write_varint(body, lab)
            write_varint(body, index[id(child)])
        body.write(b"\x01" if node.terminal else b"\x00")
        if with_weights:
            write_f64(body, node.weight)
            write_f64(body, node.max_weight)
    return body.getvalue()


def serialize_completion_trie(trie: CompletionTrie) -> bytes:
    return _serialize_nodes(trie.root, COMPLETION_MAGIC, with_weights=True)


def serialize_guidance_trie(trie: GuidanceTrie) -> bytes:
    return _serialize_nodes(trie.root, GUIDANCE_MAGIC, with_weights=False)


def _deserialize_nodes(data: bytes, magic: bytes, with_weights: bool):
    buf = io.BytesIO(data)
    expect_magic(buf, magic)
    count = read_u32(buf)
    if count == 0:
        raise CorruptFileError("node count must be at least 1 (the root)")
    nodes = [(_CNode() if with_weights else _GNode()) for _ in range(count)]
    raw_edges: list[list[tuple[int, int]]] = []
    for i in range(count):
        n_edges = read_varint(buf)
        edges = []
        for _ in range(n_edges):
            label = read_varint(buf)
            child = read_varint(buf)
            if child <= i or child >= count:
                raise CorruptFileError(
                    f"child offset {child} out of range at node {i}"
                )
            edges.append((label, child))
        raw_edges.append(edges)
        flag = buf.read(1)
        if len(flag) != 1 or flag[0] not in (0, 1):
            raise CorruptFileError("bad terminal flag")
        nodes[i].terminal = bool(flag[0])
        if with_weights:
            nodes[i].weight = read_f64(buf)
            nodes[i].max_weight = read_f64(buf)
    expect_eof(buf)
    for i, edges in enumerate(raw_edges):
        for label, child in edges:
            key = chr(label) if with_weights else label
            nodes[i].children[key] = nodes[child]
    return nodes


def deserialize_completion_trie(data: bytes) -> CompletionTrie:
    nodes = _deserialize_nodes(data, COMPLETION_MAGIC, with_weights=True)
    trie = CompletionTrie()
    trie.root = nodes[0]
    trie.n_terminals = sum(1 for n in nodes if n.terminal)
    return trie


def deserialize_guidance_trie(data: bytes) -> GuidanceTrie:
    nodes = _deserialize_nodes(data, GUIDANCE_MAGIC, with_weights=False)
    trie = GuidanceTrie()
    trie.root = nodes[0]
    trie.n_sequences = sum(1 for n in nodes if n.terminal)
    return trie
