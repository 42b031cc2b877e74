"""Trainable byte-pair subword tokenizer with a prefix/suffix split encoding.

The vocabulary is learned from a query corpus: every distinct character is a
base token, then the most frequent adjacent token pair is merged greedily
until the requested vocabulary size is reached (ties broken by the smaller
merged string, so training is reproducible bit for bit). Three ids are
reserved ahead of the learned tokens:

    0  UNK        characters outside the training alphabet
    1  EOS        terminates every generated sequence
    2  SEP_SPLIT  marks the prefix-to-suffix transition in split encodings

``encode_split(prefix, suffix)`` produces ``encode(prefix) + [SEP_SPLIT] +
encode(suffix)``. Tokenizing the two sides separately means a mid-token
typing position like "machine lea" is itself a valid token path, which is
what lets a token-level trie validate character-level user input.
"""

from __future__ import annotations

import heapq
from collections import Counter, defaultdict

from .errors import CorruptFileError, InvalidInputError

UNK_ID = 0
EOS_ID = 1
SEP_SPLIT_ID = 2
NUM_SPECIALS = 3

REPLACEMENT_CHAR = "\ufffd"
_SPECIAL_PLACEHOLDERS = ("<unk>", "<eos>", "<sep_split>")
_MAGIC = "QTOK1"

# Sentinel for characters outside the alphabet; never equal to any token
# string, so merges can never consume it.
_UNK_SENTINEL = object()


class TokenizerModel:
    """Immutable trained tokenizer: alphabet, ordered merges, id table."""

    def __init__(self, alphabet: list[str], merges: list[tuple[str, str]]):
        self.alphabet = list(alphabet)
        self.merges = [tuple(m) for m in merges]
        self.token_to_id: dict[str, int] = {}
        next_id = NUM_SPECIALS
        for ch in self.alphabet:
            if ch in self.token_to_id:
                raise InvalidInputError(f"duplicate alphabet entry {ch!r}")
            self.token_to_id[ch] = next_id
            next_id += 1
        for left, right in self.merges:
            merged = left + right
            if merged in self.token_to_id:
                raise InvalidInputError(f"duplicate merge product {merged!r}")
            self.token_to_id[merged] = next_id
            next_id += 1
        self.id_to_token: dict[int, str] = {
            i: t for t, i in self.token_to_id.items()
        }
        self.vocab_size = next_id
        # Pure memo over an immutable model; a lost race just recomputes.
        self._encode_cache: dict[str, list[int]] = {}

    def __eq__(self, other: object) -> bool:
        return (
            isinstance(other, TokenizerModel)
            and self.alphabet == other.alphabet
            and self.merges == other.merges
        )

    def encode(self, text: str) -> list[int]:
        """Token ids for ``text``; out-of-alphabet characters become UNK."""
        if not text:
            return []
        cached = self._encode_cache.get(text)
        if cached is not None:
            return list(cached)
        tokens: list[object] = [
            ch if ch in self.token_to_id else _UNK_SENTINEL for ch in text
        ]
        present = {t for t in tokens if t is not _UNK_SENTINEL}
        for left, right in self.merges:
            if left not in present or right not in present:
                continue
            merged = left + right
            out: list[object] = []
            i = 0
            n = len(tokens)
            while i < n:
                if i + 1 < n and tokens[i] == left and tokens[i + 1] == right:
                    out.append(merged)
                    i += 2
                else:
                    out.append(tokens[i])
                    i += 1
            tokens = out
            present.add(merged)
        ids = [
            UNK_ID if t is _UNK_SENTINEL else self.token_to_id[t]  # type: ignore[index]
            for t in tokens
        ]
        if len(text) <= 256 and len(self._encode_cache) < 500_000:
            self._encode_cache[text] = ids
            return list(ids)
        return ids

    def decode(self, ids: list[int]) -> str:
        """Inverse of encode over the alphabet; specials are stripped."""
        parts = []
        for i in ids:
            if i in (EOS_ID, SEP_SPLIT_ID):
                continue
            if i == UNK_ID:
                parts.append(REPLACEMENT_CHAR)
                continue
            token = self.id_to_token.get(i)
            if token is None:
                raise InvalidInputError(f"unknown token id {i}")
            parts.append(token)
        return "".join(parts)

    def encode_split(self, prefix: str, suffix: str) -> list[int]:
        """``encode(prefix) + [SEP_SPLIT] + encode(suffix)``.

        The two sides are tokenized independently so that every character
        split point of a query maps to a distinct, unambiguous token path.
        """
        if not prefix:
            raise InvalidInputError("split prefix must be non-empty")
        return self.encode(prefix) + [SEP_SPLIT_ID] + self.encode(suffix)


def train_bpe(corpus, vocab_size: int) -> TokenizerModel:
    """Learn a BPE vocabulary of ``vocab_size`` ids (specials included).

    Greedy most-frequent-pair merging; stops early when no adjacent pair
    occurs at least twice. Ties: lexicographically smallest merged string,
    then smallest pair.
    """
    sequences = [list(text) for text in corpus]
    if not sequences:
        raise InvalidInputError("training corpus must be non-empty")
    alphabet = sorted({ch for seq in sequences for ch in seq})
    if vocab_size < len(alphabet) + NUM_SPECIALS:
        raise InvalidInputError(
            f"vocab_size {vocab_size} cannot hold {len(alphabet)} characters "
            f"plus {NUM_SPECIALS} specials"
        )

    budget = vocab_size - len(alphabet) - NUM_SPECIALS
    merges: list[tuple[str, str]] = []
    if budget == 0:
        return TokenizerModel(alphabet, merges)

    counts: Counter = Counter()
    occ: defaultdict[tuple[str, str], set[int]] = defaultdict(set)
    for si, seq in enumerate(sequences):
        for pair in zip(seq, seq[1:]):
            counts[pair] += 1
            occ[pair].add(si)

    # Lazy max-heap; stale entries are skipped when their count is outdated.
    heap = [(-c, l + r, l, r) for (l, r), c in counts.items()]
    heapq.heapify(heap)

    while len(merges) < budget and heap:
        neg, _, left, right = heapq.heappop(heap)
        pair = (left, right)
        current = counts.get(pair, 0)
        if current != -neg:
            continue  # stale
        if current < 2:
            break
        merges.append(pair)
        merged = left + right
        touched: set[tuple[str, str]] = set()
        for si in sorted(occ.get(pair, ())):
            seq = sequences[si]
            for p in zip(seq, seq[1:]):
                counts[p] -= 1
                occ[p].discard(si)
                touched.add(p)
            new_seq: list[str] = []
            i = 0
            n = len(seq)
            while i < n:
                if i + 1 < n and seq[i] == left and seq[i + 1] == right:
                    new_seq.append(merged)
                    i += 2
                else:
                    new_seq.append(seq[i])
                    i += 1
            sequences[si] = new_seq
            for p in zip(new_seq, new_seq[1:]):
                counts[p] += 1
                occ[p].add(si)
                touched.add(p)
        counts.pop(pair, None)
        occ.pop(pair, None)
        touched.discard(pair)
        for p in touched:
            if counts.get(p, 0) >= 2:
                heapq.heappush(heap, (-counts[p], p[0] + p[1], p[0], p[1]))

    return TokenizerModel(alphabet, merges)


def _escape(token: str) -> str:
    return token.replace("\\", "\\\\").replace("\t", "\\t").replace("\n", "\\n")


def _unescape(raw: str) -> str:
    out = []
    i = 0
    while i < len(raw):
        ch = raw[i]
        if ch == "\\" and i + 1 < len(raw):
            nxt = raw[i + 1]
            if nxt == "t":
                out.append("\t")
            elif nxt == "n":
                out.append("\n")
            elif nxt == "\\":
                out.append("\\")
            else:
                out.append(nxt)
            i += 2
        else:
            out.append(ch)
            i += 1
    return "".join(out)


def save_tokenizer(model: TokenizerModel, path: str) -> None:
    """Write the QTOK1 text format: header, tokens in id order, merges."""
    lines = [_MAGIC, str(model.vocab_size)]
    lines.extend(_SPECIAL_PLACEHOLDERS)
    for i in range(NUM_SPECIALS, model.vocab_size):
        lines.append(_escape(model.id_to_token[i]))
    lines.append("#MERGES")
    for left, right in model.merges:
        lines.append(f"{_escape(left)}\t{_escape(right)}")
    with open(path, "w", encoding="utf-8") as fh:
        fh.write("\n".join(lines) + "\n")


def load_tokenizer(path: str) -> TokenizerModel:
    with open(path, "r", encoding="utf-8") as fh:
        lines = fh.read().split("\n")
    if not lines or lines[0] != _MAGIC:
        raise CorruptFileError(f"bad tokenizer magic in {path}")
    try:
        vocab_size = int(lines[1])
    except (IndexError, ValueError) as exc:
        raise CorruptFileError("missing vocab size") from exc
    if vocab_size < NUM_SPECIALS or len(lines) < 2 + vocab_size + 1:
        raise CorruptFileError("truncated tokenizer file")
    tokens = [_unescape(line) for line in lines[2 : 2 + vocab_size]]
    if lines[2 + vocab_size] != "#MERGES":
        raise CorruptFileError("missing #MERGES section")
    merges = []
    for line in lines[3 + vocab_size :]:
        if not line:
            continue
        parts = line.split("\t")
        if len(parts) != 2:
            raise CorruptFileError(f"malformed merge line {line!r}")
        merges.append((_unescape(parts[0]), _unescape(parts[1])))
    alphabet = [t for t in tokens[NUM_SPECIALS:] if len(t) == 1]
    model = TokenizerModel(alphabet, merges)
    if model.vocab_size != vocab_size:
        raise CorruptFileError("token table inconsistent with merges")
    for i in range(NUM_SPECIALS, vocab_size):
        if model.id_to_token[i] != tokens[i]:
            raise CorruptFileError(f"token id {i} out of order")
    return model
