"""Text normalization used by every trie insertion, lookup, and metric match."""

import re

_WORD_RE = re.compile(r"[a-z0-9]+")


def normalize(text: str) -> str:
    """Lowercase and collapse all whitespace runs to single spaces."""
    return " ".join(text.lower().split())


def normalize_prefix(text: str) -> str:
    """Normalize a typed prefix, keeping one trailing space if the user typed one.

    A trailing space is meaningful while typing: the completions of
    "machine " and "machine" walk different trie paths.
    """
    norm = normalize(text)
    if norm and text and text[-1].isspace():
        return norm + " "
    return norm


def words(text: str) -> list[str]:
    """Alphanumeric word tokens of lowercased text (punctuation dropped)."""
    return _WORD_RE.findall(text.lower())
