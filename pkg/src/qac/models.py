"""Shared domain dataclasses."""

from __future__ import annotations

from dataclasses import dataclass, field


@dataclass(frozen=True)
class WeightedQuery:
    """A query string with its (possibly fractional) click count."""

    text: str
    clicks: float = 1.0


@dataclass
class Suggestion:
    """One ranked completion returned to the user.

    ``score`` is source-dependent: click weight for popularity-trie results,
    length-normalized log-probability for generated ones.
    """

    text: str
    score: float
    rank: int = 0
    source: str = "lm"  # mpc | lm | guided
    trie_conforming: bool = False


@dataclass
class DocumentRecord:
    doc_id: str
    url: str = ""
    title: str = ""
    body: str = ""
    queries: list[WeightedQuery] = field(default_factory=list)


@dataclass(frozen=True)
class QueryDocPair:
    query: WeightedQuery
    doc_id: str
    origin: str = "clicked"  # clicked | augmented


@dataclass(frozen=True)
class EvalExample:
    """One test instance: complete `prefix` within `doc_id`, target known."""

    target: str
    doc_id: str
    prefix: str
    quadrant: str  # SS | SU | US | UU


@dataclass
class MetricReport:
    """Mean metric values over one quadrant for one system configuration."""

    quadrant: str
    mode: str
    n_examples: int
    mrr: float
    alpha_ndcg: float
    bleu_rr: float
    sbmrr: float | None
    ppn: float
    prn: float
    tes: float | None
    sbmrr_skipped: int = 0
