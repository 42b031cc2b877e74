"""Evaluation metrics over top-10 suggestion lists.

All matching is on normalized text (lowercase, collapsed whitespace) and all
metrics return values in [0, 1]. The interactive metric is TES (typing
effort saved): the fraction of the target's characters the user did not have
to type because the target surfaced in the visible list.
"""

from __future__ import annotations

import logging
import math
from itertools import permutations
from typing import Callable, Mapping, Sequence

import numpy as np

from .models import EvalExample, MetricReport
from .stopwords import STOPWORDS
from .textnorm import normalize

LOG = logging.getLogger(__name__)

QUADRANTS = ("SS", "SU", "US", "UU")
DEPTH = 10


def mrr(suggestions: Sequence[str], target: str) -> float:
    """Reciprocal rank of the first exact (normalized) match, else 0."""
    goal = normalize(target)
    for rank, sug in enumerate(suggestions[:DEPTH], start=1):
        if normalize(sug) == goal:
            return 1.0 / rank
    return 0.0


def tes(
    system: Callable[[str], Sequence[str]], target: str, top_n: int = DEPTH
) -> float:
    """Typing effort saved: 1 - typed_characters / len(target).

    Simulates typing the target one character at a time; after each
    keystroke the system is queried and typing stops as soon as the target
    appears in the visible top-n. Never surfacing means typing everything,
    which scores 0.
    """
    goal = normalize(target)
    if not goal:
        return 0.0
    for typed in range(1, len(goal) + 1):
        shown = [normalize(s) for s in system(goal[:typed])[:top_n]]
        if goal in shown:
            return 1.0 - typed / len(goal)
    return 0.0


def _content_terms(text: str) -> set[str]:
    return {w for w in normalize(text).split() if w not in STOPWORDS}


def _alpha_gains(
    covers: Sequence[set[str]], nuggets: set[str], alpha: float
) -> list[float]:
    coverage: dict[str, int] = {n: 0 for n in nuggets}
    gains = []
    for cov in covers:
        gain = 0.0
        for nugget in cov:
            gain += (1.0 - alpha) ** coverage[nugget]
            coverage[nugget] += 1
        gains.append(gain)
    return gains


def _dcg(gains: Sequence[float]) -> float:
    return sum(g / math.log2(k + 1) for k, g in enumerate(gains, start=1))


def alpha_ndcg(
    suggestions: Sequence[str],
    target: str,
    alpha: float = 0.5,
    depth: int = DEPTH,
) -> float:
    """Diversity-aware NDCG; nuggets are the target's content terms.

    Each suggestion's gain sums (1 - alpha)^(times the nugget was already
    covered) over the nuggets it contains; the ideal ordering is the greedy
    best-marginal-gain rearrangement of the same list.
    """
    nuggets = _content_terms(target)
    if not nuggets:
        return 0.0
    listed = [
        {n for n in nuggets if n in normalize(s).split()}
        for s in suggestions[:depth]
    ]
    if not listed:
        return 0.0
    dcg = _dcg(_alpha_gains(listed, nuggets, alpha))
    ideal = _greedy_ideal_gains(listed, nuggets, alpha)
    idcg = _dcg(ideal)
    if idcg == 0.0:
        return 0.0
    return dcg / idcg


def _greedy_ideal_gains(
    covers: list[set[str]], nuggets: set[str], alpha: float
) -> list[float]:
    remaining = list(enumerate(covers))
    coverage: dict[str, int] = {n: 0 for n in nuggets}
    gains = []
    while remaining:
        best_gain = -1.0
        best_pos = 0
        for pos, (_, cov) in enumerate(remaining):
            gain = sum((1.0 - alpha) ** coverage[n] for n in cov)
            if gain > best_gain:
                best_gain = gain
                best_pos = pos
        _, chosen = remaining.pop(best_pos)
        for nugget in chosen:
            coverage[nugget] += 1
        gains.append(best_gain)
    return gains


def brute_force_ideal_dcg(
    suggestions: Sequence[str], target: str, alpha: float = 0.5
) -> float:
    """Max DCG over all orderings; exponential, for small-list verification."""
    nuggets = _content_terms(target)
    listed = [
        {n for n in nuggets if n in normalize(s).split()} for s in suggestions
    ]
    best = 0.0
    for perm in permutations(listed):
        best = max(best, _dcg(_alpha_gains(perm, nuggets, alpha)))
    return best


def _ngrams(tokens: Sequence[str], n: int) -> list[tuple[str, ...]]:
    return [tuple(tokens[i : i + n]) for i in range(len(tokens) - n + 1)]


def sentence_bleu(candidate: str, reference: str, max_order: int = 4) -> float:
    """Smoothed sentence BLEU over word n-grams.

    The unigram precision is exact (so zero word overlap scores 0); higher
    orders get add-1 smoothing; standard brevity penalty.
    """
    cand = normalize(candidate).split()
    ref = normalize(reference).split()
    if not cand or not ref:
        return 0.0
    log_sum = 0.0
    for n in range(1, max_order + 1):
        cand_ngrams = _ngrams(cand, n)
        ref_counts: dict[tuple[str, ...], int] = {}
        for gram in _ngrams(ref, n):
            ref_counts[gram] = ref_counts.get(gram, 0) + 1
        matches = 0
        for gram in cand_ngrams:
            if ref_counts.get(gram, 0) > 0:
                ref_counts[gram] -= 1
                matches += 1
        if n == 1:
            if matches == 0:
                return 0.0
            precision = matches / len(cand_ngrams)
        else:
            precision = (matches + 1.0) / (len(cand_ngrams) + 1.0)
        log_sum += math.log(precision)
    bleu = math.exp(log_sum / max_order)
    if len(cand) < len(ref):
        bleu *= math.exp(1.0 - len(ref) / len(cand))
    return bleu


def harmonic(depth: int) -> float:
    return sum(1.0 / k for k in range(1, depth + 1))


def bleu_rr(
    suggestions: Sequence[str],
    target: str,
    depth: int = DEPTH,
    mode: str = "harmonic",
) -> float:
    """Rank-weighted n-gram overlap.

    harmonic: sum_k BLEU(s_k)/k normalized by H_depth (absent ranks add 0).
    max: max_k BLEU(s_k)/k, an alternative reading kept behind the flag.
    """
    scores = [
        sentence_bleu(s, target) / k
        for k, s in enumerate(suggestions[:depth], start=1)
    ]
    if not scores:
        return 0.0
    if mode == "max":
        return max(scores)
    if mode != "harmonic":
        raise ValueError(f"unknown bleu_rr mode {mode!r}")
    return sum(scores) / harmonic(depth)


def partial_ndcg(
    suggestions: Sequence[str],
    target: str,
    kind: str,
    depth: int = DEPTH,
) -> float:
    """Token-overlap NDCG: precision penalizes invented words, recall missing.

    gain_k = |tokens(s_k) & tokens(target)| / |tokens(s_k)|   (precision)
                                            / |tokens(target)| (recall)
    normalized against a perfect suggestion (gain 1) in every occupied rank.
    """
    if kind not in ("precision", "recall"):
        raise ValueError(f"kind must be precision or recall, got {kind!r}")
    goal = set(normalize(target).split())
    gains = []
    for sug in suggestions[:depth]:
        toks = set(normalize(sug).split())
        inter = len(toks & goal)
        if kind == "precision":
            gains.append(inter / len(toks) if toks else 0.0)
        else:
            gains.append(inter / len(goal) if goal else 0.0)
    if not gains or all(g == 0.0 for g in gains):
        return 0.0
    return _dcg(gains) / _dcg([1.0] * len(gains))


def sbmrr(
    suggestions: Sequence[str],
    target: str,
    vectors: Mapping[str, np.ndarray],
    threshold: float = 0.9,
    depth: int = DEPTH,
) -> float | None:
    """MRR where a match is embedding cosine >= threshold (inclusive).

    Returns None when the target or any listed suggestion has no vector;
    the caller counts such skipped examples.
    """

    def lookup(text: str) -> np.ndarray | None:
        vec = vectors.get(normalize(text))
        if vec is None:
            vec = vectors.get(text)
        return vec

    target_vec = lookup(target)
    if target_vec is None:
        return None
    tnorm = float(np.linalg.norm(target_vec))
    for rank, sug in enumerate(suggestions[:depth], start=1):
        vec = lookup(sug)
        if vec is None:
            return None
        denom = tnorm * float(np.linalg.norm(vec))
        sim = float(np.dot(target_vec, vec) / denom) if denom else 0.0
        if sim >= threshold:
            return 1.0 / rank
    return 0.0


def evaluate_run(
    examples: Sequence[EvalExample],
    system: Callable[[str, str], Sequence[str]],
    *,
    vectors: Mapping[str, np.ndarray] | None = None,
    mode_label: str = "",
    alpha: float = 0.5,
    with_tes: bool = True,
    bleu_mode: str = "harmonic",
) -> list[MetricReport]:
    """Mean metrics per quadrant. ``system(doc_id, prefix)`` returns texts.

    TES re-queries the system per simulated keystroke; the other metrics use
    the single top-10 list for the example's given prefix.
    """
    grouped: dict[str, list[EvalExample]] = {q: [] for q in QUADRANTS}
    for ex in examples:
        grouped.setdefault(ex.quadrant, []).append(ex)
    reports = []
    for quadrant in QUADRANTS:
        group = grouped.get(quadrant, [])
        if not group:
            LOG.warning("quadrant %s has no examples; row omitted", quadrant)
            continue
        sums = {"mrr": 0.0, "andcg": 0.0, "bleu": 0.0, "ppn": 0.0, "prn": 0.0}
        tes_sum = 0.0
        sb_sum = 0.0
        sb_n = 0
        sb_skipped = 0
        for ex in group:
            suggs = [str(s) for s in system(ex.doc_id, ex.prefix)][:DEPTH]
            sums["mrr"] += mrr(suggs, ex.target)
            sums["andcg"] += alpha_ndcg(suggs, ex.target, alpha=alpha)
            sums["bleu"] += bleu_rr(suggs, ex.target, mode=bleu_mode)
            sums["ppn"] += partial_ndcg(suggs, ex.target, "precision")
            sums["prn"] += partial_ndcg(suggs, ex.target, "recall")
            if vectors is not None:
                value = sbmrr(suggs, ex.target, vectors)
                if value is None:
                    sb_skipped += 1
                else:
                    sb_sum += value
                    sb_n += 1
            if with_tes:
                tes_sum += tes(lambda p: system(ex.doc_id, p), ex.target)
        n = len(group)
        reports.append(
            MetricReport(
                quadrant=quadrant,
                mode=mode_label,
                n_examples=n,
                mrr=sums["mrr"] / n,
                alpha_ndcg=sums["andcg"] / n,
                bleu_rr=sums["bleu"] / n,
                sbmrr=(sb_sum / sb_n) if sb_n else None,
                ppn=sums["ppn"] / n,
                prn=sums["prn"] / n,
                tes=(tes_sum / n) if with_tes else None,
                sbmrr_skipped=sb_skipped,
            )
        )
    return reports


_COLUMNS = ("MRR", "aNDCG", "BLEU_RR", "SBMRR", "PPN", "PRN", "TES")


def _row_values(report: MetricReport) -> list[str]:
    def fmt(v: float | None) -> str:
        return "-" if v is None else f"{v:.4f}"

    return [
        report.quadrant,
        report.mode,
        str(report.n_examples),
        fmt(report.mrr),
        fmt(report.alpha_ndcg),
        fmt(report.bleu_rr),
        fmt(report.sbmrr),
        fmt(report.ppn),
        fmt(report.prn),
        fmt(report.tes),
    ]


def report_tsv(reports: Sequence[MetricReport]) -> str:
    lines = ["\t".join(("quadrant", "mode", "n") + _COLUMNS)]
    for report in reports:
        lines.append("\t".join(_row_values(report)))
    return "\n".join(lines) + "\n"


def report_table(reports: Sequence[MetricReport]) -> str:
    header = ("quadrant", "mode", "n") + _COLUMNS
    rows = [_row_values(r) for r in reports]
    widths = [
        max(len(header[i]), *(len(row[i]) for row in rows)) if rows else len(header[i])
        for i in range(len(header))
    ]
    out = ["  ".join(h.ljust(w) for h, w in zip(header, widths))]
    for row in rows:
        out.append("  ".join(v.ljust(w) for v, w in zip(row, widths)))
    return "\n".join(out) + "\n"
