"""Soft trie-guided beam search.

Plain beam search ranks continuations purely by model probability, which
drifts away from the queries actually associated with a document. Hard
trie constraints fix that but cannot generalize past the indexed queries.
This decoder takes the middle road: at every step, tokens that would leave
the guidance trie are penalized by a bias that anneals with hypothesis
length and with the beam's rank,

    bias = b0 * exp(-alpha * length) * exp(-beta * rank)

so early steps and top-ranked beams stick close to the trie while long
hypotheses and low-ranked beams are free to explore. Setting b0 = 0
recovers unguided beam search exactly; a very large b0 with alpha = beta = 0
behaves like a hard constraint.

Beams that leave the trie stop receiving the penalty altogether: subtracting
a constant from every logit is a no-op under softmax, so skipping the
subtraction is mathematically identical and cheaper.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field, replace
from typing import Sequence

import numpy as np

from .errors import InvalidInputError
from .models import Suggestion
from .scorer import ScorerContext
from .textnorm import normalize, normalize_prefix
from .tokenizer import EOS_ID, SEP_SPLIT_ID, TokenizerModel
from .trie import GuidanceTrie


@dataclass
class DecodeConfig:
    """Beam search knobs; defaults follow the tuned global-trie setting."""

    beam_size: int = 25
    max_steps: int = 48
    initial_bias: float = 40.0
    alpha: float = 0.1
    beta: float = 0.05
    length_penalty: float = 1.0
    top_k_out: int = 10
    bias_length_source: str = "beam"  # beam | prefix

    def override(self, **kwargs) -> "DecodeConfig":
        clean = {k: v for k, v in kwargs.items() if v is not None}
        return replace(self, **clean) if clean else self


@dataclass
class Beam:
    """One partial hypothesis."""

    tokens: tuple[int, ...]
    logprob: float
    trie_path_alive: bool
    finished: bool = False
    node: object | None = None  # current guidance-trie node, if still on it


def annealed_bias(
    b0: float, alpha: float, beta: float, length: int, rank: int
) -> float:
    """Penalty applied to off-trie tokens; non-increasing in length and rank."""
    return b0 * math.exp(-alpha * length) * math.exp(-beta * rank)


def softmax(z: np.ndarray) -> np.ndarray:
    shifted = z - z.max()
    e = np.exp(shifted)
    return e / e.sum()


def log_softmax(z: np.ndarray) -> np.ndarray:
    shifted = z - z.max()
    return shifted - np.log(np.exp(shifted).sum())


def guided_beam_search(
    tok: TokenizerModel,
    scorer,
    ctx: ScorerContext | None,
    guidance: GuidanceTrie | None,
    prefix: str,
    cfg: DecodeConfig,
) -> list[Suggestion]:
    """Decode ranked completions of ``prefix``.

    Hypotheses start from ``encode(prefix) + [SEP_SPLIT]`` and grow until EOS
    or the step limit. When a guidance trie is given and the prefix path
    exists in it, off-trie tokens are penalized per ``annealed_bias``; a beam
    that leaves the trie is never re-attached. A prefix absent from the trie
    decodes fully unguided rather than returning nothing.

    Each returned suggestion's text is the detokenized prefix plus suffix and
    its score is ``logprob / generated_length ** length_penalty``.
    """
    norm = normalize_prefix(prefix)
    if not norm:
        raise InvalidInputError("prefix must contain non-whitespace characters")
    prefix_ids = tok.encode(norm)
    if not prefix_ids:
        raise InvalidInputError("prefix tokenized to nothing")
    init = tuple(prefix_ids) + (SEP_SPLIT_ID,)
    start_node = guidance.node_after(init) if guidance is not None else None

    beams = [
        Beam(tokens=init, logprob=0.0, trie_path_alive=start_node is not None,
             node=start_node)
    ]
    finished: list[Beam] = []
    prefix_bias_length = len(prefix_ids)

    for _ in range(cfg.max_steps):
        if not beams or len(finished) >= cfg.beam_size:
            break
        candidates: list[tuple[float, tuple[int, ...], bool, object | None]] = []
        for rank, beam in enumerate(beams):
            z = np.array(scorer.logits(ctx, beam.tokens), dtype=np.float64)
            valid: dict | None = None
            if beam.trie_path_alive and beam.node is not None:
                valid = beam.node.children  # type: ignore[attr-defined]
                length = (
                    len(beam.tokens)
                    if cfg.bias_length_source == "beam"
                    else prefix_bias_length
                )
                delta = annealed_bias(
                    cfg.initial_bias, cfg.alpha, cfg.beta, length, rank
                )
                if delta != 0.0 and len(valid) < z.shape[0]:
                    mask = np.ones(z.shape[0], dtype=bool)
                    mask[list(valid.keys())] = False
                    z[mask] -= delta
            logp = log_softmax(z)
            # Stable argsort so equal scores expand in token-id order.
            top = np.argsort(-logp, kind="stable")[: cfg.beam_size]
            for v in top:
                v = int(v)
                if math.exp(logp[v]) == 0.0:
                    # Zero probability under the penalized softmax: the token
                    # is not expandable. This is what turns a huge bias into
                    # a hard constraint.
                    continue
                child = valid.get(v) if valid is not None else None
                candidates.append(
                    (
                        beam.logprob + float(logp[v]),
                        beam.tokens + (v,),
                        beam.trie_path_alive and child is not None,
                        child,
                    )
                )
        candidates.sort(key=lambda c: (-c[0], c[1]))
        next_beams: list[Beam] = []
        for logprob, tokens, alive, node in candidates[: cfg.beam_size]:
            beam = Beam(
                tokens=tokens,
                logprob=logprob,
                trie_path_alive=alive,
                node=node,
                finished=tokens[-1] == EOS_ID,
            )
            if beam.finished:
                finished.append(beam)
            else:
                next_beams.append(beam)
        beams = next_beams

    source = "guided" if guidance is not None else "lm"
    seen: set[str] = set()
    ordered: list[Suggestion] = []
    for beam in finished:
        gen_len = max(len(beam.tokens) - len(init), 1)
        score = beam.logprob / (gen_len**cfg.length_penalty)
        text = normalize(tok.decode(list(beam.tokens)))
        conforming = (
            guidance.is_terminal_sequence(beam.tokens)
            if guidance is not None
            else False
        )
        ordered.append(
            Suggestion(
                text=text, score=score, source=source, trie_conforming=conforming
            )
        )
    ordered.sort(key=lambda s: (-s.score, s.text))
    out: list[Suggestion] = []
    for sug in ordered:
        if sug.text in seen:
            continue
        seen.add(sug.text)
        out.append(sug)
        if len(out) >= cfg.top_k_out:
            break
    for i, sug in enumerate(out):
        sug.rank = i + 1
    return out
