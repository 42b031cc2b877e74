"""Document-scoped query auto-completion.

Popularity tries, soft trie-guided beam search over a pluggable token
scorer, document context assembly, an evaluation harness, and an HTTP
service with an interactive typing UI.
"""

__version__ = "0.1.0"

from .decoder import DecodeConfig, annealed_bias, guided_beam_search
from .engine import Engine
from .models import (
    DocumentRecord,
    EvalExample,
    MetricReport,
    QueryDocPair,
    Suggestion,
    WeightedQuery,
)
from .scorer import NgramModel, ScorerContext, train_ngram
from .tokenizer import (
    EOS_ID,
    SEP_SPLIT_ID,
    UNK_ID,
    TokenizerModel,
    train_bpe,
)
from .trie import (
    CompletionTrie,
    GuidanceTrie,
    build_completion_trie,
    build_docc_trie,
    build_guidance_trie,
)

__all__ = [
    "DecodeConfig",
    "DocumentRecord",
    "Engine",
    "EvalExample",
    "MetricReport",
    "NgramModel",
    "QueryDocPair",
    "ScorerContext",
    "Suggestion",
    "TokenizerModel",
    "WeightedQuery",
    "CompletionTrie",
    "GuidanceTrie",
    "annealed_bias",
    "build_completion_trie",
    "build_docc_trie",
    "build_guidance_trie",
    "guided_beam_search",
    "train_bpe",
    "train_ngram",
    "EOS_ID",
    "SEP_SPLIT_ID",
    "UNK_ID",
    "__version__",
]
