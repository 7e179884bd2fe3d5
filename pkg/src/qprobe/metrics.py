"""Sentence-level dependency complexity metrics and corpus-wide normalization.

Six raw metrics are computed per sentence:

  n_tokens          number of syntactic words, punctuation included
  lexical_density   content words / non-punctuation words
  avg_dep_length    mean linear distance |i - head(i)| over non-punctuation,
                    non-root links
  max_depth         longest root-to-leaf path, root-attached token at depth 0
  avg_verbal_edges  mean count of direct verb dependents, punctuation and
                    auxiliaries excluded
  avg_sub_chain     mean length of maximal nesting chains of subordinate
                    clause heads

Normalization is min-max per group (language or global); the combined score
is the mean of the six normalized values, so it stays in [0, 1].
"""

from __future__ import annotations

import logging
from dataclasses import dataclass
from typing import Iterable, Optional

from .corpus import DepSentence, Token, build_tree
from .errors import UndefinedMetricError

logger = logging.getLogger(__name__)

# PROPN counts as a noun; AUX deliberately excluded
DEFAULT_CONTENT_UPOS = frozenset({"NOUN", "PROPN", "VERB", "ADJ", "ADV"})

# UD clausal-subordination relations; subtype variants match by base name
SUBORDINATE_DEPRELS = frozenset({"csubj", "ccomp", "xcomp", "advcl", "acl"})

METRIC_KEYS = (
    "n_tokens",
    "lexical_density",
    "avg_dep_length",
    "max_depth",
    "avg_verbal_edges",
    "avg_sub_chain",
)


@dataclass
class ComplexityProfile:
    """Raw metric values for one sentence plus optional normalized block."""

    sentence_id: str
    language: str
    token_count: int
    lexical_density: float
    avg_dep_length: float
    max_tree_depth: int
    avg_verbal_edges: float
    avg_sub_chain: float
    normalized: Optional[dict[str, float]] = None
    combined: Optional[float] = None

    def raw_values(self) -> dict[str, float]:
        return {
            "n_tokens": float(self.token_count),
            "lexical_density": self.lexical_density,
            "avg_dep_length": self.avg_dep_length,
            "max_depth": float(self.max_tree_depth),
            "avg_verbal_edges": self.avg_verbal_edges,
            "avg_sub_chain": self.avg_sub_chain,
        }


@dataclass
class NormalizationStats:
    """Per-metric min/max observed over one normalization group."""

    group: str
    minima: dict[str, float]
    maxima: dict[str, float]

    def __post_init__(self):
        for key in self.minima:
            if self.maxima[key] < self.minima[key]:
                raise ValueError(f"max < min for metric {key!r}")

    def is_degenerate(self, key: str) -> bool:
        return self.maxima[key] == self.minima[key]


def token_count(sentence: DepSentence) -> int:
    """Number of processed segments, punctuation included."""
    return len(sentence.tokens)


def _non_punct(sentence: DepSentence) -> list[Token]:
    return [tok for tok in sentence.tokens if not tok.is_punct()]


def lexical_density(
    sentence: DepSentence, content_upos: frozenset[str] = DEFAULT_CONTENT_UPOS
) -> float:
    """Share of content-POS tokens among non-punctuation tokens."""
    words = _non_punct(sentence)
    if not words:
        raise UndefinedMetricError(
            f"sentence {sentence.id!r}: lexical density undefined, "
            "all tokens are punctuation"
        )
    content = sum(1 for tok in words if tok.upos in content_upos)
    return content / len(words)


def avg_dependency_length(sentence: DepSentence) -> float:
    """Mean |i - head(i)| over non-punctuation, non-root dependency links.

    The denominator is N - 1 with N the non-punctuation token count; the
    root contributes no term, and links to a punctuation head are dropped.
    """
    words = _non_punct(sentence)
    n = len(words)
    if n <= 1:
        raise UndefinedMetricError(
            f"sentence {sentence.id!r}: dependency length undefined "
            f"with {n} non-punctuation token(s)"
        )
    punct_indices = {tok.index for tok in sentence.tokens if tok.is_punct()}
    total = 0
    for tok in words:
        if tok.head == 0 or tok.head in punct_indices:
            continue
        total += abs(tok.index - tok.head)
    return total / (n - 1)


def max_tree_depth(sentence: DepSentence) -> int:
    """Depth of the deepest non-punctuation token (root-attached = 0)."""
    tree = build_tree(sentence)
    depths = [
        tree.depth[tok.index] for tok in sentence.tokens if not tok.is_punct()
    ]
    return max(depths, default=0)


def avg_verbal_edges(sentence: DepSentence) -> float:
    """Mean number of direct dependents per VERB token.

    Dependents that are punctuation or have upos AUX do not count. A
    sentence without verbs scores 0 by definition.
    """
    verbs = [tok.index for tok in sentence.tokens if tok.upos == "VERB"]
    if not verbs:
        return 0.0
    by_index = {tok.index: tok for tok in sentence.tokens}
    edges = {v: 0 for v in verbs}
    for tok in sentence.tokens:
        if tok.head in edges and not tok.is_punct() and tok.upos != "AUX":
            edges[tok.head] += 1
    return sum(edges.values()) / len(verbs)


def _subordinate_heads(sentence: DepSentence) -> set[int]:
    return {
        tok.index
        for tok in sentence.tokens
        if tok.deprel_base() in SUBORDINATE_DEPRELS
    }


def avg_subordinate_chain(sentence: DepSentence) -> float:
    """Mean length of maximal nesting chains of subordinate clause heads.

    Subordinate heads form a forest under "nearest subordinate ancestor";
    each root-to-leaf path in that forest is one chain and its length is the
    number of heads on the path. No subordinate heads means 0.
    """
    sub_heads = _subordinate_heads(sentence)
    if not sub_heads:
        return 0.0
    heads = {tok.index: tok.head for tok in sentence.tokens}

    def nearest_sub_ancestor(index: int) -> Optional[int]:
        node = heads[index]
        while node != 0:
            if node in sub_heads:
                return node
            node = heads[node]
        return None

    parent = {s: nearest_sub_ancestor(s) for s in sub_heads}
    has_child = {p for p in parent.values() if p is not None}
    leaves = [s for s in sub_heads if s not in has_child]
    lengths = []
    for leaf in leaves:
        length = 1
        node = parent[leaf]
        while node is not None:
            length += 1
            node = parent[node]
        lengths.append(length)
    return sum(lengths) / len(lengths)


def compute_profile(
    sentence: DepSentence,
    content_upos: frozenset[str] = DEFAULT_CONTENT_UPOS,
) -> ComplexityProfile:
    """All six raw metrics for one sentence.

    Raises UndefinedMetricError when lexical density or dependency length
    has no defined value (too few non-punctuation tokens).
    """
    return ComplexityProfile(
        sentence_id=sentence.id,
        language=sentence.language,
        token_count=token_count(sentence),
        lexical_density=lexical_density(sentence, content_upos),
        avg_dep_length=avg_dependency_length(sentence),
        max_tree_depth=max_tree_depth(sentence),
        avg_verbal_edges=avg_verbal_edges(sentence),
        avg_sub_chain=avg_subordinate_chain(sentence),
    )


def fit_normalization(
    profiles: Iterable[ComplexityProfile], group_by: str = "language"
) -> dict[str, NormalizationStats]:
    """Min/max per metric over each group ("language") or globally.

    Returns one NormalizationStats per group key; a metric whose min equals
    its max is recorded as degenerate and later normalizes to 0.
    """
    if group_by not in ("language", "global"):
        raise ValueError(f"unknown group_by {group_by!r}")
    groups: dict[str, list[ComplexityProfile]] = {}
    for profile in profiles:
        key = profile.language if group_by == "language" else "global"
        groups.setdefault(key, []).append(profile)
    if not groups:
        raise ValueError("cannot fit normalization on an empty profile list")
    stats = {}
    for key, members in groups.items():
        minima = {}
        maxima = {}
        for metric in METRIC_KEYS:
            values = [p.raw_values()[metric] for p in members]
            minima[metric] = min(values)
            maxima[metric] = max(values)
        stats[key] = NormalizationStats(group=key, minima=minima, maxima=maxima)
    return stats


def normalize_profile(
    profile: ComplexityProfile, stats: NormalizationStats
) -> ComplexityProfile:
    """Min-max normalize each metric to [0, 1] and fill the combined score.

    Values are clamped into [0, 1]; degenerate metrics map to 0. The
    combined score is the arithmetic mean of the six normalized values.
    """
    raw = profile.raw_values()
    normalized = {}
    for key in METRIC_KEYS:
        if stats.is_degenerate(key):
            normalized[key] = 0.0
            continue
        span = stats.maxima[key] - stats.minima[key]
        value = (raw[key] - stats.minima[key]) / span
        normalized[key] = min(1.0, max(0.0, value))
    profile.normalized = normalized
    profile.combined = sum(normalized.values()) / len(METRIC_KEYS)
    return profile


def profile_to_metrics_block(profile: ComplexityProfile) -> dict:
    """Interchange "metrics" block with raw and normalized values apart."""
    block = {"raw": profile.raw_values()}
    if profile.normalized is not None:
        entry = dict(profile.normalized)
        if profile.combined is not None:
            entry["combined"] = profile.combined
        block["normalized"] = entry
    return block


def profile_corpus(
    sentences: Iterable[DepSentence],
    group_by: str = "language",
    content_upos: frozenset[str] = DEFAULT_CONTENT_UPOS,
) -> list[ComplexityProfile]:
    """Profile every sentence, normalize per group, attach metrics blocks.

    Sentences with undefined metrics are skipped with a logged warning and
    get no metrics block; normalization statistics are fitted on the full
    corpus before any splitting.
    """
    sentences = list(sentences)
    profiles = {}
    for sentence in sentences:
        try:
            profiles[sentence.id] = compute_profile(sentence, content_upos)
        except UndefinedMetricError as exc:
            logger.warning("excluding sentence from metrics: %s", exc)
    if not profiles:
        return []
    stats = fit_normalization(profiles.values(), group_by=group_by)
    for sentence in sentences:
        profile = profiles.get(sentence.id)
        if profile is None:
            continue
        key = profile.language if group_by == "language" else "global"
        normalize_profile(profile, stats[key])
        sentence.metrics = profile_to_metrics_block(profile)
    return list(profiles.values())
