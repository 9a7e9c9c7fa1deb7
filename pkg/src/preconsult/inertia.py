"""Repetition-drift analysis over a dialogue's question sequence.

For every turn from the second onward, the maximum lexical (Jaccard) and
semantic (cosine) similarity against all preceding questions is computed.
A rising trend or a high late-dialogue level marks a dialogue whose
questions keep the right shape while repeating earlier content; verbatim
repeats are tracked separately via normalized string equality.

The default cosine uses local term-frequency vectors so the whole analysis
runs offline and deterministically; an embedding provider can be plugged
in for model-based semantic similarity.
"""

from __future__ import annotations

import math
import re
from collections import Counter
from dataclasses import dataclass, field
from typing import Any, Callable, NamedTuple, Sequence

EmbeddingProvider = Callable[[str], Sequence[float]]

_WORD_RE = re.compile(r"\w+", re.UNICODE)


class EmbeddingError(Exception):
    """Tagged wrapper for embedding-provider failures."""


@dataclass(frozen=True)
class TokenizerConfig:
    case_fold: bool = True
    segmentation: str = "unicode-words"  # or "whitespace"
    strip_punctuation: bool = True

    def __post_init__(self) -> None:
        if self.segmentation not in ("unicode-words", "whitespace"):
            raise ValueError("segmentation must be 'unicode-words' or 'whitespace'")


DEFAULT_TOKENIZER = TokenizerConfig()


def word_tokens(text: str, config: TokenizerConfig = DEFAULT_TOKENIZER) -> list[str]:
    """Ordered token list. unicode-words segmentation keeps maximal runs of
    word characters, so punctuation never survives it; strip_punctuation
    only matters for whitespace segmentation."""
    if config.segmentation == "unicode-words":
        tokens = _WORD_RE.findall(text)
    else:
        tokens = text.split()
        if config.strip_punctuation:
            tokens = [_strip_edge_punctuation(t) for t in tokens]
        tokens = [t for t in tokens if t]
    if config.case_fold:
        tokens = [t.casefold() for t in tokens]
    return tokens


def _strip_edge_punctuation(token: str) -> str:
    start, end = 0, len(token)
    while start < end and not token[start].isalnum():
        start += 1
    while end > start and not token[end - 1].isalnum():
        end -= 1
    return token[start:end]


def tokenize(text: str, config: TokenizerConfig = DEFAULT_TOKENIZER) -> set[str]:
    return set(word_tokens(text, config))


def normalize_question(text: str, config: TokenizerConfig = DEFAULT_TOKENIZER) -> str:
    """Canonical form for exact-repeat detection: tokens rejoined with
    single spaces, so whitespace and punctuation jitter cannot hide a
    verbatim repeat."""
    return " ".join(word_tokens(text, config))


def jaccard(a: set[str], b: set[str]) -> float:
    """|a & b| / |a | b|; 1.0 when both sets are empty, 0.0 when exactly
    one is."""
    if not a and not b:
        return 1.0
    if not a or not b:
        return 0.0
    return len(a & b) / len(a | b)


def _unit(vector: Sequence[float]) -> list[float] | None:
    norm = math.sqrt(sum(x * x for x in vector))
    if norm == 0.0:
        return None
    return [x / norm for x in vector]


def cosine(a: str, b: str, provider: EmbeddingProvider | None = None,
           config: TokenizerConfig = DEFAULT_TOKENIZER) -> float:
    """Cosine similarity of the two texts, clamped to [0, 1].

    Without a provider, vectors are token counts over the union vocabulary
    (L2-normalized). Zero vectors yield 0.0.
    """
    if provider is None:
        counts_a = Counter(word_tokens(a, config))
        counts_b = Counter(word_tokens(b, config))
        vocab = sorted(counts_a.keys() | counts_b.keys())
        vec_a: Sequence[float] = [float(counts_a[t]) for t in vocab]
        vec_b: Sequence[float] = [float(counts_b[t]) for t in vocab]
    else:
        try:
            vec_a = provider(a)
            vec_b = provider(b)
        except Exception as exc:
            raise EmbeddingError(f"embedding provider failed: {exc}") from exc
        if len(vec_a) != len(vec_b):
            raise EmbeddingError("embedding provider returned mismatched dimensions")
    unit_a = _unit(vec_a)
    unit_b = _unit(vec_b)
    if unit_a is None or unit_b is None:
        return 0.0
    if list(vec_a) == list(vec_b):
        return 1.0  # exact on identical inputs, no rounding drift
    dot = sum(x * y for x, y in zip(unit_a, unit_b))
    return min(1.0, max(0.0, dot))


@dataclass
class SimilaritySeries:
    """Per-turn maxima over all preceding questions, for turns 2..n."""

    dialogue_id: str
    turns: list[int]
    max_jaccard: list[float]
    max_cosine: list[float]

    def __len__(self) -> int:
        return len(self.turns)


def similarity_series(questions: Sequence[str], *,
                      config: TokenizerConfig = DEFAULT_TOKENIZER,
                      provider: EmbeddingProvider | None = None,
                      dialogue_id: str = "") -> SimilaritySeries:
    """For each turn t >= 2, the maximum Jaccard and cosine similarity of
    question t against every earlier question."""
    if len(questions) < 2:
        raise ValueError("need at least two questions")
    token_sets = [tokenize(q, config) for q in questions]
    turns: list[int] = []
    max_j: list[float] = []
    max_c: list[float] = []
    for t in range(1, len(questions)):
        best_j = max(jaccard(token_sets[t], token_sets[s]) for s in range(t))
        best_c = max(cosine(questions[t], questions[s], provider, config)
                     for s in range(t))
        turns.append(t + 1)
        max_j.append(best_j)
        max_c.append(best_c)
    return SimilaritySeries(dialogue_id=dialogue_id, turns=turns,
                            max_jaccard=max_j, max_cosine=max_c)


def trend_slope(values: Sequence[float], turns: Sequence[int] | None = None) -> float:
    """Ordinary least-squares slope of value against turn index."""
    if len(values) < 2:
        raise ValueError("need at least two points")
    xs = list(turns) if turns is not None else list(range(2, len(values) + 2))
    if len(xs) != len(values):
        raise ValueError("turns and values must have equal length")
    mean_x = sum(xs) / len(xs)
    mean_y = sum(values) / len(values)
    sxx = sum((x - mean_x) ** 2 for x in xs)
    sxy = sum((x - mean_x) * (y - mean_y) for x, y in zip(xs, values))
    return sxy / sxx


@dataclass(frozen=True)
class InertiaThresholds:
    slope_threshold: float = 0.03
    level_threshold: float = 0.6
    late_window: int = 3


@dataclass
class InertiaReport:
    dialogue_id: str
    jaccard_slope: float
    cosine_slope: float
    late_window_mean: float
    exact_repeat_turns: list[int]
    flagged: bool


def detect_inertia(series: SimilaritySeries, thresholds: InertiaThresholds,
                   questions: Sequence[str],
                   config: TokenizerConfig = DEFAULT_TOKENIZER) -> InertiaReport:
    """Flag a dialogue when either similarity trend rises past the slope
    threshold, the late-window level is high, or any question is an exact
    normalized repeat of an earlier one.

    A single-point series (two-turn dialogue) has no measurable trend; its
    slopes are reported as 0.0.
    """
    if len(series) >= 2:
        j_slope = trend_slope(series.max_jaccard, series.turns)
        c_slope = trend_slope(series.max_cosine, series.turns)
    else:
        j_slope = 0.0
        c_slope = 0.0
    combined = [max(j, c) for j, c in zip(series.max_jaccard, series.max_cosine)]
    window = combined[-thresholds.late_window:]
    late_mean = sum(window) / len(window)

    normalized = [normalize_question(q, config) for q in questions]
    repeats = [t for t in range(2, len(normalized) + 1)
               if normalized[t - 1] in normalized[:t - 1]]

    flagged = (j_slope > thresholds.slope_threshold
               or c_slope > thresholds.slope_threshold
               or late_mean > thresholds.level_threshold
               or bool(repeats))
    return InertiaReport(dialogue_id=series.dialogue_id, jaccard_slope=j_slope,
                         cosine_slope=c_slope, late_window_mean=late_mean,
                         exact_repeat_turns=repeats, flagged=flagged)


class TurnAggregate(NamedTuple):
    turn: int
    mean_jaccard: float
    mean_cosine: float
    n: int


def aggregate_by_turn(series_list: Sequence[SimilaritySeries]) -> list[TurnAggregate]:
    """Per-turn mean of the max-similarity values across dialogues, with
    the number of dialogues contributing at each turn. Ragged lengths are
    averaged over the dialogues present."""
    if not series_list:
        raise ValueError("need at least one series")
    sums: dict[int, list[float]] = {}
    for series in series_list:
        for turn, j, c in zip(series.turns, series.max_jaccard, series.max_cosine):
            bucket = sums.setdefault(turn, [0.0, 0.0, 0])
            bucket[0] += j
            bucket[1] += c
            bucket[2] += 1
    return [TurnAggregate(turn, sums[turn][0] / sums[turn][2],
                          sums[turn][1] / sums[turn][2], int(sums[turn][2]))
            for turn in sorted(sums)]


def report_to_dict(report: InertiaReport) -> dict[str, Any]:
    return {
        "dialogue_id": report.dialogue_id,
        "jaccard_slope": report.jaccard_slope,
        "cosine_slope": report.cosine_slope,
        "late_window_mean": report.late_window_mean,
        "exact_repeat_turns": list(report.exact_repeat_turns),
        "flagged": report.flagged,
    }
