"""Turn-count rebalancing: uniform construction and skewed subsampling.

Uniform construction: group dialogues into bins by max turn-count, select
bins at or above a minimum turn threshold, set the quota to the smallest
selected bin, and draw the quota from every selected bin without
replacement, giving a flat histogram of quota x selected-bins dialogues.

Skewed subsampling: apportion a target size across all nonempty bins by
largest remainder so the output mirrors the source distribution with
per-bin deviation below one dialogue, then draw within bins.

All draws come from SplitMix64 streams derived per bin from the run seed,
so results are bit-identical across platforms and safe to parallelize by
bin.
"""

from __future__ import annotations

import hashlib
import struct
from dataclasses import dataclass, field
from fractions import Fraction
from math import floor
from typing import Sequence

from .corpus import Corpus, max_turn_count

_MASK64 = (1 << 64) - 1


class RebalanceError(Exception):
    pass


class SplitMix64:
    """SplitMix64 generator: fixed 64-bit algorithm, portable by construction."""

    def __init__(self, seed: int) -> None:
        self._state = seed & _MASK64

    def next_u64(self) -> int:
        self._state = (self._state + 0x9E3779B97F4A7C15) & _MASK64
        z = self._state
        z = ((z ^ (z >> 30)) * 0xBF58476D1CE4E5B9) & _MASK64
        z = ((z ^ (z >> 27)) * 0x94D049BB133111EB) & _MASK64
        return z ^ (z >> 31)

    def below(self, n: int) -> int:
        """Uniform integer in [0, n) via rejection sampling (no modulo bias)."""
        if n <= 0:
            raise ValueError("bound must be positive")
        threshold = (1 << 64) - ((1 << 64) % n)
        while True:
            x = self.next_u64()
            if x < threshold:
                return x % n


def substream(seed: int, key: int) -> SplitMix64:
    """Independent per-bin stream: SHA-256(seed, key) seeds SplitMix64."""
    digest = hashlib.sha256(struct.pack(">QQ", seed & _MASK64, key & _MASK64)).digest()
    return SplitMix64(int.from_bytes(digest[:8], "big"))


def sample_without_replacement(items: Sequence[str], k: int, rng: SplitMix64) -> list[str]:
    """Partial Fisher-Yates draw of k items; order of draws is part of the output."""
    n = len(items)
    if k > n:
        raise ValueError(f"cannot draw {k} from {n} items")
    index = list(range(n))
    for i in range(k):
        j = i + rng.below(n - i)
        index[i], index[j] = index[j], index[i]
    return [items[index[i]] for i in range(k)]


@dataclass
class RebalanceConfig:
    t_min: int = 4
    seed: int = 0
    target_size: int | None = None

    def __post_init__(self) -> None:
        if self.t_min < 1:
            raise ValueError("t_min must be >= 1")
        if not 0 <= self.seed <= _MASK64:
            raise ValueError("seed must be a 64-bit unsigned integer")


@dataclass
class BinningResult:
    """Dialogues partitioned by max turn-count, plus the selection state.

    ``selected`` and ``quota`` stay unset until :func:`determine_quota` runs.
    """

    bins: dict[int, list[str]]
    total_n: int
    t_min: int | None = None
    selected: list[int] = field(default_factory=list)
    quota: int | None = None

    @property
    def selected_count(self) -> int:
        return len(self.selected)


def bin_by_turn_count(corpus: Corpus) -> BinningResult:
    """Partition dialogue ids into bins keyed by max turn-count."""
    if not corpus.dialogues:
        raise RebalanceError("cannot bin an empty corpus")
    bins: dict[int, list[str]] = {}
    for dialogue in corpus.dialogues:
        bins.setdefault(max_turn_count(dialogue), []).append(dialogue.id)
    return BinningResult(bins=dict(sorted(bins.items())), total_n=len(corpus.dialogues))


def determine_quota(binning: BinningResult, t_min: int) -> int:
    """Select nonempty bins with key >= t_min and set the quota to the
    smallest selected bin size. Fills ``binning.selected``/``binning.quota``."""
    selected = sorted(k for k, ids in binning.bins.items() if k >= t_min and ids)
    if not selected:
        raise RebalanceError(f"no nonempty bin has turn-count >= {t_min}")
    quota = min(len(binning.bins[k]) for k in selected)
    binning.t_min = t_min
    binning.selected = selected
    binning.quota = quota
    return quota


def uniform_sample(corpus: Corpus, binning: BinningResult,
                   config: RebalanceConfig) -> Corpus:
    """Draw the quota from every selected bin; output size = quota x bins."""
    if binning.quota is None:
        raise RebalanceError("quota not determined; call determine_quota first")
    by_id = corpus.by_id()
    quota = binning.quota
    sampled: list[str] = []
    for key in binning.selected:
        ids = binning.bins[key]
        assert quota <= len(ids), "quota exceeds selected bin size"
        sampled.extend(sample_without_replacement(ids, quota, substream(config.seed, key)))
    return Corpus(dialogues=[by_id[i] for i in sampled], source=corpus.source)


def apportion(histogram: dict[int, int], target: int) -> dict[int, int]:
    """Largest-remainder apportionment of ``target`` across histogram bins.

    Every allocation differs from the ideal real-valued share by less than
    one; allocations sum to ``target`` exactly. Remainder ties break toward
    the smaller bin key.
    """
    total = sum(histogram.values())
    if target > total:
        raise RebalanceError(f"target {target} exceeds corpus size {total}")
    ideal = {k: Fraction(target * count, total) for k, count in histogram.items()}
    alloc = {k: floor(v) for k, v in ideal.items()}
    leftover = target - sum(alloc.values())
    order = sorted(histogram, key=lambda k: (-(ideal[k] - alloc[k]), k))
    for k in order[:leftover]:
        alloc[k] += 1
    return alloc


def skewed_sample(corpus: Corpus, config: RebalanceConfig) -> Corpus:
    """Distribution-preserving subsample of ``config.target_size`` dialogues."""
    if config.target_size is None:
        raise RebalanceError("target_size is required for skewed sampling")
    binning = bin_by_turn_count(corpus)
    alloc = apportion({k: len(v) for k, v in binning.bins.items()}, config.target_size)
    by_id = corpus.by_id()
    sampled: list[str] = []
    for key in sorted(binning.bins):
        take = alloc[key]
        if take:
            sampled.extend(sample_without_replacement(binning.bins[key], take,
                                                      substream(config.seed, key)))
    return Corpus(dialogues=[by_id[i] for i in sampled], source=corpus.source)
