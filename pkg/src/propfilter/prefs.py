"""Preference data pools and the on-device filter pipeline.

A peer carries its own ratings (``PeerPreferenceList``), an anonymous aggregate
mixed from similar peers (``NeighborhoodPreferenceList``), the shareable
projection used for similarity scoring (``SimilarityData``) and the context
stamp of an encounter (``ContextData``). The functions at the bottom implement
the filter: compare, admit into the top-k store, resample, recommend.

All operations are value-semantic: inputs are never mutated.
"""

from __future__ import annotations

import math
from collections import Counter, defaultdict
from dataclasses import dataclass, field
from typing import Mapping

import numpy as np

DEFAULT_K = 5
DEFAULT_CAPACITY = 500
DEFAULT_N_DRAWS = 500
DEFAULT_MIN_OVERLAP = 2

MIN_STARS = 1
MAX_STARS = 5


@dataclass(frozen=True)
class Rating:
    item_id: str
    value: int

    def __post_init__(self) -> None:
        if not self.item_id:
            raise ValueError("item_id must be non-empty")
        if isinstance(self.value, bool) or not isinstance(self.value, int):
            raise TypeError(f"rating value must be int, got {type(self.value).__name__}")
        if not MIN_STARS <= self.value <= MAX_STARS:
            raise ValueError(f"rating value {self.value} outside [1, 5]")


@dataclass(frozen=True)
class PeerPreferenceList:
    """A peer's own ratings. Never leaves the device except via ``shared_view``."""

    owner: str
    ratings: Mapping[str, int] = field(default_factory=dict)
    share_fraction: float = 1.0

    def __post_init__(self) -> None:
        if not 0.0 <= self.share_fraction <= 1.0:
            raise ValueError(f"share_fraction {self.share_fraction} outside [0, 1]")
        for item_id, value in self.ratings.items():
            Rating(item_id, value)
        object.__setattr__(self, "ratings", dict(self.ratings))

    @classmethod
    def from_ratings(cls, owner: str, ratings, share_fraction: float = 1.0) -> PeerPreferenceList:
        table: dict[str, int] = {}
        for r in ratings:
            if r.item_id in table:
                raise ValueError(f"duplicate rating for item {r.item_id!r}")
            table[r.item_id] = r.value
        return cls(owner, table, share_fraction)

    def as_ratings(self) -> list[Rating]:
        return [Rating(i, v) for i, v in sorted(self.ratings.items())]


@dataclass(frozen=True)
class NeighborhoodEntry:
    item_id: str
    value: float
    weight: int = 1

    def __post_init__(self) -> None:
        if not self.item_id:
            raise ValueError("item_id must be non-empty")
        if not (MIN_STARS <= self.value <= MAX_STARS):
            raise ValueError(f"entry value {self.value} outside [1.0, 5.0]")
        if isinstance(self.weight, bool) or not isinstance(self.weight, int) or self.weight < 1:
            raise ValueError(f"entry weight must be a positive int, got {self.weight!r}")


@dataclass(frozen=True)
class NeighborhoodPreferenceList:
    """Aggregated ratings of an unknown subset of peers.

    Entries deliberately carry no origin peer id.
    """

    entries: Mapping[str, NeighborhoodEntry] = field(default_factory=dict)
    capacity: int = DEFAULT_CAPACITY

    def __post_init__(self) -> None:
        if self.capacity < 1:
            raise ValueError("capacity must be positive")
        entries = dict(self.entries)
        for key, entry in entries.items():
            if key != entry.item_id:
                raise ValueError(f"entry keyed {key!r} holds item {entry.item_id!r}")
        if len(entries) > self.capacity:
            raise ValueError(f"{len(entries)} entries exceed capacity {self.capacity}")
        object.__setattr__(self, "entries", entries)

    @classmethod
    def from_entries(cls, entries, capacity: int = DEFAULT_CAPACITY) -> NeighborhoodPreferenceList:
        """Build a list, merging duplicate item ids by weighted mean."""
        merged: dict[str, NeighborhoodEntry] = {}
        for e in entries:
            prev = merged.get(e.item_id)
            if prev is None:
                merged[e.item_id] = e
            else:
                w = prev.weight + e.weight
                value = (prev.value * prev.weight + e.value * e.weight) / w
                merged[e.item_id] = NeighborhoodEntry(e.item_id, value, w)
        return cls(merged, capacity)

    def __len__(self) -> int:
        return len(self.entries)

    def __contains__(self, item_id: object) -> bool:
        return item_id in self.entries

    def sorted_entries(self) -> list[NeighborhoodEntry]:
        return [self.entries[k] for k in sorted(self.entries)]


@dataclass(frozen=True)
class SimilarityData:
    vector: Mapping[str, int] = field(default_factory=dict)

    def __post_init__(self) -> None:
        object.__setattr__(self, "vector", dict(self.vector))

    def __len__(self) -> int:
        return len(self.vector)


@dataclass(frozen=True)
class ContextData:
    position: tuple[float, float]
    timestamp: float
    tags: tuple[str, ...] = ()

    def __post_init__(self) -> None:
        if self.timestamp < 0:
            raise ValueError("timestamp must be >= 0")
        object.__setattr__(self, "position", (float(self.position[0]), float(self.position[1])))
        object.__setattr__(self, "tags", tuple(self.tags))


@dataclass(frozen=True)
class StoreSlot:
    peer: str
    score: float
    snapshot: NeighborhoodPreferenceList
    arrival: int


@dataclass(frozen=True)
class SimilarityStore:
    """Top-k cache of the most similar peers seen so far.

    Slots are kept sorted by score, descending; equal scores keep arrival order.
    """

    k: int = DEFAULT_K
    slots: tuple[StoreSlot, ...] = ()
    arrivals: int = 0

    def __post_init__(self) -> None:
        if self.k < 1:
            raise ValueError("k must be positive")
        if len(self.slots) > self.k:
            raise ValueError(f"{len(self.slots)} slots exceed k={self.k}")

    def __len__(self) -> int:
        return len(self.slots)

    @property
    def scores(self) -> list[float]:
        return [s.score for s in self.slots]

    @property
    def peers(self) -> list[str]:
        return [s.peer for s in self.slots]

    def kth_score(self) -> float | None:
        """Score the newcomer has to beat, or None while a slot is free."""
        if len(self.slots) < self.k:
            return None
        return self.slots[-1].score


def cosine_similarity(
    a: SimilarityData, b: SimilarityData, min_overlap: int = DEFAULT_MIN_OVERLAP
) -> float | None:
    """Cosine of the co-rated sub-vectors, or None when fewer than
    ``min_overlap`` items are rated by both."""
    if min_overlap < 1:
        raise ValueError("min_overlap must be positive")
    common = sorted(a.vector.keys() & b.vector.keys())
    if len(common) < min_overlap:
        return None
    dot = sum(a.vector[i] * b.vector[i] for i in common)
    na = math.sqrt(sum(a.vector[i] ** 2 for i in common))
    nb = math.sqrt(sum(b.vector[i] ** 2 for i in common))
    # stars are >= 1, so neither norm can vanish
    return min(1.0, dot / (na * nb))


def admit_to_store(
    store: SimilarityStore, peer: str, score: float, snapshot: NeighborhoodPreferenceList
) -> tuple[SimilarityStore, bool]:
    if not 0.0 <= score <= 1.0:
        raise ValueError(f"score {score} outside [0, 1]")
    # a re-encountered peer competes against the store without its old slot
    slots = [s for s in store.slots if s.peer != peer]
    if len(slots) >= store.k and not score > slots[-1].score:
        return store, False
    new = StoreSlot(peer, score, snapshot, store.arrivals)
    pos = len(slots)
    for i, s in enumerate(slots):
        if score > s.score:
            pos = i
            break
    slots.insert(pos, new)
    del slots[store.k:]
    return SimilarityStore(store.k, tuple(slots), store.arrivals + 1), True


def shared_view(own: PeerPreferenceList, rng: np.random.Generator) -> SimilarityData:
    """Uniform sample of ceil(share_fraction * n) of the peer's ratings."""
    items = sorted(own.ratings)
    # round first so 0.1 * 30 does not become 4 through float error
    m = math.ceil(round(own.share_fraction * len(items), 9))
    if m >= len(items):
        return SimilarityData(own.ratings)
    if m == 0:
        return SimilarityData()
    picked = rng.choice(len(items), size=m, replace=False)
    return SimilarityData({items[i]: own.ratings[items[i]] for i in sorted(picked)})


def resample_neighborhood(
    own: PeerPreferenceList,
    store: SimilarityStore,
    capacity: int = DEFAULT_CAPACITY,
    n_draws: int = DEFAULT_N_DRAWS,
    rng: np.random.Generator | None = None,
    self_weight: float = 1.0,
) -> NeighborhoodPreferenceList:
    """Bootstrap a fresh neighborhood list from the pooled sources.

    The pool holds the shared part of the peer's own ratings (weight
    ``self_weight`` each) and every entry of every stored snapshot (weight
    ``entry.weight * slot.score``). Draws with replacement are aggregated per
    item: mean drawn value rounded to one decimal, weight = draw count. The
    ``capacity`` heaviest items survive.
    """
    if n_draws < 1:
        raise ValueError("n_draws must be >= 1")
    if rng is None:
        raise ValueError("resample_neighborhood needs a seeded generator")
    shared = shared_view(own, rng)
    items: list[str] = []
    values: list[float] = []
    weights: list[float] = []
    for item_id in sorted(shared.vector):
        items.append(item_id)
        values.append(float(shared.vector[item_id]))
        weights.append(self_weight)
    for slot in store.slots:
        for entry in slot.snapshot.sorted_entries():
            items.append(entry.item_id)
            values.append(entry.value)
            weights.append(entry.weight * slot.score)
    w = np.asarray(weights, dtype=float)
    total = w.sum() if len(w) else 0.0
    if total <= 0:
        return NeighborhoodPreferenceList({}, capacity)
    drawn = rng.choice(len(items), size=n_draws, p=w / total)
    sums: dict[str, float] = defaultdict(float)
    counts: Counter[str] = Counter()
    for idx in drawn:
        sums[items[idx]] += values[idx]
        counts[items[idx]] += 1
    ranked = sorted(counts, key=lambda i: (-counts[i], i))[:capacity]
    entries = {
        i: NeighborhoodEntry(i, round(sums[i] / counts[i], 1), counts[i]) for i in ranked
    }
    return NeighborhoodPreferenceList(entries, capacity)


def predict_ratings(
    own: PeerPreferenceList, nbhd: NeighborhoodPreferenceList, top_n: int = 10
) -> list[tuple[str, float]]:
    """Weighted-popularity baseline over unrated neighborhood items."""
    candidates = [e for e in nbhd.entries.values() if e.item_id not in own.ratings]
    candidates.sort(key=lambda e: (-e.weight, -e.value, e.item_id))
    return [(e.item_id, e.value) for e in candidates[:top_n]]
