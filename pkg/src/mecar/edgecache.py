"""Popularity-threshold object database at the edge.

The edge keeps an access count per object.  An object becomes resident once
its count reaches ``threshold``; when more objects qualify than fit, the
``capacity_objects`` most requested win (ties to the smaller id).  Residency
is recomputed after every request, which evicts implicitly.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Sequence

import numpy as np


@dataclass(frozen=True)
class RequestOutcome:
    object_id: int
    hit: bool


@dataclass
class CacheState:
    capacity_objects: int
    threshold: int
    access_counts: dict[int, int] = field(default_factory=dict)
    resident: set[int] = field(default_factory=set)

    def __post_init__(self):
        if self.capacity_objects < 0:
            raise ValueError("capacity_objects must be non-negative")
        if self.threshold < 0:
            raise ValueError("threshold must be non-negative")

    def request(self, object_id: int) -> RequestOutcome:
        hit = object_id in self.resident
        self.access_counts[object_id] = self.access_counts.get(object_id, 0) + 1
        # below threshold the ranking of the candidates cannot have changed
        if self.access_counts[object_id] >= self.threshold:
            self._recompute()
        return RequestOutcome(object_id, hit)

    def _recompute(self) -> None:
        popular = [oid for oid, c in self.access_counts.items() if c >= self.threshold]
        popular.sort(key=lambda oid: (-self.access_counts[oid], oid))
        self.resident = set(popular[: self.capacity_objects])

    def invariant_holds(self) -> bool:
        if len(self.resident) > self.capacity_objects:
            return False
        popular = [oid for oid, c in self.access_counts.items() if c >= self.threshold]
        if len(popular) <= self.capacity_objects:
            return self.resident == set(popular)
        return all(self.access_counts.get(oid, 0) >= self.threshold for oid in self.resident)


def request(state: CacheState, object_id: int) -> tuple[RequestOutcome, CacheState]:
    """Serve one request; ``state`` is updated in place and returned."""
    return state.request(object_id), state


def simulate(state: CacheState, stream: Sequence[int]) -> list[RequestOutcome]:
    return [state.request(int(oid)) for oid in stream]


def hit_ratio(history: Sequence[RequestOutcome], window: int | None = None) -> float:
    """Hits over requests, optionally over the last ``window`` requests."""
    if window is not None:
        if window < 1:
            raise ValueError("window must be at least 1")
        history = history[-window:]
    if len(history) == 0:
        raise ValueError("hit ratio of an empty history")
    return sum(o.hit for o in history) / len(history)


def zipf_pmf(n_objects: int, exponent: float) -> np.ndarray:
    """P(id = k) for k = 1..n, proportional to k**-exponent."""
    if n_objects < 1:
        raise ValueError("n_objects must be at least 1")
    if exponent < 0:
        raise ValueError("exponent must be non-negative")
    w = np.arange(1, n_objects + 1, dtype=float) ** -exponent
    return w / w.sum()


def zipf_top_mass(n_objects: int, exponent: float, k: int) -> float:
    return float(zipf_pmf(n_objects, exponent)[:k].sum())


def zipf_stream(n_objects: int, exponent: float, length: int, seed: int) -> np.ndarray:
    """``length`` i.i.d. object ids in 1..n_objects with Zipf popularity."""
    p = zipf_pmf(n_objects, exponent)
    rng = np.random.default_rng(seed)
    return rng.choice(np.arange(1, n_objects + 1), size=length, p=p)
