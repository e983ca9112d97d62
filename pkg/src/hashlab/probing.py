"""Instrumented linear-probing table plus a vectorized bulk-cost path.

The ProbeTable records per-key displacements and probe counts while
inserting one key at a time.  The bulk helpers compute the same occupancy
and total displacement directly from a counts-per-slot vector in O(t)
numpy passes; the two routes are equivalent because the occupied-slot set
of linear probing does not depend on the insertion order, and the
experiment runners rely on the bulk path for speed.
"""

from __future__ import annotations

from collections import Counter
from dataclasses import dataclass, field

import numpy as np

from .errors import ConfigError, TableFullError


@dataclass
class CostStats:
    total_insert_probes: int = 0
    per_key_displacement: list = field(default_factory=list)

    @property
    def total_displacement(self) -> int:
        return sum(self.per_key_displacement)


class ProbeTable:
    """Linear-probing array of size t (a power of two), no deletions."""

    def __init__(self, t: int):
        if t < 1 or (t & (t - 1)) != 0:
            raise ConfigError("table size must be a power of two")
        self.t = t
        self.slots = [None] * t
        self.occupied = 0
        self.stats = CostStats()
        self._keys = set()

    def insert(self, key, slot: int) -> int:
        """Place `key` at the first empty slot at or after `slot`, cyclically.

        Returns the displacement (placement - slot) mod t and accounts
        displacement + 1 probes.
        """
        if self.occupied >= self.t:
            raise TableFullError(f"table of size {self.t} is full")
        if key in self._keys:
            raise ConfigError(f"duplicate key {key!r}")
        mask = self.t - 1
        pos = slot & mask
        disp = 0
        while self.slots[pos] is not None:
            pos = (pos + 1) & mask
            disp += 1
        self.slots[pos] = key
        self._keys.add(key)
        self.occupied += 1
        self.stats.total_insert_probes += disp + 1
        self.stats.per_key_displacement.append(disp)
        return disp

    def search_cost(self, slot: int) -> int:
        """Cells inspected from `slot` through the first empty cell, inclusive."""
        mask = self.t - 1
        pos = slot & mask
        cost = 1
        while self.slots[pos] is not None:
            pos = (pos + 1) & mask
            cost += 1
        return cost

    def occupancy(self) -> np.ndarray:
        return np.array([s is not None for s in self.slots], dtype=bool)

    def run_decomposition(self) -> Counter:
        return run_decomposition(self.occupancy())


def run_decomposition(occupied: np.ndarray) -> Counter:
    """Multiset of cyclic maximal filled-interval lengths."""
    occ = np.asarray(occupied, dtype=bool)
    t = occ.size
    n = int(occ.sum())
    if n == 0:
        return Counter()
    if n == t:
        return Counter({t: 1})
    # rotate so position 0 is empty, then runs never wrap
    start = int(np.flatnonzero(~occ)[0])
    rot = np.roll(occ, -start)
    d = np.diff(rot.astype(np.int8))
    starts = np.flatnonzero(d == 1) + 1
    ends = np.flatnonzero(d == -1) + 1
    ends = np.append(ends, t) if rot[-1] else ends
    return Counter((ends - starts).tolist())


def search_cost_from_runs(runs: Counter, t: int) -> int:
    """Sum of search_cost over every slot, computed from the run multiset."""
    n = sum(length * count for length, count in runs.items())
    return t - n + sum(count * (length * (length + 1) // 2 + length)
                       for length, count in runs.items())


def parking_rotation(counts: np.ndarray) -> int:
    """A start slot whose incoming overflow queue is empty.

    Classic cycle argument: start right after the global minimum of the
    prefix sums of (counts - 1).  Requires sum(counts) < t.
    """
    s = np.cumsum(counts.astype(np.int64) - 1)
    return (int(np.argmin(s)) + 1) % counts.size


def bulk_occupancy(counts: np.ndarray) -> np.ndarray:
    """Occupied-slot mask after linear-probing insertion of `counts` keys per slot."""
    counts = np.asarray(counts)
    t = counts.size
    if int(counts.sum()) >= t:
        raise TableFullError("bulk insertion requires at least one empty slot")
    start = parking_rotation(counts)
    c = np.roll(counts, -start).astype(np.int64)
    s = np.cumsum(c - 1)
    w = s - np.minimum(np.minimum.accumulate(s), 0)   # queue after each slot
    arrived = np.empty(t, dtype=np.int64)
    arrived[0] = c[0]
    arrived[1:] = w[:-1] + c[1:]
    return np.roll(arrived > 0, start)


def bulk_displacement(counts: np.ndarray) -> int:
    """Total displacement of linear probing with `counts` keys hashed per slot.

    Equal to ProbeTable's total displacement for any insertion order.
    """
    counts = np.asarray(counts)
    if int(counts.sum()) >= counts.size:
        raise TableFullError("bulk insertion requires at least one empty slot")
    start = parking_rotation(counts)
    c = np.roll(counts, -start).astype(np.int64)
    s = np.cumsum(c - 1)
    w = s - np.minimum(np.minimum.accumulate(s), 0)
    return int(w.sum())


def bulk_displacement_rows(counts: np.ndarray) -> np.ndarray:
    """Row-wise bulk_displacement for a (batch, t) counts matrix."""
    counts = np.asarray(counts, dtype=np.int64)
    batch, t = counts.shape
    if (counts.sum(axis=1) >= t).any():
        raise TableFullError("bulk insertion requires at least one empty slot")
    s0 = np.cumsum(counts - 1, axis=1)
    start = (np.argmin(s0, axis=1) + 1) % t
    cols = (np.arange(t)[None, :] + start[:, None]) % t
    c = np.take_along_axis(counts, cols, axis=1)
    s = np.cumsum(c - 1, axis=1)
    w = s - np.minimum(np.minimum.accumulate(s, axis=1), 0)
    return w.sum(axis=1)


def bulk_search_cost(counts: np.ndarray, slot: int) -> int:
    """Unsuccessful-search cost from `slot` given per-slot hash counts."""
    occ = bulk_occupancy(counts)
    t = occ.size
    empties = np.flatnonzero(~occ)
    i = int(np.searchsorted(empties, slot % t))
    if i == empties.size:
        first_empty = int(empties[0]) + t
    else:
        first_empty = int(empties[i])
    return first_empty - (slot % t) + 1
