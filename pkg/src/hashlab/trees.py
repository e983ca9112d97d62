"""Distribution trees that hash keys 3- or 4-independently while
clustering them adversarially for linear probing.

A perfect binary tree spans the table; each node splits its keys between
its children with a strategy mix.  The 3-independent tree applies the
S1/S2 mix everywhere.  The 4-independent tree hashes the query first and
then treats the query path specially: exact per-node balance (T*) on the
top levels, then T1 on the query path against a calibrated T1/T2 blend
elsewhere, with a stopping rule that switches everything below to truly
random splits once S2 fires on the query path (or past the bottom
boundary level).
"""

from __future__ import annotations

from dataclasses import dataclass, field
from fractions import Fraction

import numpy as np

from . import strategies as st
from .errors import ConfigError

MODE_TSTAR = "tstar"
MODE_WINDOW = "window"
MODE_RANDOM = "random"


def log2_int(t: int) -> int:
    if t < 2 or t & (t - 1):
        raise ConfigError("table size must be a power of two >= 2")
    return t.bit_length() - 1


def tstar_top_levels(t: int) -> int:
    """First calibrated level: ceil((2/3) * log2 t)."""
    lg = log2_int(t)
    return -((-2 * lg) // 3)


def window_bottom_level(t: int) -> int:
    """Last calibrated level: floor((5/6) * log2 t)."""
    return (5 * log2_int(t)) // 6


def keys_for_3indep(t: int) -> int:
    return -((-2 * t) // 3)


def keys_for_4indep(t: int) -> int:
    return (2 * t) // 3


def _interleave(left: np.ndarray, right: np.ndarray) -> np.ndarray:
    out = np.empty(2 * left.size, dtype=np.int64)
    out[0::2] = left
    out[1::2] = right
    return out


def _split_3indep_level(c: np.ndarray, rng: np.random.Generator) -> np.ndarray:
    """Vectorized S1/S2 mix split of every node load in `c`.

    P_S2 is 1/(2m) for even loads and 1/(2m+1) for odd ones, realised as
    an exact integer draw.  Loads below 2 fall through to the S1 branch,
    which sends a single key to a uniform child.
    """
    big = c >= 2
    denom = np.where(c % 2 == 0, c, c + 1)
    u = rng.integers(0, np.maximum(denom, 1))
    s2 = big & (u == 0)
    bits = rng.integers(0, 2, size=c.size)
    left = c // 2 + (c % 2) * bits
    return np.where(s2, c * bits, left)


def sample_3indep_counts(t: int, rng: np.random.Generator, n: int | None = None) -> np.ndarray:
    """Counts-only draw of the 3-independent tree; returns hashes per slot."""
    n = keys_for_3indep(t) if n is None else n
    c = np.array([n], dtype=np.int64)
    for _ in range(log2_int(t)):
        left = _split_3indep_level(c, rng)
        c = _interleave(left, c - left)
    return c


def sample_3indep_tree(t: int, rng: np.random.Generator, n: int | None = None) -> np.ndarray:
    """Per-key draw: returns slot_of_key, distributionally identical to the
    counts-only path (keys are exchangeable at every node)."""
    n = keys_for_3indep(t) if n is None else n
    slots = np.empty(n, dtype=np.int64)
    keys = np.arange(n)
    stack = [(0, t, keys)]
    while stack:
        base, width, node_keys = stack.pop()
        if node_keys.size == 0:
            continue
        if width == 1:
            slots[node_keys] = base
            continue
        mix = st.t1_mix(node_keys.size) if node_keys.size >= 2 else st.SplitStrategy(st.S1)
        _, left_keys, right_keys = st.split_keys(node_keys, mix, rng)
        stack.append((base, width // 2, left_keys))
        stack.append((base + width // 2, width // 2, right_keys))
    return slots


@dataclass
class Schedule:
    """Calibrated per-level T1 probabilities for the non-query nodes."""

    t: int
    p_t1: dict = field(default_factory=dict)   # level -> float in [0, 1]

    @property
    def top(self) -> int:
        return tstar_top_levels(self.t)

    @property
    def bottom(self) -> int:
        return window_bottom_level(self.t)

    def levels(self) -> range:
        return range(self.top, self.bottom + 1)

    def validate(self):
        missing = [lv for lv in self.levels() if lv not in self.p_t1]
        if missing:
            raise ConfigError(f"schedule for t={self.t} missing levels {missing}")


@dataclass
class TreeSample:
    slot_counts: np.ndarray
    query_slot: int
    trace: list                 # (level, resolved tag) along the query path
    stop_level: int | None      # level at which S2 fired on the query path
    mode_by_level: list
    query_loads: list           # keys at the query-path node, per level


def _node_param_columns(c: np.ndarray):
    uniq, inverse = np.unique(c, return_inverse=True)
    cols = {k: np.empty(uniq.size) for k in ("p_s2", "p_s3", "p_t1_star")}
    s3l = np.empty(uniq.size, dtype=np.int64)
    ok = np.empty(uniq.size, dtype=bool)
    for i, u in enumerate(uniq):
        prm = st.node_params(int(u)) if u >= 2 else {
            "p_s2": 0.0, "p_s3": 0.0, "p_t1_star": 1.0, "s3_load": int(u), "tstar_ok": False}
        cols["p_s2"][i] = prm["p_s2"]
        cols["p_s3"][i] = prm["p_s3"]
        cols["p_t1_star"][i] = prm["p_t1_star"]
        s3l[i] = prm["s3_load"]
        ok[i] = prm["tstar_ok"]
    return ({k: v[inverse] for k, v in cols.items()}, s3l[inverse], ok[inverse])


def _split_4indep_level(c: np.ndarray, rng: np.random.Generator, mode: str,
                        query_index: int | None, p_minus: float | None):
    """Split one level of the 4-independent tree; returns (left, query tag)."""
    size = c.size
    if mode == MODE_RANDOM:
        return rng.binomial(c, 0.5).astype(np.int64), st.RANDOM

    cols, s3l, tstar_ok = _node_param_columns(c)
    r_outer = rng.random(size)
    r_inner = rng.random(size)
    bits = rng.integers(0, 2, size=size)
    splittable = c >= 2

    if mode == MODE_TSTAR:
        eligible = tstar_ok                      # c >= 4 and balance feasible
        use_t1 = r_outer < cols["p_t1_star"]
    else:                                        # calibrated window
        eligible = c >= 4
        use_t1 = r_outer < p_minus
        if query_index is not None:
            eligible[query_index] = splittable[query_index]
            use_t1[query_index] = True

    is_s2 = eligible & use_t1 & (r_inner < cols["p_s2"])
    is_s3 = eligible & ~use_t1 & (r_inner < cols["p_s3"])
    is_s1 = eligible & ~is_s2 & ~is_s3
    random_mask = ~eligible

    left = np.where(is_s1, c // 2 + (c % 2) * bits, 0)
    left = np.where(is_s2, c * bits, left)
    left = np.where(is_s3, np.where(bits == 1, s3l, c - s3l), left)
    if random_mask.any():
        rnd = rng.binomial(np.where(random_mask, c, 0), 0.5)
        left = np.where(random_mask, rnd, left)

    qtag = st.RANDOM
    if query_index is not None:
        if is_s2[query_index]:
            qtag = st.S2
        elif is_s3[query_index]:
            qtag = st.S3
        elif is_s1[query_index]:
            qtag = st.S1
    return left.astype(np.int64), qtag


def sample_4indep_counts(t: int, schedule: Schedule, rng: np.random.Generator,
                         n: int | None = None) -> TreeSample:
    """Counts-only draw of the 4-independent tree with its stopping rule."""
    if schedule.t != t:
        raise ConfigError("schedule was calibrated for a different table size")
    schedule.validate()
    lg = log2_int(t)
    n = keys_for_4indep(t) if n is None else n
    top, bottom = schedule.top, schedule.bottom

    query_slot = int(rng.integers(0, t))
    c = np.array([n], dtype=np.int64)
    trace, modes, qloads = [], [], []
    stop_level = None
    for level in range(lg):
        qidx = query_slot >> (lg - level)
        qloads.append(int(c[qidx]))
        if stop_level is not None or level > bottom:
            mode = MODE_RANDOM
        elif level < top:
            mode = MODE_TSTAR
        else:
            mode = MODE_WINDOW
        p_minus = schedule.p_t1.get(level) if mode == MODE_WINDOW else None
        left, qtag = _split_4indep_level(c, rng, mode, qidx, p_minus)
        modes.append(mode)
        trace.append((level, qtag))
        if qtag == st.S2 and stop_level is None:
            stop_level = level
        c = _interleave(left, c - left)
    return TreeSample(slot_counts=c, query_slot=query_slot, trace=trace,
                      stop_level=stop_level, mode_by_level=modes, query_loads=qloads)


def sample_4indep_tree(t: int, schedule: Schedule, rng: np.random.Generator,
                       n: int | None = None):
    """Per-key draw of the 4-independent tree (slower; for verification).

    Returns (slot_of_key, TreeSample-like metadata without slot counts).
    """
    if schedule.t != t:
        raise ConfigError("schedule was calibrated for a different table size")
    schedule.validate()
    lg = log2_int(t)
    n = keys_for_4indep(t) if n is None else n
    top, bottom = schedule.top, schedule.bottom

    query_slot = int(rng.integers(0, t))
    slots = np.empty(n, dtype=np.int64)
    nodes = [np.arange(n)]
    trace, modes = [], []
    stop_level = None
    for level in range(lg):
        qidx = query_slot >> (lg - level)
        if stop_level is not None or level > bottom:
            mode = MODE_RANDOM
        elif level < top:
            mode = MODE_TSTAR
        else:
            mode = MODE_WINDOW
        modes.append(mode)
        next_nodes = []
        qtag = st.RANDOM
        empty = np.empty(0, dtype=np.int64)
        for idx, node_keys in enumerate(nodes):
            two_m = node_keys.size
            if two_m == 0:
                next_nodes.append(empty)
                next_nodes.append(empty)
                continue
            obj = _node_strategy(two_m, mode, idx == qidx, schedule, level)
            tag, left_keys, right_keys = st.split_keys(node_keys, obj, rng)
            if idx == qidx:
                qtag = tag
            next_nodes.append(left_keys)
            next_nodes.append(right_keys)
        trace.append((level, qtag))
        if qtag == st.S2 and stop_level is None:
            stop_level = level
        nodes = next_nodes
    for slot, node_keys in enumerate(nodes):
        slots[node_keys] = slot
    return slots, TreeSample(slot_counts=np.bincount(slots, minlength=t),
                             query_slot=query_slot, trace=trace,
                             stop_level=stop_level, mode_by_level=modes,
                             query_loads=[])


def sample_4indep_tuple_events(t: int, schedule: Schedule, rng: np.random.Generator,
                               batch: int, n_track: int = 4):
    """Track a fixed key tuple through `batch` tree draws (small t only).

    Returns per level (together, all_left) boolean arrays: whether the
    tracked keys still share a node entering the level, and whether the
    split sent them all to the left child.  Membership is drawn by
    sequential conditioning given the node's left count, which realises
    the uniform-subset law; tracking stops once the tuple separates.
    The whole batch is simulated with 2-D count arrays, so a million
    draws at t = 64 stay cheap.
    """
    if t > 512:
        raise ConfigError("batched tuple tracking is for small tables")
    schedule.validate()
    lg = log2_int(t)
    n = keys_for_4indep(t)
    top, bottom = schedule.top, schedule.bottom

    query_slot = rng.integers(0, t, size=batch)
    c = np.full((batch, 1), n, dtype=np.int64)
    stopped = np.zeros(batch, dtype=bool)
    together = np.ones(batch, dtype=bool)
    tracked_node = np.zeros(batch, dtype=np.int64)
    events = []

    # dense per-load parameter tables
    loads = np.arange(n + 1)
    p_s2 = np.zeros(n + 1)
    p_s3 = np.zeros(n + 1)
    s3l = loads.copy()
    pt1s = np.ones(n + 1)
    ok = np.zeros(n + 1, dtype=bool)
    for load in range(2, n + 1):
        prm = st.node_params(load)
        p_s2[load] = prm["p_s2"]
        p_s3[load] = prm["p_s3"]
        s3l[load] = prm["s3_load"]
        pt1s[load] = prm["p_t1_star"]
        ok[load] = prm["tstar_ok"]

    for level in range(lg):
        width = c.shape[1]
        qidx = query_slot >> (lg - level)
        rows = np.arange(batch)

        r_outer = rng.random(c.shape)
        r_inner = rng.random(c.shape)
        bits = rng.integers(0, 2, size=c.shape)
        in_window = top <= level <= bottom
        if level < top:
            eligible = ok[c]
            use_t1 = r_outer < pt1s[c]
        elif in_window:
            eligible = c >= 4
            use_t1 = r_outer < schedule.p_t1[level]
            eligible[rows, qidx] = c[rows, qidx] >= 2
            use_t1[rows, qidx] = True
        else:
            eligible = np.zeros(c.shape, dtype=bool)
            use_t1 = np.zeros(c.shape, dtype=bool)
        eligible &= ~stopped[:, None]

        is_s2 = eligible & use_t1 & (r_inner < p_s2[c])
        is_s3 = eligible & ~use_t1 & (r_inner < p_s3[c])
        is_s1 = eligible & ~is_s2 & ~is_s3
        rnd = rng.binomial(c, 0.5)
        left = np.where(is_s1, c // 2 + (c % 2) * bits, rnd)
        left = np.where(is_s2, c * bits, left)
        left = np.where(is_s3, np.where(bits == 1, s3l[c], c - s3l[c]), left)

        # tracked-tuple membership, drawn only while the tuple is together
        node_c = c[rows, tracked_node].astype(np.float64)
        node_left = left[rows, tracked_node].astype(np.float64)
        went_left = np.ones(batch, dtype=bool)
        went_right = np.ones(batch, dtype=bool)
        avail_left = node_left.copy()
        avail = node_c.copy()
        for _ in range(n_track):
            goes = rng.random(batch) < avail_left / np.maximum(avail, 1)
            went_left &= goes
            went_right &= ~goes
            avail_left -= goes
            avail -= 1.0
        all_left = together & went_left
        events.append((together.copy(), all_left))
        together = together & (went_left | went_right)
        tracked_node = 2 * tracked_node + np.where(went_left, 0, 1)

        stopped |= is_s2[rows, qidx]
        nxt = np.empty((batch, 2 * width), dtype=np.int64)
        nxt[:, 0::2] = left
        nxt[:, 1::2] = c - left
        c = nxt
    return events


def _node_strategy(two_m: int, mode: str, is_query: bool, schedule: Schedule, level: int):
    if two_m < 2:
        return st.SplitStrategy(st.RANDOM)
    if mode == MODE_RANDOM:
        return st.SplitStrategy(st.RANDOM)
    if mode == MODE_TSTAR:
        if two_m >= 4 and st.node_params(two_m)["tstar_ok"]:
            return st.tstar_mix(two_m)
        return st.SplitStrategy(st.RANDOM)
    if is_query:
        return st.t1_mix(two_m)
    if two_m < 4:
        return st.SplitStrategy(st.RANDOM)
    return st.tminus_mix(two_m, schedule.p_t1[level])
