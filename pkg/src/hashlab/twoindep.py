"""Pairwise-independent distribution with Theta(sqrt(n)) expected query cost.

The table (t = 2n, an odd power of two) is cut into sqrt(n) intervals of
length d = 2*sqrt(n) anchored at the query's hash.  Keys are spread either
evenly (S1) or with one interval, possibly the query's, packed with
4*sqrt(n) keys (S2).  The S2 probability is solved exactly so that the
expected number of same-interval key pairs equals C(n,2)/sqrt(n), which
makes interval collisions, and hence slot collisions, exactly pairwise
independent.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from fractions import Fraction

import numpy as np

from .errors import ConfigError


@dataclass(frozen=True)
class TwoIndepConfig:
    t: int
    n: int
    sqrt_n: int
    d: int
    p_s2: Fraction


def _even_collisions(n: int, sqrt_n: int) -> int:
    return sqrt_n * math.comb(sqrt_n, 2)


def _packed_collisions(n: int, sqrt_n: int) -> int:
    return (sqrt_n - 4) * math.comb(sqrt_n, 2) + math.comb(4 * sqrt_n, 2)


def solve_2indep_mix(n: int) -> TwoIndepConfig:
    """Solve the S2 probability from the exact collision-count balance."""
    if n < 64:
        raise ConfigError("need n >= 64")
    sqrt_n = math.isqrt(n)
    if sqrt_n * sqrt_n != n or sqrt_n & (sqrt_n - 1):
        raise ConfigError("sqrt(n) must be a power of two")
    target = Fraction(math.comb(n, 2), sqrt_n)
    c_s1 = _even_collisions(n, sqrt_n)
    c_s2 = _packed_collisions(n, sqrt_n)
    p = (target - c_s1) / (c_s2 - c_s1)
    if not 0 < p < 1:
        raise ConfigError(f"collision balance outside (0,1): {p}")
    return TwoIndepConfig(t=2 * n, n=n, sqrt_n=sqrt_n, d=2 * sqrt_n, p_s2=p)


def pair_collision_prob(config: TwoIndepConfig) -> Fraction:
    """Exact Pr[two fixed stored keys land in the same interval] under the mix."""
    mixed = (config.p_s2 * _packed_collisions(config.n, config.sqrt_n)
             + (1 - config.p_s2) * _even_collisions(config.n, config.sqrt_n))
    return mixed / math.comb(config.n, 2)


def query_collision_prob(config: TwoIndepConfig) -> Fraction:
    """Exact Pr[a fixed stored key lands in the query's interval].

    The expected count in the query interval is sqrt(n) under both
    strategies (the packed interval is the query's with probability 1/4).
    """
    n, r = config.n, config.sqrt_n
    expected_s2 = Fraction(1, 4) * 4 * r
    expected_s1 = Fraction(r)
    return (config.p_s2 * expected_s2 + (1 - config.p_s2) * expected_s1) / n


@dataclass
class TwoIndepSample:
    query_slot: int
    interval_counts: np.ndarray
    interval_starts: np.ndarray
    strategy: str
    loaded_interval: int | None


def sample_intervals(config: TwoIndepConfig, rng: np.random.Generator,
                     force_strategy: str | None = None,
                     force_loaded_query: bool = False) -> TwoIndepSample:
    """Draw the query slot and the per-interval key counts.

    The query's interval is the one ending at the query slot (index
    sqrt_n - 1).  `force_strategy` / `force_loaded_query` condition the
    draw for targeted experiments.
    """
    t, r, d = config.t, config.sqrt_n, config.d
    query_slot = int(rng.integers(0, t))
    starts = (query_slot + np.arange(r, dtype=np.int64) * d + 1) % t

    if force_strategy is None:
        p = config.p_s2
        use_s2 = int(rng.integers(0, p.denominator)) < p.numerator
    else:
        use_s2 = force_strategy == "S2"

    counts = np.full(r, r, dtype=np.int64)
    loaded = None
    if use_s2:
        query_iv = r - 1
        others = rng.choice(r - 1, size=3, replace=False)
        special = np.append(others, query_iv)
        if force_loaded_query:
            loaded = query_iv
        else:
            loaded = int(special[rng.integers(0, 4)])
        counts[special] = 0
        counts[loaded] = 4 * r
    return TwoIndepSample(
        query_slot=query_slot,
        interval_counts=counts,
        interval_starts=starts,
        strategy="S2" if use_s2 else "S1",
        loaded_interval=loaded,
    )


def sample_2indep_counts(config: TwoIndepConfig, rng: np.random.Generator,
                         force_strategy: str | None = None,
                         force_loaded_query: bool = False) -> tuple[int, np.ndarray]:
    """One draw of the full construction, reduced to per-slot hash counts."""
    s = sample_intervals(config, rng, force_strategy, force_loaded_query)
    bases = np.repeat(s.interval_starts, s.interval_counts)
    slots = (bases + rng.integers(0, config.d, size=config.n)) % config.t
    return s.query_slot, np.bincount(slots, minlength=config.t)


def sample_2indep(config: TwoIndepConfig, rng: np.random.Generator,
                  force_strategy: str | None = None,
                  force_loaded_query: bool = False):
    """Per-key assignment: (key -> slot, key -> interval, sample metadata).

    Which keys go to which interval is a uniform set partition respecting
    the drawn counts.
    """
    s = sample_intervals(config, rng, force_strategy, force_loaded_query)
    n, d, t = config.n, config.d, config.t
    perm = rng.permutation(n)
    interval_of_key = np.empty(n, dtype=np.int64)
    interval_of_key[perm] = np.repeat(np.arange(config.sqrt_n), s.interval_counts)
    offsets = rng.integers(0, d, size=n)
    slots = (s.interval_starts[interval_of_key] + offsets) % t
    return slots, interval_of_key, s
