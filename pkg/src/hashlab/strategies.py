"""Node-splitting strategies and their exact rational balance solvers.

A tree node distributes 2m keys between two children.  The basic
strategies are:

  S1  split as evenly as possible (odd loads round to a random child)
  S2  give every key to one uniformly chosen child
  S3  give a uniformly chosen child ceil(m + sqrt(m/2)) keys

Mixes of these are tuned so that low moments of the left-child count X
match a truly random split exactly.  All solver outputs are Fractions;
the balance identities they satisfy are exact, not asymptotic.
"""

from __future__ import annotations

from dataclasses import dataclass
from fractions import Fraction
from functools import lru_cache

import numpy as np

from .errors import BalanceInfeasibleError, ConfigError

S1 = "S1"
S2 = "S2"
S3 = "S3"
RANDOM = "random"

_TAGS = (S1, S2, S3, RANDOM)


@dataclass(frozen=True)
class SplitStrategy:
    tag: str

    def __post_init__(self):
        if self.tag not in _TAGS:
            raise ConfigError(f"unknown strategy tag {self.tag!r}")


@dataclass(frozen=True)
class StrategyMix:
    """Convex combination of strategies (or nested mixes)."""

    entries: tuple  # of (SplitStrategy | StrategyMix, Fraction)

    def __post_init__(self):
        import math

        probs = [p for _, p in self.entries]
        if any(p < 0 or p > 1 for p in probs):
            raise ConfigError("mix probabilities must lie in [0, 1]")
        if sum(probs) != 1:
            raise ConfigError("mix probabilities must sum to exactly 1")
        den = math.lcm(*[p.denominator for p in probs])
        cum, acc = [], 0
        for p in probs:
            acc += int(p * den)
            cum.append(acc)
        object.__setattr__(self, "_den", den)
        object.__setattr__(self, "_cum", tuple(cum))


def s3_load(two_m: int) -> int:
    """Keys given to the chosen child under S3: ceil(m + sqrt(m/2)), exactly."""
    m = Fraction(two_m, 2)
    load = int(m)
    while load < m or (load - m) ** 2 < m / 2:
        load += 1
    return load


def s3_offset(two_m: int) -> Fraction:
    """The S3 child-load offset above the mean, delta' = s3_load - m."""
    return s3_load(two_m) - Fraction(two_m, 2)


def outcome_dist(obj, two_m: int) -> dict:
    """Exact distribution of the left-child key count X."""
    if isinstance(obj, StrategyMix):
        dist: dict = {}
        for item, prob in obj.entries:
            for x, q in outcome_dist(item, two_m).items():
                dist[x] = dist.get(x, Fraction(0)) + prob * q
        return dist
    tag = obj.tag if isinstance(obj, SplitStrategy) else obj
    half = Fraction(1, 2)
    if tag == S1:
        if two_m % 2 == 0:
            return {two_m // 2: Fraction(1)}
        return {two_m // 2: half, two_m // 2 + 1: half}
    if tag == S2:
        return {0: half, two_m: half}
    if tag == S3:
        load = s3_load(two_m)
        if load == two_m - load:
            return {load: Fraction(1)}
        return {load: half, two_m - load: half}
    if tag == RANDOM:
        from math import comb
        return {x: Fraction(comb(two_m, x), 2 ** two_m) for x in range(two_m + 1)}
    raise ConfigError(f"cannot take outcomes of {obj!r}")


def moment(obj, two_m: int, k: int) -> Fraction:
    """Central moment E[(X - m)^k] of the left-child count."""
    m = Fraction(two_m, 2)
    return sum(p * (x - m) ** k for x, p in outcome_dist(obj, two_m).items())


def falling(x, k: int):
    out = Fraction(1) if isinstance(x, Fraction) else 1
    for i in range(k):
        out *= x - i
    return out


def pk_exact(obj, two_m: int, k: int) -> Fraction:
    """Probability that k fixed keys among 2m all land in the left child.

    Conditioned on X, which keys go left is a uniform subset, so
    p_k = E[X^(falling k)] / (2m)^(falling k).
    """
    if two_m < k:
        raise ConfigError(f"need at least {k} keys at the node")
    num = sum(p * falling(Fraction(x), k) for x, p in outcome_dist(obj, two_m).items())
    return num / falling(Fraction(two_m), k)


def p4_exact(obj, two_m: int) -> Fraction:
    return pk_exact(obj, two_m, 4)


def solve_3indep_mix(two_m: int) -> Fraction:
    """P_S2 making the S1/S2 mix second moment equal m/2 (3-independence).

    Closed form: 1/(2m) for even loads, 1/(2m+1) for odd.
    """
    if two_m < 2:
        raise ConfigError("need at least 2 keys to mix strategies")
    m = Fraction(two_m, 2)
    f2_s1 = moment(SplitStrategy(S1), two_m, 2)
    f2_s2 = m * m
    p = (m / 2 - f2_s1) / (f2_s2 - f2_s1)
    assert 0 < p <= 1
    return p


def solve_T2_mix(two_m: int) -> Fraction:
    """P_S3 making the S1/S3 mix second moment equal m/2."""
    if two_m < 2:
        raise ConfigError("need at least 2 keys to mix strategies")
    m = Fraction(two_m, 2)
    f2_s1 = moment(SplitStrategy(S1), two_m, 2)
    f2_s3 = s3_offset(two_m) ** 2
    if f2_s3 <= f2_s1:
        raise BalanceInfeasibleError(f"S3 offset too small at load {two_m}")
    p = (m / 2 - f2_s1) / (f2_s3 - f2_s1)
    # the ceiling in s3_load guarantees delta'^2 >= m/2, hence p <= 1
    assert 0 < p <= 1
    return p


@lru_cache(maxsize=None)
def t1_mix(two_m: int) -> StrategyMix:
    p = solve_3indep_mix(two_m)
    return StrategyMix(((SplitStrategy(S2), p), (SplitStrategy(S1), 1 - p)))


@lru_cache(maxsize=None)
def t2_mix(two_m: int) -> StrategyMix:
    p = solve_T2_mix(two_m)
    return StrategyMix(((SplitStrategy(S3), p), (SplitStrategy(S1), 1 - p)))


def solve_Tstar_mix(two_m: int) -> Fraction:
    """P_T1 making the T1/T2 mix satisfy p4 = 1/16 exactly.

    Requires p4(T1) >= 1/16 >= p4(T2) with the two unequal; callers fall
    back to truly random splitting for loads where this fails.
    """
    if two_m < 4:
        raise ConfigError("p4 balance needs at least 4 keys")
    target = Fraction(1, 16)
    a = p4_exact(t1_mix(two_m), two_m)
    b = p4_exact(t2_mix(two_m), two_m)
    if a == b:
        raise BalanceInfeasibleError(f"degenerate p4 balance at load {two_m}")
    p = (target - b) / (a - b)
    if not 0 <= p <= 1:
        raise BalanceInfeasibleError(f"p4 balance outside [0,1] at load {two_m}")
    return p


@lru_cache(maxsize=None)
def tstar_mix(two_m: int) -> StrategyMix:
    p = solve_Tstar_mix(two_m)
    return StrategyMix(((t1_mix(two_m), p), (t2_mix(two_m), 1 - p)))


@lru_cache(maxsize=None)
def tminus_mix(two_m: int, p_t1) -> StrategyMix:
    p_t1 = Fraction(p_t1)
    return StrategyMix(((t1_mix(two_m), p_t1), (t2_mix(two_m), 1 - p_t1)))


def broken_3indep_mix(two_m: int) -> StrategyMix:
    """Negative control: the 3-independent mix with P_S2 doubled."""
    p = 2 * solve_3indep_mix(two_m)
    if p > 1:
        raise ConfigError("doubled probability exceeds 1 at this load")
    return StrategyMix(((SplitStrategy(S2), p), (SplitStrategy(S1), 1 - p)))


def _randbelow(n: int, rng: np.random.Generator) -> int:
    """Uniform integer in [0, n) for arbitrarily large n, by rejection."""
    if n <= (1 << 63):
        return int(rng.integers(0, n))
    bits = n.bit_length()
    words = (bits + 31) // 32
    while True:
        v = 0
        for w in rng.integers(0, 1 << 32, size=words, dtype=np.uint64):
            v = (v << 32) | int(w)
        v >>= 32 * words - bits
        if v < n:
            return v


def resolve(obj, rng: np.random.Generator) -> str:
    """Draw the leaf strategy tag of a (possibly nested) mix.

    Fraction probabilities are sampled exactly via integer draws.
    """
    while isinstance(obj, StrategyMix):
        u = _randbelow(obj._den, rng)
        for (item, _), threshold in zip(obj.entries, obj._cum):
            if u < threshold:
                obj = item
                break
    return obj.tag


def sample_split(obj, two_m: int, rng: np.random.Generator) -> tuple[str, int]:
    """Sample (resolved tag, left-child count) for a node with 2m keys."""
    tag = resolve(obj, rng) if isinstance(obj, (StrategyMix, SplitStrategy)) else obj
    if tag == S1:
        left = two_m // 2
        if two_m % 2:
            left += int(rng.integers(0, 2))
    elif tag == S2:
        left = two_m * int(rng.integers(0, 2))
    elif tag == S3:
        load = s3_load(two_m)
        left = load if rng.integers(0, 2) else two_m - load
    elif tag == RANDOM:
        left = int(rng.binomial(two_m, 0.5))
    else:
        raise ConfigError(f"unknown tag {tag!r}")
    return tag, left


def split_keys(keys: np.ndarray, obj, rng: np.random.Generator) -> tuple[str, np.ndarray, np.ndarray]:
    """Split a key array: the left set is a uniform subset of the drawn size."""
    two_m = len(keys)
    tag, left_count = sample_split(obj, two_m, rng)
    perm = rng.permutation(two_m)
    return tag, keys[perm[:left_count]], keys[perm[left_count:]]


@lru_cache(maxsize=None)
def node_params(two_m: int) -> dict:
    """Per-load sampling constants (floats) for the vectorized tree samplers."""
    out = {
        "p_s2": float(solve_3indep_mix(two_m)) if two_m >= 2 else 0.0,
        "p_s3": 0.0,
        "s3_load": two_m,
        "p_t1_star": 1.0,
        "tstar_ok": False,
    }
    if two_m >= 2:
        out["p_s3"] = float(solve_T2_mix(two_m))
        out["s3_load"] = s3_load(two_m)
    if two_m >= 4:
        try:
            out["p_t1_star"] = float(solve_Tstar_mix(two_m))
            out["tstar_ok"] = True
        except BalanceInfeasibleError:
            pass
    return out
