"""k-independent distribution that skews the minimum toward the query.

The unit interval is cut into n/k subintervals.  Regular keys scatter
uniformly; a subinterval holding exactly k keys ("exact") splits into two
halves whose first-half key-count parity is forced: to 0 when the query
lands inside, and by a compensating biased coin otherwise, keeping the
parity marginally uniform.  Conditioned on the query sitting in an exact
interval, the query wins the in-interval minimum with probability
(1 + 2^-k)/(k+1), a relative excess of 2^-k over fair.

Values are fixed-point: a key's hash is (interval, offset) with a
`precision`-bit offset, compared lexicographically.
"""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass
from fractions import Fraction

import numpy as np

from .errors import ConfigError, PrecisionError
from .stats import wilson_interval

TIE_LIMIT = 1e-3


@dataclass(frozen=True)
class MinwiseConfig:
    n: int
    k: int
    precision: int = 64

    def __post_init__(self):
        if self.k < 2 or self.k % 2:
            raise ConfigError("k must be even and >= 2")
        if self.n % self.k:
            raise ConfigError("k must divide n")
        if self.n < 2 * self.k:
            raise ConfigError("need n >= 2k")
        if self.precision < 2 * math.ceil(math.log2(self.n)):
            raise ConfigError("precision must be at least 2*log2(n) bits")

    @property
    def subintervals(self) -> int:
        return self.n // self.k

    @property
    def coin_p0(self) -> Fraction:
        """Pr[parity = 0] for an exact interval not holding the query."""
        kn = Fraction(self.k, self.n)
        return (Fraction(1, 2) - kn) / (1 - kn)


def pmin_exact(k: int) -> Fraction:
    """Pr[query is the in-interval minimum | its interval is exact]."""
    if k < 2 or k % 2:
        raise ConfigError("k must be even and >= 2")
    return Fraction(2**k + 1, 2**k * (k + 1))


@dataclass
class MinwiseSample:
    interval_of_key: np.ndarray     # (n,)
    offset_of_key: np.ndarray       # (n,) uint64-style grid offsets
    query_interval: int
    query_offset: int
    exact_interval: np.ndarray      # (subintervals,) bool
    parity: np.ndarray              # (subintervals,) 0/1, -1 where not exact

    def half_of_key(self, precision: int) -> np.ndarray:
        return (self.offset_of_key >> np.uint64(precision - 1)).astype(np.int64)

    def value_of_key(self, config: MinwiseConfig, key: int) -> Fraction:
        grid = 1 << config.precision
        return Fraction(
            int(self.interval_of_key[key]) * grid + int(self.offset_of_key[key]),
            config.subintervals * grid,
        )


def _force_parity(iv: np.ndarray, half: np.ndarray, counts: np.ndarray,
                  parity: np.ndarray, k: int) -> np.ndarray:
    """Overwrite one key's half bit per exact interval to force the parity.

    With k even, first-half count parity P is equivalent to the parity of
    the sum of half bits, so the forced bit is the sum of the others
    minus P, mod 2.  The induced joint law is uniform over half vectors
    with the prescribed parity, hence exchangeable.
    """
    half = half.copy()
    order = np.argsort(iv, kind="stable")
    sorted_iv = iv[order]
    boundaries = np.flatnonzero(np.diff(sorted_iv)) + 1
    starts = np.concatenate(([0], boundaries))
    ends = np.concatenate((boundaries, [iv.size]))
    present = sorted_iv[starts]
    sums = np.add.reduceat(half[order], starts)
    for s, e, interval, total in zip(starts, ends, present, sums):
        if counts[interval] == k and parity[interval] >= 0:
            last = order[e - 1]
            rest = int(total) - int(half[last])
            half[last] = (rest + int(parity[interval])) & 1
    return half


def sample_minwise(config: MinwiseConfig, rng: np.random.Generator) -> MinwiseSample:
    """One full draw of the construction: all n regular values plus the query."""
    n, k, m = config.n, config.k, config.subintervals
    prec = config.precision
    iv = rng.integers(0, m, size=n).astype(np.int64)
    counts = np.bincount(iv, minlength=m)
    exact = counts == k

    query_interval = int(rng.integers(0, m))
    query_offset = int(rng.integers(0, 1 << prec, dtype=np.uint64))

    parity = np.full(m, -1, dtype=np.int64)
    if exact.any():
        coin = config.coin_p0
        draws = rng.integers(0, coin.denominator, size=m)
        parity[exact] = np.where(draws[exact] < coin.numerator, 0, 1)
        if exact[query_interval]:
            parity[query_interval] = 0

    half = rng.integers(0, 2, size=n).astype(np.uint64)
    half = _force_parity(iv, half, counts, parity, k)
    sub_offset = rng.integers(0, 1 << (prec - 1), size=n, dtype=np.uint64)
    offsets = (half << np.uint64(prec - 1)) | sub_offset
    return MinwiseSample(interval_of_key=iv, offset_of_key=offsets,
                         query_interval=query_interval, query_offset=query_offset,
                         exact_interval=exact, parity=parity)


@dataclass
class MinEventBatch:
    q_min: np.ndarray            # query strictly below every regular key
    q_exact: np.ndarray          # query's interval holds exactly k keys
    win_in_interval: np.ndarray  # query below every key of its own interval
    earlier_empty: np.ndarray    # no regular key in intervals before the query's
    ties: np.ndarray


def adversarial_min_events(config: MinwiseConfig, adversarial: bool = True):
    """Batch sampler of per-trial query-minimum events.

    Only the query's subinterval internals can decide the minimum (keys
    in other intervals matter only through emptiness), so the batch path
    samples exactly those coordinates.  With `adversarial` False the
    parity forcing is skipped, giving the truly random control.

    Returns a callable (rng, count) -> MinEventBatch.
    """
    n, k, m = config.n, config.k, config.subintervals
    prec = config.precision
    if prec != 64:
        raise ConfigError("batch estimation supports 64-bit precision only")

    def sample(rng: np.random.Generator, count: int):
        iv = rng.integers(0, m, size=(count, n), dtype=np.int64)
        qiv = rng.integers(0, m, size=(count, 1), dtype=np.int64)
        in_q = iv == qiv
        z = in_q.sum(axis=1)
        exact = z == k
        earlier_empty = ~(iv < qiv).any(axis=1)

        half = rng.integers(0, 2, size=(count, n), dtype=np.uint64)
        if adversarial and exact.any():
            # force even first-half parity (query inside => parity 0)
            rev_first = n - 1 - np.argmax(in_q[:, ::-1], axis=1)
            rows = np.flatnonzero(exact)
            last = rev_first[rows]
            sums = (half * in_q)[rows].sum(axis=1)
            half[rows, last] = (sums - half[rows, last]) & np.uint64(1)
        sub = rng.integers(0, 1 << 63, size=(count, n), dtype=np.uint64)
        vals = (half << np.uint64(63)) | sub
        vals = np.where(in_q, vals, np.uint64(0xFFFFFFFFFFFFFFFF))
        in_min = vals.min(axis=1)
        qoff = rng.integers(0, 1 << 63, size=count, dtype=np.uint64) \
            | (rng.integers(0, 2, size=count, dtype=np.uint64) << np.uint64(63))
        win_in = np.where(z == 0, True, qoff < in_min)
        ties = (z > 0) & (qoff == in_min)
        return MinEventBatch(q_min=earlier_empty & win_in, q_exact=exact,
                             win_in_interval=win_in, earlier_empty=earlier_empty,
                             ties=ties)

    return sample


@dataclass
class MinProbEstimate:
    trials: int
    successes: int
    estimate: float
    ci99: tuple
    tie_count: int
    fair: float


def estimate_min_prob(event_sampler, n: int, trials: int, rng: np.random.Generator,
                      batch: int = 1 << 13) -> MinProbEstimate:
    """Fraction of trials where the query's value is strictly minimal.

    Runs `event_sampler` in batches; ties above 0.1% of trials mean the
    fixed-point precision is too low and raise PrecisionError.
    """
    done = successes = ties = 0
    while done < trials:
        count = min(batch, trials - done)
        ev = event_sampler(rng, count)
        successes += int(ev.q_min.sum())
        ties += int(ev.ties.sum())
        done += count
    if ties > TIE_LIMIT * trials:
        raise PrecisionError(f"{ties} ties in {trials} trials")
    return MinProbEstimate(trials=trials, successes=successes,
                           estimate=successes / trials,
                           ci99=wilson_interval(successes, trials),
                           tie_count=ties, fair=1.0 / (n + 1))


def estimate_conditional_pmin(config: MinwiseConfig, conditioned_trials: int,
                              rng: np.random.Generator, require_minimal: bool = False,
                              batch: int = 1 << 13) -> MinProbEstimate:
    """In-interval minimum frequency conditioned on the query's interval
    being exact (optionally also the minimal nonempty interval), by
    rejection over full draws."""
    sampler = adversarial_min_events(config)
    kept = successes = ties = 0
    while kept < conditioned_trials:
        ev = sampler(rng, batch)
        keep = ev.q_exact & ev.earlier_empty if require_minimal else ev.q_exact
        successes += int((ev.win_in_interval & keep).sum())
        ties += int((ev.ties & keep).sum())
        kept += int(keep.sum())
    if ties > TIE_LIMIT * kept:
        raise PrecisionError(f"{ties} ties in {kept} conditioned trials")
    return MinProbEstimate(trials=kept, successes=successes,
                           estimate=successes / kept,
                           ci99=wilson_interval(successes, kept),
                           tie_count=ties, fair=float(pmin_exact(config.k)))


def predicted_overall_bias(config: MinwiseConfig) -> Fraction:
    """Exact additive excess of Pr[query minimal] over 1/(n+1).

    The excess is Pr[Z=k] * Pr[E | Z=k] * 2^-k/(k+1), where Z counts the
    regular keys in the query's interval and E is the event that no
    earlier interval holds a key.
    """
    n, k, m = config.n, config.k, config.subintervals
    pz = Fraction(math.comb(n, k)) * Fraction(m - 1, m) ** (n - k) / Fraction(m) ** k
    pe = sum(Fraction(m - 1 - j, m - 1) ** (n - k) for j in range(m)) / m
    return pz * pe * Fraction(1, 2**k * (k + 1))


def estimate_overall_bias(config: MinwiseConfig, trials: int,
                          rng: np.random.Generator,
                          batch: int = 1 << 13) -> tuple[float, float]:
    """Variance-reduced estimate of the additive min-probability excess.

    The excess factorises as Pr[Z=k] * Pr[E|Z=k] * (p_min - 1/(k+1)); the
    first two factors are exact combinatorics, so only the in-interval
    excess is estimated, from the trials where the query's interval is
    exact.  Returns (estimate, standard error).
    """
    n, k, m = config.n, config.k, config.subintervals
    import math as _math

    pz = float(Fraction(_math.comb(n, k)) * Fraction(m - 1, m) ** (n - k)
               / Fraction(m) ** k)
    pe = float(sum(Fraction(m - 1 - j, m - 1) ** (n - k) for j in range(m)) / m)
    weight = pz * pe
    sampler = adversarial_min_events(config)
    kept = wins = 0
    done = 0
    while done < trials:
        count = min(batch, trials - done)
        ev = sampler(rng, count)
        kept += int(ev.q_exact.sum())
        wins += int((ev.q_exact & ev.win_in_interval).sum())
        done += count
    p_hat = wins / max(kept, 1)
    sigma = math.sqrt(max(p_hat * (1 - p_hat), 1e-12) / max(kept, 1))
    return weight * (p_hat - 1 / (k + 1)), weight * sigma


def trials_for_bias_detection(config: MinwiseConfig, z_total: float = 4.653) -> int:
    """Trial count giving ~99% size and power for detecting the excess.

    z_total is the sum of the one-sided 99% quantiles for size and power.
    """
    bias = float(predicted_overall_bias(config))
    p = 1.0 / (config.n + 1) + bias
    return math.ceil(z_total**2 * p * (1 - p) / bias**2)


def kwise_check_minwise(config: MinwiseConfig, tuple_size: int, trials: int,
                        rng: np.random.Generator, include_query: bool = False,
                        significance: float = 0.001):
    """Chi-square of joint (subinterval, half) cells against the product law.

    A fixed random tuple of regular keys (optionally with the query in
    place of one) is tracked across `trials` full draws.  Cells fold the
    subinterval index modulo g to keep the table size near trials/20.
    """
    from .independence import IndepTestResult, chi_square_uniform

    if tuple_size > config.k:
        raise ConfigError("tuple size must not exceed k")
    n_regular = tuple_size - 1 if include_query else tuple_size
    keys = rng.choice(config.n, size=n_regular, replace=False)
    m = config.subintervals
    g = m
    while tuple_size > 0 and (2 * g) ** tuple_size > max(trials // 20, 16) and g > 1:
        g //= 2
    cells = (2 * g) ** tuple_size
    prec = config.precision
    counts = np.zeros(cells, dtype=np.int64)
    for _ in range(trials):
        s = sample_minwise(config, rng)
        code = 0
        for key in keys:
            cell = (int(s.interval_of_key[key]) % g) * 2 + \
                int(s.offset_of_key[key] >> np.uint64(prec - 1))
            code = code * (2 * g) + cell
        if include_query:
            cell = (s.query_interval % g) * 2 + (s.query_offset >> (prec - 1))
            code = code * (2 * g) + cell
        counts[code] += 1
    statistic, dof, p_value, passed = chi_square_uniform(counts, significance)
    return IndepTestResult(k=tuple_size, trials=trials, statistic=statistic,
                           dof=dof, p_value=p_value, passed=passed)


def parity_half_count_dist(k: int, parity: int = 0) -> dict:
    """Exact law of the first-half key count X for an exact interval.

    Enumerates the k-1 free half bits with the last bit forced; matches
    binom(k, x) / 2^(k-1) on counts of the prescribed parity.
    """
    if k % 2:
        raise ConfigError("parity forcing is defined for even k")
    dist: dict = {}
    w = Fraction(1, 2 ** (k - 1))
    for bits in itertools.product((0, 1), repeat=k - 1):
        forced = (sum(bits) + parity) & 1
        x = k - (sum(bits) + forced)
        dist[x] = dist.get(x, Fraction(0)) + w
    return dist


def exhaustive_small_case(precision: int = 4) -> dict:
    """Exact enumeration of the k=2, n=4 sampler on a 4-bit value grid.

    Walks every discrete random choice the sampler makes that can affect
    the query's interval: key-to-interval assignments, the query position,
    the free half bit and within-half offsets of an exact query interval,
    or raw offsets otherwise.  Choices in other intervals marginalise out
    of both measured statistics (their total weight is one) and are
    skipped; the compensating parity coin there is degenerate anyway
    since k/n = 1/2.  Ties at the minimum carry fractional credit
    1/(1 + #tied), the exact discrete equivalent of continuous values.

    Returns {"x_dist": {x: Fraction}, "pmin": Fraction}.
    """
    k, n, m = 2, 4, 2
    off_bits = precision - int(math.log2(m))
    grid = 1 << off_bits
    halfgrid = grid >> 1

    x_weights: dict = {}
    pmin_weight = Fraction(0)
    exact_weight = Fraction(0)

    w_iv = Fraction(1, m**n)
    w_q = Fraction(1, m * grid)
    for iv in itertools.product(range(m), repeat=n):
        for q_iv in range(m):
            members = [key for key in range(n) if iv[key] == q_iv]
            c = len(members)
            exact = c == k
            if exact:
                # parity 0 (query inside); free bit for the first key,
                # the second forced to match; offsets within halves
                placements = []
                for h_first in (0, 1):
                    h_forced = h_first  # sum of half bits must be even
                    for o1 in range(halfgrid):
                        for o2 in range(halfgrid):
                            offs = (h_first * halfgrid + o1, h_forced * halfgrid + o2)
                            x = sum(1 for h in (h_first, h_forced) if h == 0)
                            placements.append((offs, x, Fraction(1, 2 * halfgrid**2)))
            else:
                placements = [
                    (offs, None, Fraction(1, grid**c))
                    for offs in itertools.product(range(grid), repeat=c)
                ]
            for q_off in range(grid):
                base = w_iv * w_q
                for offs, x, w_place in placements:
                    w = base * w_place
                    if exact:
                        exact_weight += w
                        x_weights[x] = x_weights.get(x, Fraction(0)) + w
                    if offs:
                        lowest = min(offs)
                        if q_off < lowest:
                            credit = Fraction(1)
                        elif q_off == lowest:
                            credit = Fraction(1, 1 + sum(1 for o in offs if o == lowest))
                        else:
                            credit = Fraction(0)
                    else:
                        credit = Fraction(1)
                    if exact:
                        pmin_weight += w * credit
    x_dist = {x: w / exact_weight for x, w in x_weights.items()}
    return {"x_dist": x_dist, "pmin": pmin_weight / exact_weight}
