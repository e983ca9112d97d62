"""Structured bad inputs and analysis tools for multiply-shift hashing.

Consecutive (or arithmetic-progression) keys are folded by a multiplier
`a` onto a few tight arcs of the unit circle whenever some small x has
a*x mod 2^ell close to 0.  The smallest such x (mu_a) controls both the
linear-probing insertion cost, Omega(n/mu_a) per key, and the minwise
min-probability excess.  All circle-distance comparisons are exact
integer arithmetic on the 2^ell grid.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from fractions import Fraction

import numpy as np

from .errors import ConfigError
from .families import MultShiftFn, ms_eval_many

_SIEVE_LIMIT = 1 << 20
_spf = np.zeros(2, dtype=np.int64)


def smallest_prime_factors(limit: int) -> np.ndarray:
    """Smallest-prime-factor sieve up to `limit` (inclusive)."""
    spf = np.arange(limit + 1, dtype=np.int64)
    for p in range(2, math.isqrt(limit) + 1):
        if spf[p] == p:
            sl = slice(p * p, limit + 1, p)
            spf[sl] = np.where(spf[sl] == np.arange(p * p, limit + 1, p), p, spf[sl])
    return spf


def prime_factors(x: int, spf: np.ndarray) -> list:
    out = []
    while x > 1:
        p = int(spf[x])
        out.append(p)
        while x % p == 0:
            x //= p
    return out


@dataclass(frozen=True)
class BadInputSpec:
    n: int
    alpha: int = 1
    beta: int = 0
    eps: float = 1.0
    mode: str = "interval"
    ell_in: int = 64
    seed: int = 0

    def __post_init__(self):
        if self.mode not in ("interval", "arithmetic", "eps-fraction"):
            raise ConfigError(f"unknown mode {self.mode!r}")
        if self.eps <= 0 or self.eps > 1:
            raise ConfigError("eps must be in (0, 1]")
        if self.eps * self.n < 1:
            raise ConfigError("eps * n must be at least 1")


def gen_bad_input(spec: BadInputSpec) -> np.ndarray:
    """Keys alpha*i + beta (mod 2^ell_in) for i in [n]; eps-fraction mode
    keeps a seeded uniform subsample of floor(eps*n) of them."""
    mask = (1 << spec.ell_in) - 1
    keys = (spec.alpha * np.arange(spec.n, dtype=np.uint64) + np.uint64(spec.beta)) \
        & np.uint64(mask)
    if spec.mode == "eps-fraction":
        keep = int(spec.eps * spec.n)
        rng = np.random.Generator(np.random.Philox(np.random.SeedSequence(spec.seed)))
        chosen = rng.choice(spec.n, size=keep, replace=False)
        keys = keys[np.sort(chosen)]
    return keys


@dataclass(frozen=True)
class MuResult:
    a: int
    mu: int
    found: bool


def find_mu(a: int, ell: int, m: int, limit: int) -> MuResult:
    """Smallest positive x <= limit with ||a*x / 2^ell|| <= 1/(2m).

    The comparison min(v, 2^ell - v) * 2m <= 2^ell is exact.  found=False
    (mu = limit) when no x qualifies.
    """
    if a % 2 == 0:
        raise ConfigError("multiplier must be odd")
    if m & (m - 1):
        raise ConfigError("m must be a power of two")
    if limit > (1 << ell):
        raise ConfigError("scan limit exceeds the state space")
    xs = np.arange(1, limit + 1, dtype=np.uint64)
    v = np.uint64(a) * xs
    if ell < 64:
        v &= np.uint64((1 << ell) - 1)
    dist = np.minimum(v, np.uint64(0) - v if ell == 64
                      else np.uint64(1 << ell) - v)
    # min(v, 2^ell - v) <= 2^ell/(2m), exact since m divides 2^ell
    hits = np.flatnonzero(dist <= np.uint64((1 << ell) // (2 * m)))
    if hits.size == 0:
        return MuResult(a=a, mu=limit, found=False)
    return MuResult(a=a, mu=int(hits[0]) + 1, found=True)


def circle_hits(x: int, ell: int) -> np.ndarray:
    """Grid distances |a*x mod 2^ell| to 0 over all odd multipliers a."""
    modulus = 1 << ell
    a = np.arange(1, modulus, 2, dtype=np.uint64)
    v = (a * np.uint64(x)) & np.uint64(modulus - 1)
    return np.minimum(v, np.uint64(modulus) - v)


def hit_prob_enumerate(x: int, ell: int, eps: Fraction) -> Fraction:
    """Exact Pr over odd ell-bit a of ||a*x / 2^ell|| <= eps, by enumeration."""
    if x % 2 == 0:
        raise ConfigError("x must be odd")
    if ell > 20:
        raise ConfigError("enumeration capped at ell <= 20")
    eps = Fraction(eps)
    dist = circle_hits(x, ell)
    # dist/2^ell <= eps  <=>  dist <= floor(eps * 2^ell) since dist is integral
    threshold = eps.numerator * (1 << ell) // eps.denominator
    count = int((dist <= np.uint64(min(threshold, 1 << ell))).sum())
    return Fraction(count, 1 << (ell - 1))


def hit_counts_by_distance(x: int, ell: int) -> np.ndarray:
    """Histogram over grid distance d of odd multipliers with distance d."""
    dist = circle_hits(x, ell)
    return np.bincount(dist.astype(np.int64), minlength=(1 << (ell - 1)) + 1)


def _random_odd(ell: int, rng: np.random.Generator, size=None):
    return rng.integers(0, 1 << (ell - 1), size=size, dtype=np.uint64) * np.uint64(2) \
        + np.uint64(1)


@dataclass
class MsLpResult:
    """Per-multiplier linear-probing costs for the structured key set."""

    n: int
    m: int
    probes_per_key: np.ndarray       # attack, total probes / n
    excess_per_key: np.ndarray       # attack, total displacement / n
    control_probes: np.ndarray       # same key count, truly random slots
    control_excess: np.ndarray
    multipliers: np.ndarray


def attack_cost_for_multiplier(a: int, keys: np.ndarray, ell: int, ell_out: int,
                               b: int = 0) -> tuple[float, float]:
    """(probes/key, displacement/key) of inserting `keys` via multiply-shift."""
    from .probing import bulk_displacement

    f = MultShiftFn(ell=ell, ell_out=ell_out, a=int(a), b=int(b))
    slots = ms_eval_many(f, keys)
    counts = np.bincount(slots.astype(np.int64), minlength=1 << ell_out)
    n = keys.size
    disp = bulk_displacement(counts)
    return (disp + n) / n, disp / n


def _counts_rows(slots: np.ndarray, m: int) -> np.ndarray:
    """Per-row bincount of a (batch, n) slot matrix."""
    batch = slots.shape[0]
    offset = (np.arange(batch, dtype=np.int64)[:, None] * m + slots).ravel()
    return np.bincount(offset, minlength=batch * m).reshape(batch, m)


def ms_lp_experiment(spec: BadInputSpec, ell: int, ell_out: int, trials: int,
                     rng: np.random.Generator, with_b: bool = False,
                     allow_even_a: bool = False, batch: int = 8) -> MsLpResult:
    """Insertion cost of the structured keys under random multipliers,
    with a paired truly-random control on the same key count."""
    from .probing import bulk_displacement_rows

    if ell_out >= ell:
        raise ConfigError(
            "ell_out must be below ell: with ell_out = ell the map is a "
            "permutation for odd multipliers and probing is perfect")
    keys = gen_bad_input(spec)
    n = keys.size
    m = 1 << ell_out
    if n / m > 2 / 3:
        raise ConfigError("load n/m must stay at or below 2/3")
    if spec.mode == "eps-fraction" and spec.eps < 2.0 ** (ell_out - ell):
        raise ConfigError("eps-fraction mode needs eps >= 2^(ell_out - ell)")

    batch = max(1, min(batch, (1 << 23) // m))
    excess = np.empty(trials)
    cexcess = np.empty(trials)
    multipliers = np.empty(trials, dtype=np.uint64)
    done = 0
    shift = np.uint64(ell - ell_out)
    mask = np.uint64((1 << ell) - 1) if ell < 64 else np.uint64(0xFFFFFFFFFFFFFFFF)
    while done < trials:
        count = min(batch, trials - done)
        if allow_even_a:
            a = rng.integers(0, 1 << ell, size=(count, 1), dtype=np.uint64)
        else:
            a = _random_odd(ell, rng, size=(count, 1))
        b = rng.integers(0, 1 << ell, size=(count, 1), dtype=np.uint64) \
            if with_b else np.zeros((count, 1), dtype=np.uint64)
        slots = (((a * keys[None, :] + b) & mask) >> shift).astype(np.int64)
        excess[done:done + count] = bulk_displacement_rows(_counts_rows(slots, m)) / n
        ctrl = rng.integers(0, m, size=(count, n))
        cexcess[done:done + count] = bulk_displacement_rows(_counts_rows(ctrl, m)) / n
        multipliers[done:done + count] = a[:, 0]
        done += count
    return MsLpResult(n=n, m=m, probes_per_key=excess + 1.0, excess_per_key=excess,
                      control_probes=cexcess + 1.0, control_excess=cexcess,
                      multipliers=multipliers)


def mu_stratum_multiplier(x: int, ell: int, m: int, rng: np.random.Generator) -> int:
    """Uniform odd multiplier conditioned on x hitting the 1/(2m) band.

    For x = 2^j * x' the hit condition fixes a*x' on the 2^(ell-j) wheel
    to an odd value in the band, so a is the band value times the inverse
    of x', with the top j bits free.
    """
    j = (x & -x).bit_length() - 1
    xp = x >> j
    wheel = ell - j
    band = ((1 << ell) // (2 * m)) >> j
    if band < 2:
        raise ConfigError(f"stratum x={x} too even for the band at this m")
    inv = pow(xp, -1, 1 << wheel)
    w = int(rng.integers(0, band // 2)) * 2 + 1
    if rng.integers(0, 2):
        w = (1 << wheel) - w
    low = (w * inv) & ((1 << wheel) - 1)
    hi = int(rng.integers(0, 1 << j)) if j else 0
    return (hi << wheel) | low


def ms_lp_true_mean(spec: BadInputSpec, ell: int, ell_out: int,
                    rng: np.random.Generator, strata_limit: int = 512,
                    samples_per_stratum: int = 16, tail_trials: int = 3000,
                    n_boot: int = 400):
    """Unbiased stratified estimate of the expected per-key excess cost.

    Uniform multiplier sampling cannot see the expectation at realistic
    trial counts: multipliers with mu_a <= ~50 carry about half of the
    mean but have probability ~mu/m each.  This estimator enumerates the
    mu_a = x strata up to `strata_limit` (each has exact probability 1/m)
    with multipliers constructed by inverting x, and measures the
    remaining mu > limit region by plain sampling.  Returns
    (estimate, (ci_lo, ci_hi)) with a 99% stratified bootstrap CI.
    """
    from .probing import bulk_displacement
    from .stats import Z99

    keys = gen_bad_input(spec)
    n = keys.size
    m = 1 << ell_out
    if ell_out >= ell:
        raise ConfigError("ell_out must be below ell")

    def excess(a):
        slots = ms_eval_many(MultShiftFn(ell=ell, ell_out=ell_out, a=int(a)), keys)
        return bulk_displacement(np.bincount(slots.astype(np.int64), minlength=m)) / n

    strata = np.zeros((strata_limit, samples_per_stratum))
    for x in range(1, strata_limit + 1):
        for s in range(samples_per_stratum):
            a = mu_stratum_multiplier(x, ell, m, rng)
            mu = find_mu(a, ell, m, x)
            if mu.found and mu.mu == x:
                strata[x - 1, s] = excess(a)
    tail = np.zeros(tail_trials)
    for i in range(tail_trials):
        a = int(_random_odd(ell, rng))
        mu = find_mu(a, ell, m, strata_limit)
        if not mu.found:
            tail[i] = excess(a)

    estimate = strata.mean(axis=1).sum() / m + tail.mean()
    boots = np.empty(n_boot)
    for i in range(n_boot):
        idx = rng.integers(0, samples_per_stratum,
                           size=(strata_limit, samples_per_stratum))
        bs = np.take_along_axis(strata, idx, axis=1).mean(axis=1).sum() / m
        bt = tail[rng.integers(0, tail_trials, size=tail_trials)].mean()
        boots[i] = bs + bt
    lo, hi = np.quantile(boots, [0.005, 0.995])
    return float(estimate), (float(lo), float(hi))


def ms_minwise_events(n: int, ell: int, trials: int, rng: np.random.Generator,
                      fixed_a: int | None = None,
                      chunk: int = 512) -> tuple[np.ndarray, np.ndarray]:
    """Per-trial indicators of h(q) < min h([n]) for the (ax+b) mod 2^ell
    scheme with odd a, b, q (q outside [n]), plus a truly random control."""
    if n & (n - 1):
        raise ConfigError("n must be a power of two")
    if ell <= math.ceil(math.log2(n)):
        raise ConfigError("need ell > ceil(log2 n)")
    keys = np.arange(n, dtype=np.uint64)
    mask = np.uint64((1 << ell) - 1)
    attack = np.empty(trials, dtype=bool)
    control = np.empty(trials, dtype=bool)
    done = 0
    while done < trials:
        count = min(chunk, trials - done)
        if fixed_a is None:
            a = _random_odd(ell, rng, size=(count, 1))
        else:
            a = np.full((count, 1), fixed_a, dtype=np.uint64)
        b = _random_odd(ell, rng, size=(count, 1))
        q = _random_odd(ell, rng, size=count)
        while (q < n).any():
            redo = q < n
            q[redo] = _random_odd(ell, rng, size=int(redo.sum()))
        hk = (a * keys[None, :] + b) & mask
        hq = (a[:, 0] * q + b[:, 0]) & mask
        attack[done:done + count] = hq < hk.min(axis=1)
        rv = rng.integers(0, 1 << 62, size=(count, n), dtype=np.uint64)
        rq = rng.integers(0, 1 << 62, size=count, dtype=np.uint64)
        control[done:done + count] = rq < rv.min(axis=1)
        done += count
    return attack, control


def ms_minwise_experiment(n: int, ell: int, trials: int,
                          rng: np.random.Generator) -> dict:
    """Estimated Pr[q min] versus fair 1/(n+1), attack and control."""
    from .stats import wilson_interval

    attack, control = ms_minwise_events(n, ell, trials, rng)
    fair = 1.0 / (n + 1)
    out = {"n": n, "ell": ell, "trials": trials, "fair": fair}
    for name, arr in (("attack", attack), ("control", control)):
        hits = int(arr.sum())
        lo, hi = wilson_interval(hits, trials)
        out[name] = {"hits": hits, "prob": hits / trials,
                     "ratio": hits / trials / fair,
                     "ratio_ci": (lo / fair, hi / fair)}
    return out
