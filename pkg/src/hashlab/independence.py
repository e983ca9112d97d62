"""Exact and statistical k-independence verification.

Exact route: node-split mixes have closed outcome distributions, so
moments and all-left probabilities are computed in rational arithmetic
and compared with the truly random references.  Statistical route:
chi-square tests of empirical membership patterns, with Bonferroni-style
significance shared across simultaneous tests.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass
from fractions import Fraction

import numpy as np
from scipy import stats as sps

from . import strategies as st
from .errors import BudgetExceededError

EXACT_BUDGET = 64
DEFAULT_SIGNIFICANCE = 0.001


def truly_random_F2(two_m: int) -> Fraction:
    return Fraction(two_m, 4)


def truly_random_F4(two_m: int) -> Fraction:
    """Central 4th moment of Binomial(2m, 1/2): (3*(2m)^2 - 2*(2m)) / 16."""
    return Fraction(3 * two_m * two_m - 2 * two_m, 16)


def f4_shared_term(two_m: int) -> Fraction:
    """The p4-free part of F4 for any distribution with truly random p2, p3.

    From F4 = (2m)^(falling 4) * p4 + f4(m, p2, p3), evaluated on the
    truly random split where p4 = 1/16.
    """
    return truly_random_F4(two_m) - st.falling(Fraction(two_m), 4) / 16


def predict_p4_from_F4(f4_value: Fraction, two_m: int) -> Fraction:
    """Recover p4 from a 4th moment, valid for 3-independent symmetric splits."""
    return (f4_value - f4_shared_term(two_m)) / st.falling(Fraction(two_m), 4)


@dataclass(frozen=True)
class MomentEntry:
    two_m: int
    F2: Fraction
    F4: Fraction
    p2: Fraction
    p3: Fraction | None     # None when the node holds fewer keys than the tuple
    p4: Fraction | None

    @property
    def deviations(self) -> dict:
        out = {
            "F2": self.F2 - truly_random_F2(self.two_m),
            "F4": self.F4 - truly_random_F4(self.two_m),
            "p2": self.p2 - Fraction(1, 4),
        }
        if self.p3 is not None:
            out["p3"] = self.p3 - Fraction(1, 8)
        if self.p4 is not None:
            out["p4"] = self.p4 - Fraction(1, 16)
        return out


def exact_moments(mix, two_m: int) -> MomentEntry:
    """Exact F2, F4, p2, p3, p4 of a strategy or mix at the given load."""
    if two_m > EXACT_BUDGET:
        raise BudgetExceededError(f"exact enumeration capped at 2m <= {EXACT_BUDGET}")
    return MomentEntry(
        two_m=two_m,
        F2=st.moment(mix, two_m, 2),
        F4=st.moment(mix, two_m, 4),
        p2=st.pk_exact(mix, two_m, 2),
        p3=st.pk_exact(mix, two_m, 3) if two_m >= 3 else None,
        p4=st.pk_exact(mix, two_m, 4) if two_m >= 4 else None,
    )


@dataclass
class IndepTestResult:
    k: int
    trials: int
    statistic: float
    dof: int
    p_value: float
    passed: bool
    estimate: float | None = None
    warning: str | None = None


def chi_square_uniform(counts: np.ndarray, significance: float) -> tuple[float, int, float, bool]:
    counts = np.asarray(counts, dtype=float)
    expected = counts.sum() / counts.size
    statistic = float(((counts - expected) ** 2 / expected).sum())
    dof = counts.size - 1
    p_value = float(sps.chi2.sf(statistic, dof))
    return statistic, dof, p_value, p_value >= significance


def pattern_counts(bits: np.ndarray) -> np.ndarray:
    """Histogram of the 2^k left/right membership patterns."""
    bits = np.asarray(bits, dtype=np.int64)
    k = bits.shape[1]
    codes = bits @ (1 << np.arange(k, dtype=np.int64))
    return np.bincount(codes, minlength=1 << k)


def empirical_pk(sample_bits, k: int, trials: int, rng: np.random.Generator,
                 significance: float = DEFAULT_SIGNIFICANCE,
                 target_deviation: float | None = None) -> IndepTestResult:
    """Pattern chi-square for k fixed keys plus the all-in-left estimate.

    `sample_bits(rng, count)` must return a (count, k) 0/1 array giving
    the left-child (or designated-cell) membership of the k keys.
    """
    warning = None
    if target_deviation is not None:
        needed = int(100 * (1 << k) / target_deviation ** 2)
        if trials < needed:
            warning = (f"under-powered: {trials} trials < {needed} needed for "
                       f"deviation {target_deviation}")
            warnings.warn(warning)
    bits = np.asarray(sample_bits(rng, trials))
    counts = pattern_counts(bits)
    statistic, dof, p_value, passed = chi_square_uniform(counts, significance)
    return IndepTestResult(k=k, trials=trials, statistic=statistic, dof=dof,
                           p_value=p_value, passed=passed,
                           estimate=float(counts[-1] / trials), warning=warning)


def mix_membership_sampler(mix, two_m: int, k: int):
    """Membership sampler for k fixed keys under a node-split mix.

    Draws the left-child size from the mix's outcome distribution, then
    the keys' memberships by sequential conditioning, which realises the
    uniform-subset law exactly.
    """
    dist = st.outcome_dist(mix, two_m)
    xs = np.array(sorted(dist), dtype=np.int64)
    ps = np.array([float(dist[x]) for x in xs])
    ps = ps / ps.sum()

    def sample(rng: np.random.Generator, count: int) -> np.ndarray:
        left = rng.choice(xs, size=count, p=ps).astype(np.float64)
        remaining = np.full(count, float(two_m))
        bits = np.empty((count, k), dtype=np.int64)
        for j in range(k):
            take = rng.random(count) < left / remaining
            bits[:, j] = take
            left -= take
            remaining -= 1.0
        return bits

    return sample


def full_slot_uniformity(sample_slots, t: int, trials: int, rng: np.random.Generator,
                         significance: float = DEFAULT_SIGNIFICANCE,
                         max_bins: int = 1024) -> IndepTestResult:
    """Chi-square of a single key's slot histogram against uniform over [t].

    `sample_slots(rng, count)` returns `count` slots.  Large tables are
    folded into max_bins equal bins.
    """
    slots = np.asarray(sample_slots(rng, trials), dtype=np.int64)
    bins = min(t, max_bins)
    width = t // bins
    counts = np.bincount(slots // width, minlength=bins)
    statistic, dof, p_value, passed = chi_square_uniform(counts, significance)
    return IndepTestResult(k=1, trials=trials, statistic=statistic, dof=dof,
                           p_value=p_value, passed=passed)
