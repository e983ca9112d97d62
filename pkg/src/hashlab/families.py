"""Baseline hash families: polynomials mod a Mersenne prime, multiply-shift,
and a seeded random oracle.

Polynomial families of degree k-1 give (statistically close to) k-independent
hashing; multiply-shift is the fast 2-universal scheme; the random oracle
stands in for a truly random function on the keys actually touched.
"""

from __future__ import annotations

import hashlib
from dataclasses import dataclass, field
from fractions import Fraction

import numpy as np

from .errors import ConfigError

MERSENNE_P = (1 << 61) - 1

_MASK31 = np.uint64((1 << 31) - 1)
_MASK30 = np.uint64((1 << 30) - 1)
_MASK61 = np.uint64(MERSENNE_P)
_P61 = np.uint64(MERSENNE_P)


def is_power_of_two(v: int) -> bool:
    return v >= 1 and (v & (v - 1)) == 0


@dataclass(frozen=True)
class PolyFamily:
    """A sampled degree-(k-1) polynomial hash mod p, then mod t.

    `coeffs` is in ascending degree order: coeffs[i] multiplies x**i.
    """

    k: int
    p: int
    t: int
    coeffs: tuple[int, ...]

    def __post_init__(self):
        if self.k < 1:
            raise ConfigError("k must be >= 1")
        if len(self.coeffs) != self.k:
            raise ConfigError("need exactly k coefficients")
        if not all(0 <= c < self.p for c in self.coeffs):
            raise ConfigError("coefficients must lie in [0, p)")
        if not (1 <= self.t <= self.p):
            raise ConfigError("table size must satisfy 1 <= t <= p")

    def __call__(self, x: int) -> int:
        return poly_eval(self, x)


def poly_sample(k: int, t: int, rng: np.random.Generator, p: int = MERSENNE_P) -> PolyFamily:
    """Draw k coefficients independently and uniformly from [0, p)."""
    if k < 1:
        raise ConfigError("k must be >= 1")
    if not is_power_of_two(t):
        raise ConfigError("table size must be a power of two")
    if t > p:
        raise ConfigError("table size exceeds modulus")
    coeffs = tuple(int(c) for c in rng.integers(0, p, size=k, dtype=np.uint64))
    return PolyFamily(k=k, p=p, t=t, coeffs=coeffs)


def poly_eval(f: PolyFamily, x: int) -> int:
    """Horner evaluation mod p, then mod t."""
    acc = 0
    for c in reversed(f.coeffs):
        acc = (acc * x + c) % f.p
    return acc % f.t


def _mulmod61(a: np.ndarray, x: np.ndarray) -> np.ndarray:
    """Vectorized (a * x) mod (2^61 - 1) for uint64 inputs below the modulus.

    Splits operands into 31/30-bit limbs so every intermediate fits in
    uint64, using 2^61 = 1 (mod p) for the reduction.
    """
    a1 = a >> np.uint64(31)
    a0 = a & _MASK31
    x1 = x >> np.uint64(31)
    x0 = x & _MASK31
    hi = a1 * x1                      # < 2^60, weight 2^62 = 2 mod p
    mid = a1 * x0 + a0 * x1           # < 2^62, weight 2^31
    lo = a0 * x0                      # < 2^62
    m1 = mid >> np.uint64(30)         # weight 2^61 = 1 mod p
    m0 = mid & _MASK30
    v = (hi << np.uint64(1)) + m1 + (m0 << np.uint64(31)) + lo
    v = (v & _MASK61) + (v >> np.uint64(61))
    v = (v & _MASK61) + (v >> np.uint64(61))
    return np.where(v >= _P61, v - _P61, v)


def poly_eval_many(f: PolyFamily, xs: np.ndarray) -> np.ndarray:
    """Vectorized Horner evaluation; exact match with poly_eval.

    Only valid for the default Mersenne modulus.
    """
    if f.p != MERSENNE_P:
        return np.array([poly_eval(f, int(x)) for x in xs], dtype=np.uint64)
    xs = np.asarray(xs, dtype=np.uint64)
    acc = np.full(xs.shape, np.uint64(f.coeffs[-1]), dtype=np.uint64)
    for c in reversed(f.coeffs[:-1]):
        acc = _mulmod61(acc, xs)
        acc += np.uint64(c)
        acc = np.where(acc >= _P61, acc - _P61, acc)
    return acc & np.uint64(f.t - 1) if is_power_of_two(f.t) else acc % np.uint64(f.t)


@dataclass(frozen=True)
class MultShiftFn:
    """Multiply-shift hash: ((a*x + b) mod 2^ell) >> (ell - ell_out).

    b = 0 gives the basic scheme; the plain universal variant wants odd a.
    """

    ell: int
    ell_out: int
    a: int
    b: int = 0

    def __post_init__(self):
        if not (1 <= self.ell <= 64):
            raise ConfigError("state width must be in [1, 64]")
        if not (0 <= self.ell_out <= self.ell):
            raise ConfigError("output width must not exceed state width")
        if not (0 <= self.a < (1 << self.ell)) or not (0 <= self.b < (1 << self.ell)):
            raise ConfigError("a and b must be ell-bit values")

    def __call__(self, x: int) -> int:
        return ms_eval(self, x)


def ms_eval(f: MultShiftFn, x: int) -> int:
    """Scalar multiply-shift evaluation; the product wraps mod 2^ell."""
    return ((f.a * x + f.b) & ((1 << f.ell) - 1)) >> (f.ell - f.ell_out)


def ms_eval_many(f: MultShiftFn, xs: np.ndarray) -> np.ndarray:
    """Vectorized multiply-shift over uint64 keys."""
    xs = np.asarray(xs, dtype=np.uint64)
    v = np.uint64(f.a) * xs + np.uint64(f.b)
    if f.ell < 64:
        v &= np.uint64((1 << f.ell) - 1)
    return v >> np.uint64(f.ell - f.ell_out)


def ms_frac(f: MultShiftFn, x: int) -> Fraction:
    """The scheme viewed as a map to the unit interval: (a*x mod 2^ell)/2^ell."""
    if f.b != 0:
        raise ConfigError("unit-interval form requires b = 0")
    return Fraction((f.a * x) & ((1 << f.ell) - 1), 1 << f.ell)


def circ_norm(v) -> Fraction:
    """Distance to 0 on the circular unit interval: min(v mod 1, -v mod 1)."""
    v = Fraction(v) % 1
    return min(v, 1 - v)


@dataclass
class RandomOracle:
    """Truly random function onto [t], lazily memoized.

    Slots are derived by hashing (seed, key), so evaluation order does not
    matter and identical seeds reproduce identical functions.  Contract for
    concurrent use: one oracle per trial.
    """

    t: int
    seed: int
    memo: dict = field(default_factory=dict, repr=False)

    def __call__(self, key: int) -> int:
        slot = self.memo.get(key)
        if slot is None:
            h = hashlib.blake2b(
                self.seed.to_bytes(8, "little", signed=False)
                + key.to_bytes(16, "little", signed=True),
                digest_size=16,
            ).digest()
            slot = int.from_bytes(h, "little") % self.t
            self.memo[key] = slot
        return slot
