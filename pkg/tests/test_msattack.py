import math
from fractions import Fraction

import numpy as np
import pytest

from hashlab import msattack
from hashlab.errors import ConfigError
from hashlab.families import MultShiftFn, circ_norm, ms_frac
from hashlab.rng import stream
from hashlab.stats import welch_test, wilson_interval


def test_gen_bad_input_examples():
    assert msattack.gen_bad_input(msattack.BadInputSpec(n=4)).tolist() == [0, 1, 2, 3]
    spec = msattack.BadInputSpec(n=3, alpha=2, beta=5, mode="arithmetic")
    assert msattack.gen_bad_input(spec).tolist() == [5, 7, 9]


def test_gen_bad_input_eps_fraction():
    spec = msattack.BadInputSpec(n=8, eps=0.5, mode="eps-fraction", seed=13)
    keys = msattack.gen_bad_input(spec)
    assert keys.size == 4
    assert set(keys.tolist()) <= set(range(8))
    again = msattack.gen_bad_input(spec)
    assert (keys == again).all()


def test_gen_bad_input_rejects_bad_eps():
    with pytest.raises(ConfigError):
        msattack.BadInputSpec(n=8, eps=0.0, mode="eps-fraction")
    with pytest.raises(ConfigError):
        msattack.BadInputSpec(n=8, eps=0.05, mode="eps-fraction")


def test_find_mu_examples():
    assert msattack.find_mu(1, 8, 16, 100).mu == 1
    assert msattack.find_mu(255, 8, 16, 100).mu == 1
    res = msattack.find_mu(129, 8, 16, 100)
    assert res.mu == 2 and res.found


def test_find_mu_against_fraction_oracle():
    rng = stream(1)
    ell, m = 10, 64
    for _ in range(40):
        a = int(rng.integers(0, 1 << (ell - 1))) * 2 + 1
        f = MultShiftFn(ell=ell, ell_out=6, a=a)
        oracle = None
        for x in range(1, 200):
            if circ_norm(ms_frac(f, x)) <= Fraction(1, 2 * m):
                oracle = x
                break
        res = msattack.find_mu(a, ell, m, 199)
        assert res.found == (oracle is not None)
        if oracle is not None:
            assert res.mu == oracle


def test_find_mu_preconditions():
    with pytest.raises(ConfigError):
        msattack.find_mu(2, 8, 16, 10)
    with pytest.raises(ConfigError):
        msattack.find_mu(1, 8, 12, 10)


def test_hit_prob_even_multiples():
    # eps a multiple of 1/2^(ell-1) gives exactly 2*eps
    for x in (1, 7, 99, 255):
        assert msattack.hit_prob_enumerate(x, 8, Fraction(1, 16)) == Fraction(1, 8)
        assert msattack.hit_prob_enumerate(x, 8, Fraction(3, 128)) == Fraction(3, 64)
    assert msattack.hit_prob_enumerate(31, 8, Fraction(1, 256)) == Fraction(1, 64)
    assert msattack.hit_prob_enumerate(5, 8, Fraction(1, 2)) == 1


def test_hit_prob_never_exceeds_four_eps():
    ell = 10
    for x in (1, 3, 77, 509):
        counts = msattack.hit_counts_by_distance(x, ell)
        cum = np.cumsum(counts)
        for d in range(1, 1 << (ell - 1)):
            prob = Fraction(int(cum[d]), 1 << (ell - 1))
            assert prob <= 4 * Fraction(d, 1 << ell)


def test_hit_prob_rejects_even_x():
    with pytest.raises(ConfigError):
        msattack.hit_prob_enumerate(4, 8, Fraction(1, 16))


def test_ms_lp_rejects_permutation_case():
    spec = msattack.BadInputSpec(n=128)
    with pytest.raises(ConfigError, match="permutation"):
        msattack.ms_lp_experiment(spec, 10, 10, 5, stream(2))


def test_ms_lp_rejects_overload():
    spec = msattack.BadInputSpec(n=1024)
    with pytest.raises(ConfigError, match="load"):
        msattack.ms_lp_experiment(spec, 64, 10, 5, stream(2))


def test_ms_lp_attack_beats_control():
    spec = msattack.BadInputSpec(n=4096)
    res = msattack.ms_lp_experiment(spec, 64, 13, 120, stream(3))
    assert res.excess_per_key.mean() > 1.5 * res.control_excess.mean()


def test_ms_lp_b_shift_indistinguishable():
    spec = msattack.BadInputSpec(n=2048)
    res0 = msattack.ms_lp_experiment(spec, 64, 12, 250, stream(4))
    res1 = msattack.ms_lp_experiment(spec, 64, 12, 250, stream(5), with_b=True)
    _, p = welch_test(res0.probes_per_key, res1.probes_per_key)
    assert p > 0.01


def test_ms_lp_odd_stride_statistically_equivalent():
    base = msattack.BadInputSpec(n=2048)
    shifted = msattack.BadInputSpec(n=2048, alpha=3, beta=7, mode="arithmetic")
    res0 = msattack.ms_lp_experiment(base, 64, 12, 250, stream(6))
    res1 = msattack.ms_lp_experiment(shifted, 64, 12, 250, stream(7))
    _, p = welch_test(res0.probes_per_key, res1.probes_per_key)
    assert p > 0.01


def test_ms_minwise_control_is_fair():
    out = msattack.ms_minwise_experiment(256, 20, 30_000, stream(8))
    lo, hi = out["control"]["ratio_ci"]
    assert lo <= 1.0 <= hi
    assert out["attack"]["ratio"] > 1.0


def test_ms_minwise_identity_multiplier_blows_up():
    # a = 1: the query wins whenever it lands below b, so the win
    # probability is about 1/2 and the ratio about (n+1)/2
    n, ell, trials = 256, 20, 4000
    attack, _ = msattack.ms_minwise_events(n, ell, trials, stream(9), fixed_a=1)
    hits = int(attack.sum())
    lo, _ = wilson_interval(hits, trials)
    assert lo * (n + 1) >= n / 8


def test_ms_minwise_requires_wide_state():
    with pytest.raises(ConfigError):
        msattack.ms_minwise_events(256, 8, 10, stream(10))
    with pytest.raises(ConfigError):
        msattack.ms_minwise_events(255, 20, 10, stream(10))


def test_smallest_prime_factors():
    spf = msattack.smallest_prime_factors(30)
    assert spf[6] == 2 and spf[15] == 3 and spf[29] == 29
    assert msattack.prime_factors(12, spf) == [2, 3]
    assert msattack.prime_factors(29, spf) == [29]
