"""Acceptance suite: one test per criterion, one printed line per criterion.

Exact identities run in rational arithmetic; statistical criteria run at
pinned seeds with trial counts sized so the asserted effects sit several
sigma from their thresholds.  Criterion 5's strict-growth clause is
implemented exactly as stated and is expected to fail: the 4-independent
tree provably clusters (its conditional cost signature is asserted here),
but at desk scale the unconditional mean query cost is flat; see
notes/decisions.md in the reviewer materials for the measured analysis.
"""

import math
from fractions import Fraction

import numpy as np
import pytest

from hashlab import (calibration, independence as ind, minwise, msattack,
                     probing, strategies as st, trees, twoindep)
from hashlab.errors import BalanceInfeasibleError
from hashlab.experiments import ExperimentConfig, run
from hashlab.growth import CONSTANT, LOGARITHMIC, SQRT, growth_classify
from hashlab.rng import stream
from hashlab.stats import (bootstrap_log_slope, ratio_per_factor, welch_test,
                           weighted_slope, wilson_interval)


def report(criterion: str, passed: bool, detail: str):
    print(f"\nACCEPTANCE {criterion}: {'PASS' if passed else 'FAIL'} -- {detail}")
    assert passed, f"{criterion}: {detail}"


# ------------------------------------------------------------------ C1

def test_c1_exact_balance_identities():
    for two_m in range(2, 65):
        assert st.moment(st.t1_mix(two_m), two_m, 2) == Fraction(two_m, 4)
    feasible = 0
    for two_m in range(4, 65):
        try:
            mix = st.tstar_mix(two_m)
        except BalanceInfeasibleError:
            continue
        feasible += 1
        assert st.p4_exact(mix, two_m) == Fraction(1, 16)
    for n in (64, 1024, 4096):
        cfg = twoindep.solve_2indep_mix(n)
        assert twoindep.pair_collision_prob(cfg) == Fraction(1, cfg.sqrt_n)
        assert twoindep.query_collision_prob(cfg) == Fraction(1, cfg.sqrt_n)
    report("C1 exact-balance", True,
           f"F2=m/2 for 2m in 2..64; p4=1/16 at {feasible} feasible loads; "
           "2-indep collision prob = 1/sqrt(n) at n=64,1024,4096")


# ------------------------------------------------------------------ C2

def test_c2_moment_oracle():
    rand = st.SplitStrategy(st.RANDOM)
    for two_m in range(2, 33):
        enumerated = ind.exact_moments(rand, two_m).F4
        # corrected closed form; the printed (24m^2-10m)/2^4 double-counts
        # ordered pairs and disagrees with enumeration at every load
        assert enumerated == ind.truly_random_F4(two_m)
        m = Fraction(two_m, 2)
        assert enumerated != (24 * m * m - 10 * m) / 16
    for two_m in range(4, 33):
        mix = st.t2_mix(two_m)
        predicted = ind.predict_p4_from_F4(st.moment(mix, two_m, 4), two_m)
        assert predicted == st.p4_exact(mix, two_m)
    report("C2 moment-oracle", True,
           "enumerated F4 = (3(2m)^2-2(2m))/2^4 for 2m<=32 (paper's printed "
           "form rejected by enumeration); f4-chain reproduces p4(T2) exactly")


# ------------------------------------------------------------------ C3

def test_c3_two_indep_sqrt_query():
    ladder = (1 << 11, 1 << 13, 1 << 15, 1 << 17)
    cfg = ExperimentConfig(experiment="lp-2indep", ladder=ladder, trials=8000,
                           seed=11, plot=False)
    rep, _ = run(cfg)
    g = rep.growth
    ratio = g["ratio_per_quadrupling"]
    ok = g["class_label"] == SQRT and 1.6 <= ratio <= 2.4
    report("C3 sqrt-query-2indep", ok,
           f"means={[round(m, 2) for m in g['means']]} class={g['class']} "
           f"quad-ratio={ratio:.3f} in [1.6, 2.4]")


# ------------------------------------------------------------------ C4

def test_c4_three_indep_nlogn_construction():
    sizes, means, values = [], [], []
    for lg in range(10, 18):
        t = 1 << lg
        cfg = ExperimentConfig(experiment="lp-3indep", ladder=(t,),
                               trials=max(4000, (2 * t) // 3), seed=23, plot=False)
        rep, _ = run(cfg)
        sizes.append(rep.per_size[0]["n"])
        means.append(rep.per_size[0]["metrics"]["insert_probes_per_key"]["mean"])
        values.append(None)
    slope, lo, hi = _slope_from_summary(sizes, means)
    res = growth_classify(sizes, means, stream(41))
    # control: 5-independent polynomial at the same ladder and load
    ctrl = ExperimentConfig(experiment="lp-poly-k", ladder=tuple(1 << lg for lg in range(10, 18)),
                            trials=800, seed=23, k=5, load=2 / 3, plot=False)
    ctrl_rep, _ = run(ctrl)
    ctrl_means = [p["metrics"]["insert_probes_per_key"]["mean"]
                  for p in ctrl_rep.per_size]
    ctrl_res = growth_classify([p["n"] for p in ctrl_rep.per_size], ctrl_means,
                               stream(42))
    ok = (lo > 0 and res.label == LOGARITHMIC and not res.inconclusive
          and ctrl_res.label == CONSTANT)
    report("C4 nlogn-construction-3indep", ok,
           f"cost/n={[round(m, 3) for m in means]} per-doubling slope="
           f"{slope:.4f} ci99=({lo:.4f},{hi:.4f}) class={res} "
           f"control={[round(m, 3) for m in ctrl_means]} -> {ctrl_res}")


def _slope_from_summary(sizes, means):
    # per-doubling slope with a jackknife-style CI over ladder points
    x = np.log2(np.asarray(sizes, float))
    y = np.asarray(means, float)
    slope = float(np.polyfit(x, y, 1)[0])
    jack = []
    for i in range(len(x)):
        keep = np.arange(len(x)) != i
        jack.append(float(np.polyfit(x[keep], y[keep], 1)[0]))
    se = math.sqrt((len(jack) - 1) / len(jack)
                   * sum((j - np.mean(jack)) ** 2 for j in jack))
    return slope, slope - 2.576 * se, slope + 2.576 * se


# ------------------------------------------------------------------ C5

CACHE_DIR = ".hashlab-cache"
C5_TRIALS = 15000


def _four_indep_point(lg: int, seed: int = 17):
    t = 1 << lg
    sched, payload = calibration.ensure_schedule(t, cache_dir=CACHE_DIR,
                                                 samples=3000, seed=0)
    rng = stream(seed, lg)
    costs = np.empty(C5_TRIALS)
    for i in range(C5_TRIALS):
        s = trees.sample_4indep_counts(t, sched, rng)
        costs[i] = probing.bulk_search_cost(s.slot_counts, s.query_slot)
    return float(costs.mean()), payload


def test_c5_four_indep_calibration_residuals():
    ok = True
    details = []
    for lg in (12, 13, 14, 15, 16):
        _, payload = calibration.ensure_schedule(1 << lg, cache_dir=CACHE_DIR,
                                                 samples=3000, seed=0)
        for e in payload["entries"]:
            contains = e["g_ci"][0] <= 0.0 <= e["g_ci"][1]
            ok = ok and contains and e["converged"]
            details.append(f"t=2^{lg} L{e['level']}:{'ok' if contains else 'BAD'}")
    report("C5a calibration-residuals", ok, " ".join(details))


def test_c5_four_indep_conditional_mechanism():
    # the construction's clustering signature: conditioned on a collection
    # at the query node on level l that follows the query, the search cost
    # is a constant fraction of n/2^l
    t = 1 << 14
    sched, _ = calibration.ensure_schedule(t, cache_dir=CACHE_DIR,
                                           samples=3000, seed=0)
    n = trees.keys_for_4indep(t)
    rng = stream(19)
    loaded = {}
    for _ in range(30000):
        s = trees.sample_4indep_counts(t, sched, rng)
        lv = s.stop_level
        if lv is None or lv + 1 >= len(s.query_loads):
            continue
        if s.query_loads[lv + 1] == s.query_loads[lv]:
            loaded.setdefault(lv, []).append(
                probing.bulk_search_cost(s.slot_counts, s.query_slot))
    ok = True
    details = []
    for lv, costs in sorted(loaded.items()):
        if len(costs) < 20:
            continue
        ratio = np.mean(costs) / (n / 2 ** lv)
        ok = ok and ratio >= 0.5
        details.append(f"L{lv}: E[cost|collect]={np.mean(costs):.1f} "
                       f"= {ratio:.2f} * n/2^l")
    report("C5b conditional-clustering", ok and details, " ".join(details))


def test_c5_four_indep_query_growth():
    means = {}
    for lg in (12, 13, 14, 15, 16):
        means[lg], _ = _four_indep_point(lg)
    series = [means[lg] for lg in (12, 13, 14, 15, 16)]
    strict = means[12] < means[14] < means[16]
    res = growth_classify([1 << lg for lg in (12, 13, 14, 15, 16)], series,
                          stream(43))
    class_ok = (res.label == LOGARITHMIC and not res.inconclusive) or (
        res.inconclusive and CONSTANT not in res.candidates
        and set(res.candidates) <= {LOGARITHMIC, SQRT})
    ok = strict and class_ok
    report("C5c query-growth-4indep", ok,
           f"means(2^12..2^16)={[round(v, 3) for v in series]} "
           f"strict-increase(12,14,16)={strict} class={res}; the tree's "
           "collection gains cancel against emptied-branch losses at desk "
           "scale (see C5b for the conditional signature and the decisions "
           "ledger for the full analysis)")


# ------------------------------------------------------------------ C6

def test_c6_five_indep_constant_control():
    ladder = tuple(1 << lg for lg in range(10, 17))
    cfg = ExperimentConfig(experiment="lp-poly-k", ladder=ladder, trials=2000,
                           seed=29, k=5, load=1 / 3, plot=False)
    rep, _ = run(cfg)
    means = [p["metrics"]["query_cost"]["mean"] for p in rep.per_size]
    ratio = ratio_per_factor([p["n"] for p in rep.per_size], means, 2.0)
    ok = 0.8 <= ratio <= 1.2
    report("C6 five-indep-constant", ok,
           f"query-cost means={[round(m, 3) for m in means]} "
           f"per-doubling ratio={ratio:.3f} in [0.8, 1.2]")


# ------------------------------------------------------------------ C7

def test_c7_minwise_pmin_and_bias():
    details = []
    ok = True
    for k in (2, 4):
        cfg = minwise.MinwiseConfig(n=64 * k, k=k)
        est = minwise.estimate_conditional_pmin(cfg, 1_000_000, stream(31, k))
        exact = float(minwise.pmin_exact(k))
        hit = est.ci99[0] <= exact <= est.ci99[1]
        ok = ok and hit
        details.append(f"k={k}: pmin={est.estimate:.5f} "
                       f"ci=({est.ci99[0]:.5f},{est.ci99[1]:.5f}) "
                       f"exact={exact:.5f} {'ok' if hit else 'MISS'}")
    cfg = minwise.MinwiseConfig(n=128, k=2)
    trials = minwise.trials_for_bias_detection(cfg)
    est = minwise.estimate_min_prob(minwise.adversarial_min_events(cfg), 128,
                                    trials, stream(32))
    biased = est.ci99[0] > 1 / 129
    ok = ok and biased
    details.append(f"overall k=2: Pr[q min]={est.estimate:.6f} ci-low="
                   f"{est.ci99[0]:.6f} > fair {1 / 129:.6f} at {trials} trials")
    report("C7 minwise-pmin", ok, "; ".join(details))


# ------------------------------------------------------------------ C8

def test_c8_minwise_kindependence():
    ok = True
    details = []
    for k in (2, 4):
        cfg = minwise.MinwiseConfig(n=64 * k, k=k)
        for tuple_size in range(1, k + 1):
            res = minwise.kwise_check_minwise(cfg, tuple_size, 60_000,
                                              stream(33, k, tuple_size))
            ok = ok and res.passed
            details.append(f"k={k} j={tuple_size}: p={res.p_value:.3f}")
        res = minwise.kwise_check_minwise(cfg, k, 60_000, stream(34, k),
                                          include_query=True)
        ok = ok and res.passed
        details.append(f"k={k} j={k}+q: p={res.p_value:.3f}")
    oracle = minwise.exhaustive_small_case()
    exact_ok = (oracle["x_dist"] == {0: Fraction(1, 2), 2: Fraction(1, 2)}
                and oracle["pmin"] == minwise.pmin_exact(2))
    ok = ok and exact_ok
    details.append(f"exhaustive k=2,n=4 oracle exact={exact_ok}")
    report("C8 minwise-kwise", ok, "; ".join(details))


# ------------------------------------------------------------------ C9

def test_c9_multiply_shift_exact_lemmas():
    for ell in range(8, 13):
        half = 1 << (ell - 1)
        for x in range(1, 256, 2):
            cum = np.cumsum(msattack.hit_counts_by_distance(x, ell))
            ks = np.arange(1, (1 << (ell - 3)) + 1)
            # eps = k/2^(ell-1): exactly 2*eps of the odd multipliers hit
            assert (cum[2 * ks] == 2 * ks).all(), (ell, x)
            # any eps: never above 4*eps; checking grid distances suffices
            ds = np.arange(1, half + 1)
            assert (cum[ds] <= 2 * ds).all(), (ell, x)
    bad = _lemma_bad_violations(ell=12, n=256)
    report("C9 ms-exact-lemmas", bad == 0,
           "hit probability = 2*eps at even multiples and <= 4*eps always, "
           f"ell=8..12, odd x<2^8; minimality factor structure exhaustive "
           f"ell=12 n=2^8 violations={bad}")


def _lemma_bad_violations(ell: int, n: int) -> int:
    m = 1 << (ell - 2)
    modulus = 1 << ell
    spf = msattack.smallest_prime_factors(n)
    violations = 0
    for a in range(1, modulus, 2):
        xs = np.arange(1, n, dtype=np.uint64)
        v = (np.uint64(a) * xs) & np.uint64(modulus - 1)
        dist = np.minimum(v, np.uint64(modulus) - v).astype(np.int64)
        hits = np.flatnonzero(dist * (2 * m) <= modulus) + 1
        if hits.size == 0:
            continue
        mu = int(hits[0])
        for x in hits:
            x = int(x)
            factor_hit = any(
                min((a * (x // p)) % modulus, modulus - (a * (x // p)) % modulus)
                * (2 * p * m) <= modulus
                for p in msattack.prime_factors(x, spf))
            if (x != mu) != factor_hit:
                violations += 1
    return violations


# ------------------------------------------------------------------ C10

def test_c10_multiply_shift_lp_attack():
    ladder = tuple(1 << lg for lg in range(10, 19))
    # tail-aware per-size means: the mu_a <= strata_limit region carries
    # half the expectation at probability ~strata_limit/m and is sampled
    # by inverse construction; see the decisions ledger
    sizes, est_means, est_cis = [], [], []
    for n in ladder:
        ell_out = (2 * n).bit_length() - 1
        est, ci = msattack.ms_lp_true_mean(
            msattack.BadInputSpec(n=n), 64, ell_out, stream(37, n),
            strata_limit=min(512, n // 4), samples_per_stratum=24,
            tail_trials=6000 if n >= (1 << 17) else 3000)
        sizes.append(n)
        est_means.append(est)
        est_cis.append(ci)
    slope, lo, hi = _slope_from_summary(sizes, est_means)
    # plain uniform runs for the paired control and the b-shift comparison
    top = ladder[-1]
    plain = msattack.ms_lp_experiment(msattack.BadInputSpec(n=top), 64,
                                      (2 * top).bit_length() - 1, 600,
                                      stream(38))
    plain_b = msattack.ms_lp_experiment(msattack.BadInputSpec(n=top), 64,
                                        (2 * top).bit_length() - 1, 600,
                                        stream(39), with_b=True)
    control = float(plain.control_excess.mean())
    top_ratio = est_means[-1] / control
    _, p_b = welch_test(plain.excess_per_key, plain_b.excess_per_key)
    ok = lo > 0 and top_ratio >= 3.0 and p_b > 0.01
    report("C10 ms-lp-attack", ok,
           f"stratified mean excess={[round(v, 3) for v in est_means]} "
           f"slope={slope:.4f} ci99=({lo:.4f},{hi:.4f}); top mean "
           f"{est_means[-1]:.3f} = {top_ratio:.2f}x control {control:.3f} "
           f"(ci {est_cis[-1]}); b-shift Welch p={p_b:.3f}")


# ------------------------------------------------------------------ C11

def test_c11_multiply_shift_minwise():
    ns = [1 << lg for lg in range(6, 13)]
    ratios, sigmas, controls = [], [], []
    trials = 150_000
    for n in ns:
        ell = min(n.bit_length() - 1 + 8, 62)
        attack, control = msattack.ms_minwise_events(n, ell, trials,
                                                     stream(35, n))
        fair = 1 / (n + 1)
        p = attack.mean()
        ratios.append(p / fair)
        sigmas.append(math.sqrt(p * (1 - p) / trials) / fair)
        lo, hi = wilson_interval(int(control.sum()), trials)
        controls.append(lo <= fair <= hi)
    slope, se = weighted_slope(np.log2(ns), ratios, sigmas)
    ok = slope / se > 2.326 and all(controls)
    report("C11 ms-minwise", ok,
           f"ratios={[round(r, 2) for r in ratios]} trend z={slope / se:.1f} "
           f"> 2.33; control fair everywhere={all(controls)}")


# ------------------------------------------------------------------ C12

def test_c12_reproducibility():
    from hashlab.report import rows_to_csv

    cfg = dict(experiment="ms-lp", ladder=(512, 2048), trials=30, seed=7,
               plot=False)
    _, rows1 = run(ExperimentConfig(**cfg))
    _, rows2 = run(ExperimentConfig(**cfg))
    same = rows_to_csv(rows1) == rows_to_csv(rows2)
    _, rows3 = run(ExperimentConfig(**dict(cfg, seed=8)))
    differs = rows_to_csv(rows3) != rows_to_csv(rows1)
    report("C12 reproducibility", same and differs,
           f"identical seed gives byte-identical CSV body={same}; "
           f"different seed differs={differs}")
