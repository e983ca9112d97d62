import math
from fractions import Fraction

import numpy as np
import pytest

from hashlab import calibration, probing, strategies as st, trees
from hashlab.errors import CalibrationError, ConfigError
from hashlab.rng import stream


def test_level_boundaries():
    assert trees.tstar_top_levels(4096) == 8
    assert trees.window_bottom_level(4096) == 10
    assert trees.tstar_top_levels(1 << 16) == 11
    assert trees.window_bottom_level(1 << 16) == 13
    assert trees.keys_for_3indep(1024) == 683
    assert trees.keys_for_4indep(1024) == 682


def test_3indep_counts_conserves_keys():
    rng = stream(1)
    for t in (64, 1024):
        counts = trees.sample_3indep_counts(t, rng)
        assert counts.size == t
        assert counts.sum() == trees.keys_for_3indep(t)


def test_single_key_goes_to_uniform_child():
    rng = stream(2)
    lefts = trees._split_3indep_level(np.ones(20_000, dtype=np.int64), rng)
    assert set(np.unique(lefts)) == {0, 1}
    assert abs(lefts.mean() - 0.5) < 0.02


def test_split_level_pk_frequencies():
    # per-node two- and three-key co-membership at the solved mix
    rng = stream(3)
    trials = 120_000
    for two_m in (8, 9):
        mix = st.t1_mix(two_m)
        from hashlab.independence import mix_membership_sampler
        bits = mix_membership_sampler(mix, two_m, 3)(rng, trials)
        p2 = float((bits[:, 0] & bits[:, 1]).mean())
        p3 = float(bits.all(axis=1).mean())
        s2 = math.sqrt(0.25 * 0.75 / trials)
        s3 = math.sqrt(0.125 * 0.875 / trials)
        assert abs(p2 - 0.25) <= 3 * s2
        assert abs(p3 - 0.125) <= 3 * s3


def test_3indep_counts_and_keys_agree():
    rng = stream(4)
    t = 64
    n = trees.keys_for_3indep(t)
    m_counts = np.zeros(t)
    m_keys = np.zeros(t)
    trials = 2500
    for _ in range(trials):
        m_counts += trees.sample_3indep_counts(t, rng)
        slots = trees.sample_3indep_tree(t, rng)
        assert slots.size == n
        m_keys += np.bincount(slots, minlength=t)
    # every slot expects n/t keys under either sampling mode
    assert abs(m_counts.sum() - m_keys.sum()) == 0
    diff = (m_counts - m_keys) / trials
    assert np.abs(diff).max() < 0.2


@pytest.fixture(scope="module")
def sched_4096():
    sched, entries = calibration.build_schedule(4096, samples=1200, seed=0)
    return sched, entries


def test_4indep_counts_shape_and_stopping(sched_4096):
    sched, _ = sched_4096
    rng = stream(5)
    saw_stop = False
    for _ in range(300):
        s = trees.sample_4indep_counts(4096, sched, rng)
        assert s.slot_counts.sum() == trees.keys_for_4indep(4096)
        s2_levels = [lv for lv, tag in s.trace if tag == st.S2]
        # at most one S2 event on the query path
        assert len(s2_levels) <= 1
        if s.stop_level is not None:
            saw_stop = True
            assert s2_levels == [s.stop_level]
            for lv in range(s.stop_level + 1, trees.log2_int(4096)):
                assert s.mode_by_level[lv] == trees.MODE_RANDOM
        for lv, mode in enumerate(s.mode_by_level):
            if lv > sched.bottom:
                assert mode == trees.MODE_RANDOM
            elif lv < sched.top and (s.stop_level is None or lv <= s.stop_level):
                assert mode == trees.MODE_TSTAR
    assert saw_stop


def test_no_collection_load_bound(sched_4096):
    # on an S2-free query path prefix the load stays within 3 sqrt of mean
    sched, _ = sched_4096
    rng = stream(6)
    n = trees.keys_for_4indep(4096)
    for _ in range(800):
        s = trees.sample_4indep_counts(4096, sched, rng)
        stop = s.stop_level if s.stop_level is not None else len(s.query_loads) - 1
        for j, load in enumerate(s.query_loads[:stop + 1]):
            mean = n / 2**j
            assert abs(load - mean) <= 3 * math.sqrt(mean)


def test_4indep_key_mode_agrees_with_counts(sched_4096):
    sched, _ = sched_4096
    rng = stream(7)
    trials = 700
    t = 4096
    cc, ck = [], []
    stops_c = stops_k = 0
    for _ in range(trials):
        s = trees.sample_4indep_counts(t, sched, rng)
        cc.append(probing.bulk_search_cost(s.slot_counts, s.query_slot))
        stops_c += s.stop_level is not None
    for _ in range(trials):
        slots, meta = trees.sample_4indep_tree(t, sched, rng)
        assert slots.size == trees.keys_for_4indep(t)
        ck.append(probing.bulk_search_cost(meta.slot_counts, meta.query_slot))
        stops_k += meta.stop_level is not None
    se = math.sqrt(np.var(cc) / trials + np.var(ck) / trials)
    assert abs(np.mean(cc) - np.mean(ck)) <= 5 * se
    p = (stops_c + stops_k) / (2 * trials)
    se_p = math.sqrt(2 * p * (1 - p) / trials)
    assert abs(stops_c - stops_k) / trials <= 5 * se_p


def test_schedule_validation():
    sched = trees.Schedule(t=4096, p_t1={8: 0.1})
    with pytest.raises(ConfigError):
        sched.validate()
    with pytest.raises(ConfigError):
        trees.sample_4indep_counts(1024, trees.Schedule(t=4096, p_t1={}), stream(0))


def test_calibration_g_signs():
    # the balance argument: all-T1 overshoots, all-T2-with-query-T1
    # undershoots at a deep-enough level
    t = 1 << 15
    level = trees.tstar_top_levels(t)      # 10
    partial = {}
    rng = stream(8)
    g1, ci1 = calibration.estimate_g(t, level, 1.0, partial, 1500, rng)
    assert ci1[0] > 0, f"g(1) should be positive, got {g1} ci {ci1}"
    g0, ci0 = calibration.estimate_g(t, level, 0.0, partial, 1500, rng)
    assert ci0[1] < 0, f"g(0) should be negative, got {g0} ci {ci0}"


def test_calibration_linearity(sched_4096):
    t = 4096
    level = 9
    partial = {8: sched_4096[0].p_t1[8]}
    rng = stream(9)
    a, b = calibration.g_components(t, level, partial, 3000, rng)
    mid = (a + b * 0.3).mean()
    lo = (a + b * 0.1).mean()
    hi = (a + b * 0.5).mean()
    assert math.isclose(mid, (lo + hi) / 2, rel_tol=1e-9)


def test_calibration_entries_converge(sched_4096):
    _, entries = sched_4096
    for e in entries:
        assert e.converged, f"level {e.level}: g={e.g_estimate} ci={e.g_ci}"
        assert 0.0 <= e.p_t1 <= 1.0


def test_calibration_cache_roundtrip(tmp_path, sched_4096):
    sched, entries = sched_4096
    path = tmp_path / "cal.json"
    calibration.save_calibration(path, 4096, 0, 1200, entries)
    loaded, payload = calibration.load_calibration(path)
    assert loaded.t == 4096
    assert loaded.p_t1 == sched.p_t1
    # tampering must be detected
    text = path.read_text().replace('"t": 4096', '"t": 2048')
    path.write_text(text)
    with pytest.raises(CalibrationError):
        calibration.load_calibration(path)


def test_ensure_schedule_uses_cache(tmp_path):
    s1, _ = calibration.ensure_schedule(64, cache_dir=tmp_path, samples=300, seed=3)
    assert calibration.cache_path(tmp_path, 64, 3, 300).exists()
    s2, _ = calibration.ensure_schedule(64, cache_dir=tmp_path, samples=300, seed=3)
    assert s1.p_t1 == s2.p_t1


def test_tuple_tracking_small_table():
    sched, _ = calibration.build_schedule(64, samples=600, seed=1)
    rng = stream(10)
    events = trees.sample_4indep_tuple_events(64, sched, rng, batch=20_000)
    assert len(events) == 6
    together0, all_left0 = events[0]
    assert together0.all()
    p = all_left0.mean()
    sigma = math.sqrt(1 / 16 * 15 / 16 / together0.size)
    assert abs(p - 1 / 16) <= 4 * sigma
