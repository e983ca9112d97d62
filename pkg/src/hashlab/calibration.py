"""Per-level calibration of the 4-independent tree's non-query mix.

At a calibrated level the query node always applies T1, so the non-query
nodes must blend T1 and T2 so that a uniformly random 4-tuple of keys
surviving together at that level goes all-left with probability exactly
1/16.  Writing w(c) for the ordered-4-tuple count c(c-1)(c-2)(c-3), the
balance functional

    g(P) = E[ sum_v w(c_v) * (p4_v(P) - 1/16) ]

is linear in P, so its root is estimated from Monte Carlo draws of the
per-draw intercept and slope.  Results are cached to JSON keyed by table
size and schedule hash.
"""

from __future__ import annotations

import hashlib
import json
import os
from dataclasses import asdict, dataclass
from fractions import Fraction
from functools import lru_cache
from pathlib import Path

import numpy as np

from . import strategies as st
from . import trees
from .errors import CalibrationError, ConfigError
from .rng import stream

CACHE_ENV_VAR = "HASHLAB_CACHE_DIR"
FORMAT_TAG = "hashlab-calibration-v1"
Z99 = 2.5758293035489004


@lru_cache(maxsize=None)
def _contrib(two_m: int) -> tuple[float, float]:
    """w(c)*(p4(T1)-1/16) and w(c)*(p4(T2)-1/16), exact then floated."""
    if two_m < 4:
        return 0.0, 0.0
    w = st.falling(Fraction(two_m), 4)
    t1 = w * (st.p4_exact(st.t1_mix(two_m), two_m) - Fraction(1, 16))
    t2 = w * (st.p4_exact(st.t2_mix(two_m), two_m) - Fraction(1, 16))
    return float(t1), float(t2)


def _simulate_loads(t: int, level: int, p_t1_partial: dict, rng: np.random.Generator):
    """Node loads at `level`, the query node index, and the stopped flag."""
    lg = trees.log2_int(t)
    top = trees.tstar_top_levels(t)
    n = trees.keys_for_4indep(t)
    query_slot = int(rng.integers(0, t))
    c = np.array([n], dtype=np.int64)
    stopped = False
    for lv in range(level):
        qidx = query_slot >> (lg - lv)
        if stopped:
            mode = trees.MODE_RANDOM
            p_minus = None
        elif lv < top:
            mode = trees.MODE_TSTAR
            p_minus = None
        else:
            mode = trees.MODE_WINDOW
            if lv not in p_t1_partial:
                raise CalibrationError(f"level {lv} not calibrated yet")
            p_minus = p_t1_partial[lv]
        left, qtag = trees._split_4indep_level(c, rng, mode, qidx, p_minus)
        if qtag == st.S2:
            stopped = True
        c = trees._interleave(left, c - left)
    return c, query_slot >> (lg - level), stopped


def g_components(t: int, level: int, p_t1_partial: dict, samples: int,
                 rng: np.random.Generator) -> tuple[np.ndarray, np.ndarray]:
    """Per-draw (intercept, slope) of the balance functional at `level`.

    Draws where the stopping rule already fired contribute zero: those
    trees split truly randomly at this level, which is exactly balanced.
    """
    a = np.zeros(samples)
    b = np.zeros(samples)
    for i in range(samples):
        c, qidx, stopped = _simulate_loads(t, level, p_t1_partial, rng)
        if stopped:
            continue
        uniq, inverse = np.unique(c, return_inverse=True)
        pairs = np.array([_contrib(int(u)) for u in uniq])
        t1 = pairs[inverse, 0]
        t2 = pairs[inverse, 1]
        qload = int(c[qidx])
        a[i] = t2.sum() - t2[qidx] + _contrib(qload)[0]
        b[i] = (t1 - t2).sum() - (t1[qidx] - t2[qidx])
    return a, b


def estimate_g(t: int, level: int, p_value: float, p_t1_partial: dict,
               samples: int, rng: np.random.Generator) -> tuple[float, tuple[float, float]]:
    """Monte Carlo estimate of g(p_value) with a 99% CI."""
    a, b = g_components(t, level, p_t1_partial, samples, rng)
    g = a + b * p_value
    mean = float(g.mean())
    sem = float(g.std(ddof=1) / np.sqrt(samples)) if samples > 1 else 0.0
    return mean, (mean - Z99 * sem, mean + Z99 * sem)


@dataclass
class CalEntry:
    level: int
    p_t1: float
    samples: int
    g_estimate: float
    g_ci: tuple
    converged: bool


def calibrate_Tminus(t: int, level: int, schedule_so_far: dict, samples: int,
                     rng: np.random.Generator) -> CalEntry:
    """Estimate the level's balancing T1 probability and its residual.

    Fits the linear g(P) = A + B*P from `samples` draws, clamps the root
    to [0, 1], then re-estimates g at the fitted point on fresh draws.
    The residual batch is a quarter of the fit batch so that the fitting
    error of P sits well inside the residual CI.  Non-convergence
    (residual CI excluding 0) is reported via the flag.
    """
    top = trees.tstar_top_levels(t)
    if level < top:
        raise ConfigError(f"level {level} is above the calibrated window (top={top})")
    a, b = g_components(t, level, schedule_so_far, samples, rng)
    b_mean = float(b.mean())
    if b_mean <= 0:
        # no 4-tuples at this level in any draw: any probability balances
        p_hat = 0.0
    else:
        p_hat = float(np.clip(-a.mean() / b_mean, 0.0, 1.0))
    g_est, ci = estimate_g(t, level, p_hat, schedule_so_far,
                           max(samples // 4, 2), rng)
    return CalEntry(level=level, p_t1=p_hat, samples=samples,
                    g_estimate=g_est, g_ci=ci, converged=ci[0] <= 0.0 <= ci[1])


def build_schedule(t: int, samples: int, seed: int) -> tuple[trees.Schedule, list]:
    """Calibrate every window level top-down and assemble the schedule."""
    top, bottom = trees.tstar_top_levels(t), trees.window_bottom_level(t)
    p_t1: dict = {}
    entries = []
    for i, level in enumerate(range(top, bottom + 1)):
        rng = stream(seed, 0xCA1, trees.log2_int(t), i)
        entry = calibrate_Tminus(t, level, p_t1, samples, rng)
        entries.append(entry)
        p_t1[level] = entry.p_t1
    return trees.Schedule(t=t, p_t1=p_t1), entries


def _content_hash(payload: dict) -> str:
    canon = json.dumps(payload, sort_keys=True, separators=(",", ":"))
    return hashlib.sha256(canon.encode()).hexdigest()


def save_calibration(path, t: int, seed: int, samples: int, entries: list) -> dict:
    payload = {
        "format": FORMAT_TAG,
        "t": t,
        "seed": seed,
        "samples": samples,
        "generator": "philox",
        "top": trees.tstar_top_levels(t),
        "bottom": trees.window_bottom_level(t),
        "entries": [asdict(e) | {"g_ci": list(e.g_ci)} for e in entries],
    }
    payload["content_hash"] = _content_hash({k: v for k, v in payload.items()})
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(json.dumps(payload, indent=2, sort_keys=True))
    return payload


def load_calibration(path) -> tuple[trees.Schedule, dict]:
    path = Path(path)
    if not path.exists():
        raise CalibrationError(f"calibration cache missing: {path}")
    payload = json.loads(path.read_text())
    stated = payload.pop("content_hash", None)
    if stated != _content_hash(payload):
        raise CalibrationError(f"calibration-hash mismatch in {path}")
    payload["content_hash"] = stated
    p_t1 = {int(e["level"]): float(e["p_t1"]) for e in payload["entries"]}
    return trees.Schedule(t=int(payload["t"]), p_t1=p_t1), payload


def default_cache_dir() -> Path:
    return Path(os.environ.get(CACHE_ENV_VAR, ".hashlab-cache"))


def cache_path(cache_dir, t: int, seed: int, samples: int) -> Path:
    return Path(cache_dir) / f"tminus-t{t}-seed{seed}-s{samples}.json"


def ensure_schedule(t: int, cache_dir=None, samples: int = 3000,
                    seed: int = 0) -> tuple[trees.Schedule, dict]:
    """Load the cached schedule for (t, seed, samples), building it if absent."""
    cache_dir = default_cache_dir() if cache_dir is None else Path(cache_dir)
    path = cache_path(cache_dir, t, seed, samples)
    if path.exists():
        return load_calibration(path)
    schedule, entries = build_schedule(t, samples, seed)
    payload = save_calibration(path, t, seed, samples, entries)
    return schedule, payload
