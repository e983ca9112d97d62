"""Experiment runners: the measurement matrix behind the CLI.

Every experiment walks a size ladder, runs seeded independent trials at
each rung, and produces (a) per-trial CSV rows and (b) a CostReport with
per-size summaries and growth diagnostics.  Reproducibility contract:
identical config + seed give byte-identical CSV bodies; all randomness
is drawn from counter-split Philox streams keyed by (seed, experiment,
size index, chunk).
"""

from __future__ import annotations

import hashlib
import json
import math
import time
from dataclasses import asdict, dataclass, field

import numpy as np

from . import calibration, minwise, msattack, probing, trees, twoindep
from .errors import CalibrationError, ConfigError
from .families import poly_eval, poly_eval_many, poly_sample
from .growth import growth_classify
from .rng import stream
from .stats import bootstrap_log_slope, mean_ci, ratio_per_factor

EXPERIMENTS = (
    "lp-2indep", "lp-3indep", "lp-4indep", "lp-poly-k",
    "minwise-adv", "minwise-poly-k", "ms-lp", "ms-minwise",
)

PRIMARY_METRIC = {
    "lp-2indep": "query_cost",
    "lp-3indep": "insert_probes_per_key",
    "lp-4indep": "query_cost",
    "lp-poly-k": "query_cost",
    "minwise-adv": "q_min_freq",
    "minwise-poly-k": "q_min_freq",
    "ms-lp": "excess_per_key",
    "ms-minwise": "q_min_freq",
}

_EXP_DOMAIN = {name: i + 1 for i, name in enumerate(EXPERIMENTS)}
BATCH = 4096


@dataclass
class ExperimentConfig:
    experiment: str
    ladder: tuple
    trials: int
    seed: int = 0
    load: float | None = None
    k: int = 5
    out: str | None = None
    cache_dir: str | None = None
    calibration_samples: int = 3000
    workers: int = 1
    plot: bool = True

    def __post_init__(self):
        self.ladder = tuple(int(v) for v in self.ladder)
        if self.experiment not in EXPERIMENTS:
            raise ConfigError(f"unknown experiment {self.experiment!r}")
        if not self.ladder:
            raise ConfigError("empty size ladder")
        if list(self.ladder) != sorted(set(self.ladder)):
            raise ConfigError("ladder must be strictly increasing")
        if self.trials < 1:
            raise ConfigError("trials must be >= 1")
        if self.load is not None and not 0 < self.load <= 2 / 3:
            raise ConfigError("load must be in (0, 2/3]")
        if self.experiment == "lp-4indep" and min(self.ladder) < 4096:
            raise ConfigError("4-independent experiments need t >= 2^12")

    def content_hash(self) -> str:
        payload = {k: v for k, v in asdict(self).items()
                   if k not in ("out", "cache_dir", "workers", "plot")}
        canon = json.dumps(payload, sort_keys=True, separators=(",", ":"))
        return hashlib.sha256(canon.encode()).hexdigest()


@dataclass
class SizePoint:
    t: int
    n: int
    load: float
    metrics: dict          # metric -> np.ndarray of per-trial values


@dataclass
class CostReport:
    experiment: str
    config: dict
    per_size: list
    growth: dict
    metadata: dict

    def to_json(self) -> str:
        return json.dumps({
            "experiment": self.experiment,
            "config": self.config,
            "per_size": self.per_size,
            "growth": self.growth,
            "metadata": self.metadata,
        }, indent=2, sort_keys=True)


def _trial_stream(cfg: ExperimentConfig, size_index: int, chunk: int = 0):
    return stream(cfg.seed, _EXP_DOMAIN[cfg.experiment], size_index, chunk)


# ---------------------------------------------------------------- lp runners

def _run_lp_2indep(cfg: ExperimentConfig, size_index: int) -> SizePoint:
    t = cfg.ladder[size_index]
    lg = trees.log2_int(t)
    if lg % 2 == 0:
        raise ConfigError("2-independent construction needs t an odd power of two")
    config = twoindep.solve_2indep_mix(t // 2)
    rng = _trial_stream(cfg, size_index)
    costs = np.empty(cfg.trials)
    for i in range(cfg.trials):
        q, counts = twoindep.sample_2indep_counts(config, rng)
        costs[i] = probing.bulk_search_cost(counts, q)
    return SizePoint(t=t, n=config.n, load=0.5, metrics={"query_cost": costs})


def _run_lp_3indep(cfg: ExperimentConfig, size_index: int) -> SizePoint:
    t = cfg.ladder[size_index]
    n = trees.keys_for_3indep(t)
    rng = _trial_stream(cfg, size_index)
    probes = np.empty(cfg.trials)
    excess = np.empty(cfg.trials)
    for i in range(cfg.trials):
        counts = trees.sample_3indep_counts(t, rng)
        disp = probing.bulk_displacement(counts)
        probes[i] = (disp + n) / n
        excess[i] = disp / n
    return SizePoint(t=t, n=n, load=n / t, metrics={
        "insert_probes_per_key": probes, "insert_excess_per_key": excess})


def _run_lp_4indep(cfg: ExperimentConfig, size_index: int) -> SizePoint:
    t = cfg.ladder[size_index]
    n = trees.keys_for_4indep(t)
    schedule, _ = calibration.ensure_schedule(
        t, cache_dir=cfg.cache_dir, samples=cfg.calibration_samples, seed=cfg.seed)
    rng = _trial_stream(cfg, size_index)
    costs = np.empty(cfg.trials)
    stops = np.zeros(cfg.trials)
    for i in range(cfg.trials):
        s = trees.sample_4indep_counts(t, schedule, rng)
        costs[i] = probing.bulk_search_cost(s.slot_counts, s.query_slot)
        stops[i] = -1 if s.stop_level is None else s.stop_level
    return SizePoint(t=t, n=n, load=n / t, metrics={
        "query_cost": costs, "stop_level": stops})


def _run_lp_poly_k(cfg: ExperimentConfig, size_index: int) -> SizePoint:
    t = cfg.ladder[size_index]
    load = cfg.load if cfg.load is not None else 1 / 3
    n = int(round(load * t))
    keys = np.arange(n, dtype=np.uint64)
    rng = _trial_stream(cfg, size_index)
    q_cost = np.empty(cfg.trials)
    probes = np.empty(cfg.trials)
    for i in range(cfg.trials):
        f = poly_sample(cfg.k, t, rng)
        slots = poly_eval_many(f, keys).astype(np.int64)
        counts = np.bincount(slots, minlength=t)
        q_cost[i] = probing.bulk_search_cost(counts, poly_eval(f, n))
        probes[i] = (probing.bulk_displacement(counts) + n) / n
    return SizePoint(t=t, n=n, load=load, metrics={
        "query_cost": q_cost, "insert_probes_per_key": probes})


# ----------------------------------------------------------- minwise runners

def _run_minwise_adv(cfg: ExperimentConfig, size_index: int) -> SizePoint:
    k = cfg.ladder[size_index]
    n = 64 * k
    config = minwise.MinwiseConfig(n=n, k=k)
    sampler = minwise.adversarial_min_events(config)
    rng = _trial_stream(cfg, size_index)
    batches = max(1, math.ceil(cfg.trials / BATCH))
    freq = np.empty(batches)
    cond_kept = np.empty(batches)
    cond_wins = np.empty(batches)
    for i in range(batches):
        ev = sampler(rng, BATCH)
        freq[i] = ev.q_min.mean()
        cond_kept[i] = ev.q_exact.sum()
        cond_wins[i] = (ev.q_exact & ev.win_in_interval).sum()
    return SizePoint(t=k, n=n, load=k / n, metrics={
        "q_min_freq": freq, "cond_exact_count": cond_kept,
        "cond_win_count": cond_wins})


def _run_minwise_poly_k(cfg: ExperimentConfig, size_index: int) -> SizePoint:
    k = cfg.ladder[size_index]
    n = 256
    keys = np.arange(n + 1, dtype=np.uint64)   # last one is the query
    rng = _trial_stream(cfg, size_index)
    batches = max(1, math.ceil(cfg.trials / BATCH))
    freq = np.empty(batches)
    tie_freq = np.empty(batches)
    for i in range(batches):
        wins = ties = 0
        for _ in range(BATCH):
            f = poly_sample(k, 1, rng)     # t=1: use the raw mod-p values
            vals = poly_eval_many_raw(f, keys)
            lowest = vals[:n].min()
            wins += bool(vals[n] < lowest)
            ties += bool(vals[n] == lowest)
        freq[i] = wins / BATCH
        tie_freq[i] = ties / BATCH
    return SizePoint(t=k, n=n, load=0.0, metrics={
        "q_min_freq": freq, "tie_freq": tie_freq})


def poly_eval_many_raw(f, xs: np.ndarray) -> np.ndarray:
    """Polynomial values mod p without the final mod-t reduction."""
    from .families import MERSENNE_P, _mulmod61, _P61

    xs = np.asarray(xs, dtype=np.uint64)
    acc = np.full(xs.shape, np.uint64(f.coeffs[-1]), dtype=np.uint64)
    for c in reversed(f.coeffs[:-1]):
        acc = _mulmod61(acc, xs)
        acc += np.uint64(c)
        acc = np.where(acc >= _P61, acc - _P61, acc)
    return acc


# ---------------------------------------------------------------- ms runners

def _run_ms_lp(cfg: ExperimentConfig, size_index: int) -> SizePoint:
    n = cfg.ladder[size_index]
    load = cfg.load if cfg.load is not None else 0.5
    m = int(n / load)
    if m & (m - 1):
        raise ConfigError("n/load must be a power of two")
    ell, ell_out = 64, trees.log2_int(m)
    spec = msattack.BadInputSpec(n=n)
    rng = _trial_stream(cfg, size_index)
    res = msattack.ms_lp_experiment(spec, ell, ell_out, cfg.trials, rng)
    rng_b = _trial_stream(cfg, size_index, 1)
    res_b = msattack.ms_lp_experiment(spec, ell, ell_out, cfg.trials, rng_b, with_b=True)
    return SizePoint(t=m, n=n, load=load, metrics={
        "probes_per_key": res.probes_per_key,
        "excess_per_key": res.excess_per_key,
        "control_probes_per_key": res.control_probes,
        "control_excess_per_key": res.control_excess,
        "probes_per_key_bshift": res_b.probes_per_key,
        "excess_per_key_bshift": res_b.excess_per_key,
    })


def _run_ms_minwise(cfg: ExperimentConfig, size_index: int) -> SizePoint:
    n = cfg.ladder[size_index]
    ell = min(trees.log2_int(n) + 8, 62)
    rng = _trial_stream(cfg, size_index)
    batches = max(1, math.ceil(cfg.trials / BATCH))
    freq = np.empty(batches)
    ctrl = np.empty(batches)
    for i in range(batches):
        attack, control = msattack.ms_minwise_events(n, ell, BATCH, rng)
        freq[i] = attack.mean()
        ctrl[i] = control.mean()
    return SizePoint(t=1 << ell, n=n, load=0.0, metrics={
        "q_min_freq": freq, "control_q_min_freq": ctrl})


_RUNNERS = {
    "lp-2indep": _run_lp_2indep,
    "lp-3indep": _run_lp_3indep,
    "lp-4indep": _run_lp_4indep,
    "lp-poly-k": _run_lp_poly_k,
    "minwise-adv": _run_minwise_adv,
    "minwise-poly-k": _run_minwise_poly_k,
    "ms-lp": _run_ms_lp,
    "ms-minwise": _run_ms_minwise,
}


def _run_one_size(cfg: ExperimentConfig, size_index: int) -> SizePoint:
    return _RUNNERS[cfg.experiment](cfg, size_index)


def _summarize(point: SizePoint) -> dict:
    out = {"t": point.t, "n": point.n, "load": point.load, "metrics": {}}
    for name, values in point.metrics.items():
        mean, lo, hi = mean_ci(values)
        out["metrics"][name] = {
            "mean": mean, "stddev": float(np.std(values, ddof=1)) if len(values) > 1 else 0.0,
            "ci99": [lo, hi], "count": int(len(values)),
        }
    return out


def _growth_section(cfg: ExperimentConfig, points: list) -> dict:
    metric = PRIMARY_METRIC[cfg.experiment]
    # the x axis is the key count, except for the bias-vs-independence
    # experiment where the ladder parameter itself (k) varies
    sizes = list(cfg.ladder) if cfg.experiment == "minwise-poly-k" \
        else [p.n for p in points]
    values = [p.metrics[metric] for p in points]
    means = [float(np.mean(v)) for v in values]
    section = {"metric": metric, "sizes": sizes, "means": means}
    if len(set(sizes)) < 2:
        return section
    if all(m > 0 for m in means):
        section["ratio_per_doubling"] = ratio_per_factor(sizes, means, 2.0)
        section["ratio_per_quadrupling"] = ratio_per_factor(sizes, means, 4.0)
    rng = stream(cfg.seed, 0xB007, 0)
    slope, lo, hi = bootstrap_log_slope(sizes, values, 1000, rng)
    section["log2_slope"] = slope
    section["log2_slope_ci99"] = [lo, hi]
    if len(points) >= 4:
        rng = stream(cfg.seed, 0xB007, 1)
        result = growth_classify(sizes, means, rng)
        section["class"] = str(result)
        section["class_label"] = result.label
        section["class_confidence"] = result.confidence
        section["class_candidates"] = result.candidates
    return section


def run(cfg: ExperimentConfig) -> tuple[CostReport, list]:
    """Execute the experiment; returns (report, CSV rows).

    Rows follow the schema (experiment, t, n, load, trial, seed, metric,
    value) in deterministic order.
    """
    if cfg.experiment == "lp-4indep":
        # build calibration up front so failures happen before trials
        for t in cfg.ladder:
            calibration.ensure_schedule(t, cache_dir=cfg.cache_dir,
                                        samples=cfg.calibration_samples, seed=cfg.seed)
    start = time.time()
    if cfg.workers > 1:
        from concurrent.futures import ProcessPoolExecutor

        with ProcessPoolExecutor(max_workers=cfg.workers) as pool:
            points = list(pool.map(_run_one_size, [cfg] * len(cfg.ladder),
                                   range(len(cfg.ladder))))
    else:
        points = [_run_one_size(cfg, i) for i in range(len(cfg.ladder))]

    rows = []
    for point in points:
        for metric in sorted(point.metrics):
            for trial, value in enumerate(point.metrics[metric]):
                rows.append((cfg.experiment, point.t, point.n, point.load,
                             trial, cfg.seed, metric, float(value)))

    calibration_hash = None
    if cfg.experiment == "lp-4indep":
        hashes = []
        for t in cfg.ladder:
            _, payload = calibration.ensure_schedule(
                t, cache_dir=cfg.cache_dir, samples=cfg.calibration_samples,
                seed=cfg.seed)
            hashes.append(payload["content_hash"])
        calibration_hash = hashlib.sha256("".join(hashes).encode()).hexdigest()

    report = CostReport(
        experiment=cfg.experiment,
        config={k: v for k, v in asdict(cfg).items() if k not in ("out",)},
        per_size=[_summarize(p) for p in points],
        growth=_growth_section(cfg, points),
        metadata={
            "seed": cfg.seed,
            "config_hash": cfg.content_hash(),
            "calibration_hash": calibration_hash,
            "generator": "philox",
            "wall_time_s": time.time() - start,
            "created_unix": time.time(),
        },
    )
    return report, rows
