"""Result serialization: delimited output, summary JSON, and figures.

CSV bodies are byte-reproducible for a fixed config and seed: rows are
emitted in deterministic order and floats use shortest round-trip repr.
Timestamps live only in the summary JSON metadata.
"""

from __future__ import annotations

from pathlib import Path

import numpy as np

CSV_HEADER = "experiment,t,n,load,trial,seed,metric,value"


def rows_to_csv(rows) -> str:
    lines = [CSV_HEADER]
    for experiment, t, n, load, trial, seed, metric, value in rows:
        lines.append(f"{experiment},{t},{n},{load!r},{trial},{seed},{metric},{value!r}")
    return "\n".join(lines) + "\n"


def write_outputs(report, rows, out_stem, plot: bool = True) -> dict:
    """Write <stem>.csv, <stem>.json and optionally <stem>.png."""
    stem = Path(out_stem)
    stem.parent.mkdir(parents=True, exist_ok=True)
    paths = {"csv": stem.with_suffix(".csv"), "json": stem.with_suffix(".json")}
    paths["csv"].write_text(rows_to_csv(rows))
    paths["json"].write_text(report.to_json())
    if plot:
        paths["png"] = stem.with_suffix(".png")
        render_figure(report, paths["png"])
    return {k: str(v) for k, v in paths.items()}


def read_csv(path):
    """Parse a results CSV back into typed row tuples."""
    rows = []
    with open(path) as fh:
        header = fh.readline().strip()
        if header != CSV_HEADER:
            raise ValueError(f"unexpected CSV header: {header}")
        for line in fh:
            exp, t, n, load, trial, seed, metric, value = line.rstrip("\n").split(",")
            rows.append((exp, int(t), int(n), float(load), int(trial),
                         int(seed), metric, float(value)))
    return rows


def series_from_rows(rows, metric: str):
    """Aggregate (sizes, list-of-value-arrays) for one metric from CSV rows."""
    by_size: dict = {}
    for exp, t, n, load, trial, seed, m, value in rows:
        if m == metric:
            by_size.setdefault((t, n), []).append(value)
    sizes = sorted(by_size)
    return [n for _, n in sizes], [np.array(by_size[s]) for s in sizes]


def render_figure(report, path) -> None:
    """Mean cost vs size on a log-x axis, with CI bars and the fitted class."""
    import matplotlib
    matplotlib.use("Agg")
    import matplotlib.pyplot as plt

    growth = report.growth
    metric = growth.get("metric")
    sizes = np.array([p["n"] for p in report.per_size], dtype=float)
    if report.experiment in ("minwise-adv", "minwise-poly-k"):
        sizes = np.array([p["t"] for p in report.per_size], dtype=float)

    fig, ax = plt.subplots(figsize=(6.4, 4.2))
    for name, style in _metric_styles(report):
        means = [p["metrics"][name]["mean"] for p in report.per_size]
        los = [p["metrics"][name]["ci99"][0] for p in report.per_size]
        his = [p["metrics"][name]["ci99"][1] for p in report.per_size]
        err = [np.subtract(means, los), np.subtract(his, means)]
        ax.errorbar(sizes, means, yerr=err, marker="o", capsize=3,
                    label=name, **style)
    ax.set_xscale("log", base=2)
    ax.set_xlabel("keys n" if report.experiment.startswith(("lp", "ms"))
                  else "ladder parameter")
    ax.set_ylabel(metric or "value")
    title = report.experiment
    if "class" in growth:
        title += f"  [{growth['class']}]"
    ax.set_title(title)
    ax.legend(fontsize=8)
    ax.grid(alpha=0.3)
    fig.tight_layout()
    fig.savefig(path, dpi=130)
    plt.close(fig)


def _metric_styles(report):
    primary = report.growth.get("metric")
    available = report.per_size[0]["metrics"].keys() if report.per_size else []
    styles = []
    if primary in available:
        styles.append((primary, {}))
    control = f"control_{primary}"
    if control in available:
        styles.append((control, {"linestyle": "--", "alpha": 0.7}))
    bshift = f"{primary}_bshift"
    if bshift in available:
        styles.append((bshift, {"linestyle": ":", "alpha": 0.7}))
    if not styles and available:
        styles.append((sorted(available)[0], {}))
    return styles
