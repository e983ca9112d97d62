"""Growth-class fitting: label a cost series constant/log/sqrt/linear."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import ConfigError

CONSTANT = "constant"
LOGARITHMIC = "logarithmic"
SQRT = "sqrt"
LINEAR = "linear"

_FEATURES = {
    LOGARITHMIC: np.log2,
    SQRT: np.sqrt,
    LINEAR: lambda n: n,
}


def _fit_rss(ns: np.ndarray, ys: np.ndarray, label: str) -> float:
    if label == CONSTANT:
        return float(((ys - ys.mean()) ** 2).sum())
    f = _FEATURES[label](ns)
    A = np.column_stack([np.ones_like(f), f])
    coef, *_ = np.linalg.lstsq(A, ys, rcond=None)
    resid = ys - A @ coef
    return float((resid ** 2).sum())


def _aic(rss: float, n_pts: int, n_params: int) -> float:
    return 2 * n_params + n_pts * np.log(max(rss, 1e-300) / n_pts)


def _best_label(ns: np.ndarray, ys: np.ndarray) -> str:
    scores = {CONSTANT: _aic(_fit_rss(ns, ys, CONSTANT), ns.size, 1)}
    for label in _FEATURES:
        scores[label] = _aic(_fit_rss(ns, ys, label), ns.size, 2)
    return min(scores, key=scores.get)


def _fitted_rel_span(ns: np.ndarray, ys: np.ndarray, label: str) -> float:
    f = _FEATURES[label](ns)
    A = np.column_stack([np.ones_like(f), f])
    coef, *_ = np.linalg.lstsq(A, ys, rcond=None)
    fitted = A @ coef
    scale = abs(float(ys.mean())) or 1.0
    return float(fitted.max() - fitted.min()) / scale


@dataclass
class GrowthResult:
    label: str
    confidence: float
    inconclusive: bool
    candidates: list = field(default_factory=list)   # labels within the margin
    aic: dict = field(default_factory=dict)

    def __str__(self):
        if self.inconclusive:
            return "inconclusive(" + "|".join(sorted(self.candidates)) + ")"
        return self.label


def growth_classify(sizes, means, rng: np.random.Generator,
                    n_boot: int = 2000, margin: float = 0.9,
                    min_rel_span: float = 0.05) -> GrowthResult:
    """Fit the series against {1, log n, sqrt n, n} and pick by AIC.

    The best model's confidence is the fraction of residual-bootstrap
    refits it wins; below `margin` the result is inconclusive and lists
    every label winning at least (1 - margin) of the refits.

    A non-constant class additionally requires the winning fit to span at
    least `min_rel_span` of the series mean across the ladder: growth
    classes describe variation on the scale of the measurements, and a
    statistically resolvable sub-percent drift (finite-size convergence)
    is still flat for classification purposes.
    """
    ns = np.asarray(sizes, dtype=float)
    ys = np.asarray(means, dtype=float)
    if ns.size < 4:
        raise ConfigError("growth classification needs at least 4 ladder points")

    aic = {CONSTANT: _aic(_fit_rss(ns, ys, CONSTANT), ns.size, 1)}
    for label in _FEATURES:
        aic[label] = _aic(_fit_rss(ns, ys, label), ns.size, 2)
    best = min(aic, key=aic.get)
    if best != CONSTANT and _fitted_rel_span(ns, ys, best) < min_rel_span:
        return GrowthResult(label=CONSTANT, confidence=1.0, inconclusive=False,
                            candidates=[CONSTANT], aic=aic)

    # residual bootstrap around the winning fit
    if best == CONSTANT:
        fitted = np.full_like(ys, ys.mean())
    else:
        f = _FEATURES[best](ns)
        A = np.column_stack([np.ones_like(f), f])
        coef, *_ = np.linalg.lstsq(A, ys, rcond=None)
        fitted = A @ coef
    resid = ys - fitted
    wins: dict = {}
    for _ in range(n_boot):
        perturbed = fitted + resid[rng.integers(0, resid.size, resid.size)]
        w = _best_label(ns, perturbed)
        wins[w] = wins.get(w, 0) + 1
    confidence = wins.get(best, 0) / n_boot
    candidates = sorted(
        (lbl for lbl, c in wins.items() if c / n_boot >= 1 - margin),
        key=lambda lbl: -wins[lbl],
    )
    return GrowthResult(label=best, confidence=confidence,
                        inconclusive=confidence < margin,
                        candidates=candidates, aic=aic)
