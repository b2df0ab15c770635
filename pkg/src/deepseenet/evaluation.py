"""Agreement metrics, ROC analysis and patient-level bootstrap intervals.

Macro-averaged sensitivity and specificity and Cohen's kappa are computed
from integer counts with exact rational arithmetic, so results do not
depend on summation order.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from fractions import Fraction

import numpy as np

__all__ = [
    "ConfusionMatrix",
    "MetricReport",
    "RocCurve",
    "BootstrapResult",
    "confusion",
    "summary_metrics",
    "cohen_kappa",
    "agreement_band",
    "roc_auc",
    "bootstrap",
    "nearest_rank",
]


@dataclass(frozen=True)
class ConfusionMatrix:
    """Counts with gold labels on rows and predictions on columns."""

    counts: np.ndarray

    @property
    def k(self) -> int:
        return self.counts.shape[0]

    @property
    def total(self) -> int:
        return int(self.counts.sum())

    def to_csv(self, labels=None) -> str:
        labels = list(range(self.k)) if labels is None else list(labels)
        lines = ["gold\\pred," + ",".join(str(x) for x in labels)]
        for lab, row in zip(labels, self.counts):
            lines.append(f"{lab}," + ",".join(str(int(c)) for c in row))
        return "\n".join(lines) + "\n"


@dataclass
class MetricReport:
    accuracy: float
    sensitivity: float
    specificity: float
    kappa: float
    n: int = 0
    ci: dict = field(default_factory=dict)

    def to_dict(self):
        def num(x):
            return None if x is None or (isinstance(x, float) and math.isnan(x)) else x

        out = {"n": self.n}
        for name in ("accuracy", "sensitivity", "specificity", "kappa"):
            entry = {"value": num(getattr(self, name))}
            if name in self.ci:
                lo, hi = self.ci[name]
                entry["ci95"] = [num(lo), num(hi)]
            out[name] = entry
        return out


@dataclass
class RocCurve:
    fpr: np.ndarray
    tpr: np.ndarray
    thresholds: np.ndarray
    auc: float

    def to_csv(self) -> str:
        lines = ["threshold,fpr,tpr"]
        for t, f, p in zip(self.thresholds, self.fpr, self.tpr):
            lines.append(f"{t!r},{f!r},{p!r}")
        return "\n".join(lines) + "\n"


def confusion(gold, pred, k: int) -> ConfusionMatrix:
    gold = np.asarray(gold, dtype=np.int64).ravel()
    pred = np.asarray(pred, dtype=np.int64).ravel()
    if gold.shape != pred.shape:
        raise ValueError(f"length mismatch: {gold.size} gold vs {pred.size} predicted")
    if gold.size and (min(gold.min(), pred.min()) < 0 or max(gold.max(), pred.max()) >= k):
        raise ValueError(f"labels must lie in [0, {k})")
    counts = np.bincount(gold * k + pred, minlength=k * k).reshape(k, k)
    return ConfusionMatrix(counts)


def _as_counts(cm) -> np.ndarray:
    return cm.counts if isinstance(cm, ConfusionMatrix) else np.asarray(cm, dtype=np.int64)


def _per_class_rates(c: np.ndarray):
    total = int(c.sum())
    rows = c.sum(axis=1)
    cols = c.sum(axis=0)
    recalls, tnrs = [], []
    for i in range(c.shape[0]):
        pos = int(rows[i])
        if pos == 0:
            continue  # class absent from gold
        tp = int(c[i, i])
        recalls.append(Fraction(tp, pos))
        neg = total - pos
        if neg:
            fp = int(cols[i]) - tp
            tnrs.append(Fraction(neg - fp, neg))
    return recalls, tnrs


def _mean(xs) -> float:
    return float(sum(xs, Fraction(0)) / len(xs)) if xs else float("nan")


def summary_metrics(cm) -> MetricReport:
    """Accuracy plus macro-averaged one-vs-rest sensitivity and specificity.

    Classes absent from the gold labels are left out of both means; a
    class with no negatives is left out of the specificity mean.
    """
    c = _as_counts(cm)
    total = int(c.sum())
    if total == 0:
        raise ValueError("metrics are undefined for an empty confusion matrix")
    recalls, tnrs = _per_class_rates(c)
    return MetricReport(
        accuracy=int(np.trace(c)) / total,
        sensitivity=_mean(recalls),
        specificity=_mean(tnrs),
        kappa=cohen_kappa(c),
        n=total,
    )


def cohen_kappa(cm, weights: str | None = None) -> float:
    """Cohen's kappa; ``weights='quadratic'`` gives the weighted variant.

    When chance agreement is total (pₑ = 1) the statistic is undefined;
    1.0 is returned for perfect observed agreement and 0.0 otherwise.
    """
    c = _as_counts(cm)
    n = int(c.sum())
    if n == 0:
        raise ValueError("kappa is undefined for an empty confusion matrix")
    rows = [int(x) for x in c.sum(axis=1)]
    cols = [int(x) for x in c.sum(axis=0)]
    k = c.shape[0]
    if weights is None:
        # kappa = (n * trace - sum r_i c_i) / (n^2 - sum r_i c_i), exact in integers
        agree = int(np.trace(c))
        chance = sum(r * q for r, q in zip(rows, cols))
        num, den = n * agree - chance, n * n - chance
        if den == 0:
            return 1.0 if agree == n else 0.0
        return num / den
    if weights != "quadratic":
        raise ValueError(f"unknown weighting {weights!r}")
    w = [[Fraction((i - j) ** 2, (k - 1) ** 2) if k > 1 else Fraction(0)
          for j in range(k)] for i in range(k)]
    observed = sum(w[i][j] * int(c[i, j]) for i in range(k) for j in range(k)) / n
    expected = sum(w[i][j] * rows[i] * cols[j] for i in range(k) for j in range(k)) / (n * n)
    if expected == 0:
        return 1.0 if observed == 0 else 0.0
    return float(1 - observed / expected)


_BANDS = ((0.20, "slight"), (0.40, "fair"), (0.60, "moderate"), (0.80, "substantial"),
          (1.00, "almost perfect"))


def agreement_band(kappa: float) -> str:
    """Verbal agreement band for a kappa value; upper band edges are inclusive."""
    if kappa < 0:
        return "none"
    for upper, label in _BANDS:
        if kappa <= upper:
            return label
    return "almost perfect"


def roc_auc(scores, labels) -> RocCurve:
    """ROC curve from a sweep over the distinct scores, with trapezoidal AUC.

    A sample is called positive when its score is >= the threshold. The
    area is accumulated in integer units (twice the count of correctly
    ordered positive/negative pairs plus ties), so it equals the
    tie-corrected Mann-Whitney statistic exactly.
    """
    scores = np.asarray(scores, dtype=np.float64).ravel()
    labels = np.asarray(labels).ravel().astype(bool)
    if scores.shape != labels.shape:
        raise ValueError("scores and labels differ in length")
    n_pos = int(labels.sum())
    n_neg = labels.size - n_pos
    if n_pos == 0 or n_neg == 0:
        raise ValueError("AUC is undefined unless both classes are present")
    order = np.argsort(-scores, kind="stable")
    s, lab = scores[order], labels[order]
    # last index of each group of tied scores
    ends = np.flatnonzero(np.r_[s[1:] != s[:-1], True])
    tp = np.cumsum(lab)[ends]
    fp = (ends + 1) - tp
    tp = np.r_[0, tp]
    fp = np.r_[0, fp]
    twice_area = int(np.sum((fp[1:] - fp[:-1]) * (tp[1:] + tp[:-1])))
    auc = twice_area / (2 * n_pos * n_neg)
    thresholds = np.r_[np.inf, s[ends]]
    return RocCurve(fp / n_neg, tp / n_pos, thresholds, auc)


def nearest_rank(sorted_values, pct: float):
    """Nearest-rank percentile of an ascending sequence."""
    n = len(sorted_values)
    if n == 0:
        raise ValueError("percentile of an empty sample")
    rank = max(1, math.ceil(pct / 100.0 * n))
    return sorted_values[min(rank, n) - 1]


@dataclass
class BootstrapResult:
    point: float
    lo: float
    hi: float
    n_resamples: int
    redraws: int
    distribution: np.ndarray = field(repr=False, default=None)


def bootstrap(patients, metric_fn, n_resamples: int = 2000, seed: int = 0,
              alpha: float = 0.05, max_redraws: int | None = None) -> BootstrapResult:
    """Percentile bootstrap over patients.

    Each iteration resamples ``len(patients)`` patients with replacement
    from its own RNG stream keyed by ``(seed, iteration)``, so the result
    does not depend on evaluation order. A resample on which ``metric_fn``
    is undefined (returns NaN or raises ``ValueError``/``ZeroDivisionError``)
    is redrawn from the same stream; the number of redraws is reported.
    """
    n = len(patients)
    if n == 0:
        raise ValueError("bootstrap needs at least one patient")
    pool = patients if isinstance(patients, np.ndarray) else None

    def subset(idx):
        return pool[idx] if pool is not None else [patients[i] for i in idx]

    def evaluate(sample):
        try:
            v = float(metric_fn(sample))
        except (ValueError, ZeroDivisionError):
            return None
        return None if math.isnan(v) else v

    point = evaluate(patients)
    if point is None:
        raise ValueError("metric is undefined on the full patient set")
    limit = max_redraws if max_redraws is not None else 100 * n_resamples
    stats = np.empty(n_resamples)
    redraws = 0
    for it in range(n_resamples):
        rng = np.random.default_rng([seed, it])
        while True:
            v = evaluate(subset(rng.integers(0, n, size=n)))
            if v is not None:
                break
            redraws += 1
            if redraws > limit:
                raise RuntimeError(f"metric undefined on more than {limit} resamples")
        stats[it] = v
    ordered = np.sort(stats)
    lo = float(nearest_rank(ordered, 100 * alpha / 2))
    hi = float(nearest_rank(ordered, 100 * (1 - alpha / 2)))
    return BootstrapResult(point, lo, hi, n_resamples, redraws, stats)
