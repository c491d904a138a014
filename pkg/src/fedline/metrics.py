"""Imbalanced binary-classification measurements and the equivalence tests
used to compare federated against centralized models.

ACC/PRE/F1/MCC come straight from the 2x2 confusion table; AUC uses the
rank (Mann-Whitney) formulation; stability is the per-time-group accuracy
series with its population variance.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from pathlib import Path

import numpy as np
from scipy import stats

from .errors import ContractError, MetricError


@dataclass(frozen=True)
class ConfusionCounts:
    tp: int
    tn: int
    fp: int
    fn: int

    @property
    def total(self) -> int:
        return self.tp + self.tn + self.fp + self.fn


@dataclass(frozen=True)
class MetricsReport:
    acc: float
    pre: float
    f1: float
    mcc: float
    auc: float
    stability_series: tuple[float, ...]
    stability_var: float

    def as_dict(self) -> dict:
        return {"acc": self.acc, "pre": self.pre, "f1": self.f1, "mcc": self.mcc,
                "auc": self.auc, "stability_series": list(self.stability_series),
                "stability_var": self.stability_var}


def confusion(gt, pred) -> ConfusionCounts:
    gt = np.asarray(gt)
    pred = np.asarray(pred)
    if len(gt) != len(pred):
        raise ContractError("gt and pred must have equal length")
    if len(gt) == 0:
        raise ContractError("confusion requires at least one sample")
    tp = int(np.sum((gt == 1) & (pred == 1)))
    tn = int(np.sum((gt == 0) & (pred == 0)))
    fp = int(np.sum((gt == 0) & (pred == 1)))
    fn = int(np.sum((gt == 1) & (pred == 0)))
    return ConfusionCounts(tp, tn, fp, fn)


def acc(c: ConfusionCounts) -> float:
    return (c.tp + c.tn) / c.total


def pre(c: ConfusionCounts) -> float:
    # no positive predictions: precision reported as 0 by convention
    if c.tp + c.fp == 0:
        return 0.0
    return c.tp / (c.tp + c.fp)


def f1(c: ConfusionCounts) -> float:
    denom = 2 * c.tp + c.fp + c.fn
    if denom == 0:
        return 0.0
    return 2 * c.tp / denom


def mcc(c: ConfusionCounts) -> float:
    denom = (c.tp + c.fp) * (c.tp + c.fn) * (c.tn + c.fp) * (c.tn + c.fn)
    if denom == 0:
        return 0.0
    return (c.tp * c.tn - c.fp * c.fn) / float(np.sqrt(denom))


def auc(gt, scores) -> float:
    """P(score+ > score-) + 0.5 * P(equal), identical to trapezoidal ROC area."""
    gt = np.asarray(gt)
    scores = np.asarray(scores, dtype=np.float64)
    if len(gt) != len(scores):
        raise ContractError("gt and scores must have equal length")
    n_pos = int(np.sum(gt == 1))
    n_neg = len(gt) - n_pos
    if n_pos == 0 or n_neg == 0:
        raise MetricError("auc requires at least one sample of each class")
    ranks = stats.rankdata(scores)
    pos_rank_sum = float(np.sum(ranks[gt == 1]))
    return (pos_rank_sum - n_pos * (n_pos + 1) / 2.0) / (n_pos * n_neg)


def stability(gt, pred, timestamps, n_groups: int = 10) -> tuple[tuple[float, ...], float]:
    """Per-group accuracy over n_groups contiguous time-ordered groups, and its
    population variance. Earlier groups take the remainder samples."""
    gt = np.asarray(gt)
    pred = np.asarray(pred)
    timestamps = np.asarray(timestamps)
    n = len(gt)
    if not (len(pred) == n and len(timestamps) == n):
        raise ContractError("gt/pred/timestamps must have equal length")
    if n < n_groups:
        raise ContractError(f"need at least n_groups={n_groups} samples, got {n}")
    order = np.argsort(timestamps, kind="stable")
    correct = (gt[order] == pred[order]).astype(np.float64)
    base = n // n_groups
    extra = n % n_groups
    series = []
    start = 0
    for g in range(n_groups):
        size = base + (1 if g < extra else 0)
        series.append(float(correct[start:start + size].mean()))
        start += size
    series_arr = np.array(series)
    return tuple(series), float(np.mean((series_arr - series_arr.mean()) ** 2))


def evaluate(gt, pred, scores, timestamps, n_groups: int = 10) -> MetricsReport:
    c = confusion(gt, pred)
    series, var = stability(gt, pred, timestamps, n_groups)
    return MetricsReport(acc(c), pre(c), f1(c), mcc(c), auc(gt, scores), series, var)


def group_metrics(gt, pred, scores) -> dict:
    """Metrics for one sample group; AUC/MCC are None when the group has a
    single class (recorded as absent, never fabricated)."""
    c = confusion(gt, pred)
    single_class = (c.tp + c.fn == 0) or (c.tn + c.fp == 0)
    return {
        "acc": acc(c), "pre": pre(c), "f1": f1(c),
        "mcc": None if single_class else mcc(c),
        "auc": None if single_class else auc(gt, scores),
    }


def compare_reports(a: MetricsReport, b: MetricsReport, delta: float,
                    delta_overrides: dict[str, float] | None = None) -> dict:
    """Per-metric |a - b| with a within-threshold verdict; stability is
    compared on its variance. delta_overrides widens named metrics (MCC/AUC)."""
    if delta <= 0:
        raise ContractError("delta must be > 0")
    overrides = delta_overrides or {}
    out = {}
    pairs = {"acc": (a.acc, b.acc), "pre": (a.pre, b.pre), "f1": (a.f1, b.f1),
             "mcc": (a.mcc, b.mcc), "auc": (a.auc, b.auc),
             "stability_var": (a.stability_var, b.stability_var)}
    for name, (va, vb) in pairs.items():
        d = overrides.get(name, delta)
        diff = abs(va - vb)
        out[name] = {"diff": diff, "delta": d, "within": diff < d}
    out["all_within"] = all(v["within"] for v in out.values() if isinstance(v, dict))
    return out


def threshold_t_test(differences, delta: float, alpha: float = 0.05) -> dict:
    """One-sided one-sample t test of mean(differences) against delta.

    H0: mean difference > delta; H1: mean difference < delta. Rejecting H0
    (p < alpha) supports equivalence within the threshold.
    """
    diffs = np.asarray(differences, dtype=np.float64)
    if len(diffs) < 2:
        raise ContractError("need at least 2 differences")
    n = len(diffs)
    mean = float(diffs.mean())
    s = float(diffs.std(ddof=1))
    if s == 0.0:
        return {"statistic": float("nan"), "p_value": float("nan"),
                "reject_h0": mean < delta, "degenerate": True}
    statistic = (mean - delta) / (s / np.sqrt(n))
    p_value = float(stats.t.cdf(statistic, df=n - 1))
    return {"statistic": float(statistic), "p_value": p_value,
            "reject_h0": p_value < alpha, "degenerate": False}


def save_report(r: MetricsReport, path: str | Path) -> None:
    Path(path).write_text(json.dumps(r.as_dict(), indent=2, sort_keys=True) + "\n",
                          encoding="utf-8")


def save_stability_csv(r: MetricsReport, path: str | Path) -> None:
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write("group,accuracy\n")
        for g, v in enumerate(r.stability_series):
            fh.write(f"{g},{v!r}\n")
