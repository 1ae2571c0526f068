"""Discrimination, calibration, distribution-shift and agreement statistics.

AUC follows the Mann-Whitney convention (ties count one half) and is
computed from exact integer pair counts, so the trapezoidal ROC area and
the pair-count AUC agree to the last bit.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Optional

import numpy as np

from ._validation import (
    check_both_classes,
    check_consistent_length,
    check_labels,
    check_probabilities,
    check_scores,
)
from .errors import DegenerateVarianceError, EmptyInputError, StatsError

_PAIR_BUDGET = 1 << 22  # max pairs compared per chunk


@dataclass(frozen=True)
class RocCurve:
    thresholds: np.ndarray  # descending, first entry +inf
    fpr: np.ndarray
    tpr: np.ndarray
    auc: float


@dataclass(frozen=True)
class DeLongResult:
    auc_a: float
    auc_b: float
    delta: float
    variance: float
    z: float
    p_two_sided: float


@dataclass(frozen=True)
class KsResult:
    d: float
    p: float


@dataclass(frozen=True)
class BaStats:
    bias: float
    sd: float
    loa_low: float
    loa_high: float
    means: np.ndarray
    diffs: np.ndarray


@dataclass(frozen=True)
class ConfusionMetrics:
    accuracy: float
    sensitivity: Optional[float]
    specificity: Optional[float]
    threshold: float
    tp: int
    fp: int
    tn: int
    fn: int


def _split(scores, labels):
    s = check_scores(scores)
    y = check_labels(labels)
    check_consistent_length(s, y)
    check_both_classes(y)
    return s[y == 1], s[y == 0]


def _doubled_pair_counts(pos, neg):
    """Per-positive and per-negative counts of ``2*[p > n] + [p == n]``."""
    per_pos = np.zeros(len(pos), dtype=np.int64)
    per_neg = np.zeros(len(neg), dtype=np.int64)
    step = max(1, _PAIR_BUDGET // max(1, len(neg)))
    for i in range(0, len(pos), step):
        p = pos[i : i + step, None]
        psi2 = 2 * (p > neg).astype(np.int64) + (p == neg)
        per_pos[i : i + step] = psi2.sum(axis=1)
        per_neg += psi2.sum(axis=0)
    return per_pos, per_neg


def placement_values(scores, labels):
    """DeLong structural components.

    Returns ``(v10, v01)``: for each positive, the fraction of negatives it
    outranks; for each negative, the fraction of positives outranking it
    (ties counting one half).
    """
    pos, neg = _split(scores, labels)
    per_pos, per_neg = _doubled_pair_counts(pos, neg)
    return per_pos / (2.0 * len(neg)), per_neg / (2.0 * len(pos))


def auc(scores, labels):
    """Mann-Whitney AUC over all positive/negative pairs."""
    pos, neg = _split(scores, labels)
    per_pos, _ = _doubled_pair_counts(pos, neg)
    return int(per_pos.sum()) / (2.0 * len(pos) * len(neg))


def roc_curve(scores, labels):
    """ROC operating points, one per distinct score, from (0, 0) to (1, 1)."""
    pos, neg = _split(scores, labels)
    s = np.concatenate([pos, neg])
    y = np.concatenate([np.ones(len(pos), np.int64), np.zeros(len(neg), np.int64)])
    order = np.argsort(-s, kind="stable")
    s, y = s[order], y[order]
    # last index of each run of equal scores
    last = np.flatnonzero(np.r_[s[1:] != s[:-1], True])
    tp = np.r_[0, np.cumsum(y)[last]]
    fp = np.r_[0, (last + 1) - tp[1:]]
    P, N = len(pos), len(neg)
    doubled_area = int(np.sum(np.diff(fp) * (tp[1:] + tp[:-1])))
    return RocCurve(
        thresholds=np.r_[np.inf, s[last]],
        fpr=fp / N,
        tpr=tp / P,
        auc=doubled_area / (2.0 * P * N),
    )


def _normal_two_sided(z):
    return math.erfc(abs(z) / math.sqrt(2.0))


def delong_test(scores_a, scores_b, labels):
    """DeLong test for two correlated AUCs on the same subjects.

    Raises
    ------
    DegenerateVarianceError
        The variance of the AUC difference is zero, e.g. identical score
        vectors; no test is possible.
    """
    a = check_scores(scores_a, "scores_a")
    b = check_scores(scores_b, "scores_b")
    y = check_labels(labels)
    check_consistent_length(a, b, y)
    m, n = check_both_classes(y)

    v10_a, v01_a = placement_values(a, y)
    v10_b, v01_b = placement_values(b, y)
    auc_a, auc_b = auc(a, y), auc(b, y)
    # Var(A - B) = S10[aa] + S10[bb] - 2 S10[ab] over m, same for S01 over n;
    # taking the variance of the differenced components is the same quantity.
    d10, d01 = v10_a - v10_b, v01_a - v01_b
    s10 = float(np.var(d10, ddof=1)) if m > 1 else 0.0
    s01 = float(np.var(d01, ddof=1)) if n > 1 else 0.0
    variance = s10 / m + s01 / n
    delta = auc_a - auc_b
    if not variance > 0:
        raise DegenerateVarianceError("variance of the AUC difference is zero")
    z = delta / math.sqrt(variance)
    return DeLongResult(auc_a, auc_b, delta, variance, z, _normal_two_sided(z))


def delong_covariance(scores_a, scores_b, labels):
    """2x2 covariance matrix of the two AUC estimates."""
    y = check_labels(labels)
    m, n = check_both_classes(y)
    v10_a, v01_a = placement_values(scores_a, y)
    v10_b, v01_b = placement_values(scores_b, y)
    return np.cov(np.vstack([v10_a, v10_b])) / m + np.cov(np.vstack([v01_a, v01_b])) / n


def brier(probs, labels):
    p = check_probabilities(probs)
    y = check_labels(labels)
    check_consistent_length(p, y)
    return float(np.mean((p - y) ** 2))


def kolmogorov_sf(lam, tol=1e-12):
    """Survival function of the Kolmogorov distribution, P(K > lam)."""
    if lam <= 0:
        return 1.0
    if lam < 1.0:
        # Jacobi theta form converges fast for small lam
        c = math.pi**2 / (8.0 * lam * lam)
        total, j = 0.0, 1
        while True:
            term = math.exp(-((2 * j - 1) ** 2) * c)
            total += term
            if term < tol:
                break
            j += 1
        return max(0.0, min(1.0, 1.0 - math.sqrt(2.0 * math.pi) / lam * total))
    total, j = 0.0, 1
    while True:
        term = math.exp(-2.0 * j * j * lam * lam)
        total += term if j % 2 else -term
        if term < tol:
            break
        j += 1
    return max(0.0, min(1.0, 2.0 * total))


def ecdf_gap(a, b):
    """Largest |ECDF_a - ECDF_b| over the pooled sample points."""
    a, b = np.sort(a), np.sort(b)
    x = np.concatenate([a, b])
    fa = np.searchsorted(a, x, side="right") / len(a)
    fb = np.searchsorted(b, x, side="right") / len(b)
    return float(np.max(np.abs(fa - fb)))


def ks_two_sample(a, b):
    """Two-sample KS statistic with the asymptotic two-sided p-value.

    The p-value is floored at the smallest positive double so it stays in
    (0, 1].
    """
    a = check_scores(a, "a")
    b = check_scores(b, "b")
    d = ecdf_gap(a, b)
    n_eff = len(a) * len(b) / (len(a) + len(b))
    p = kolmogorov_sf(math.sqrt(n_eff) * d)
    return KsResult(d=d, p=max(p, np.finfo(float).tiny))


def bland_altman(a, b, z=1.96):
    """Agreement of ``b`` against ``a``: bias of ``b - a`` and limits."""
    a = np.asarray(a, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    check_consistent_length(a, b)
    if a.size == 0:
        raise EmptyInputError("no paired values")
    if a.size < 2:
        raise StatsError("need at least two pairs for a standard deviation")
    diffs = b - a
    bias = float(np.mean(diffs))
    sd = float(np.std(diffs, ddof=1))
    return BaStats(bias=bias, sd=sd, loa_low=bias - z * sd, loa_high=bias + z * sd,
                   means=(a + b) / 2.0, diffs=diffs)


def confusion_metrics(probs, labels, threshold=0.5):
    """Accuracy, sensitivity and specificity at ``prob >= threshold``.

    Rates with a zero denominator come back as ``None``.
    """
    p = check_scores(probs, "probs")
    y = check_labels(labels)
    check_consistent_length(p, y)
    pred = p >= threshold
    pos = y == 1
    tp = int(np.sum(pred & pos))
    fn = int(np.sum(~pred & pos))
    tn = int(np.sum(~pred & ~pos))
    fp = int(np.sum(pred & ~pos))
    return ConfusionMetrics(
        accuracy=(tp + tn) / len(y),
        sensitivity=tp / (tp + fn) if tp + fn else None,
        specificity=tn / (tn + fp) if tn + fp else None,
        threshold=float(threshold),
        tp=tp, fp=fp, tn=tn, fn=fn,
    )
