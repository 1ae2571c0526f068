"""Slice-score tables, patient pooling and within-patient dispersion."""

from __future__ import annotations

import csv
import math
import statistics
from collections import defaultdict
from dataclasses import dataclass
from typing import Optional

import numpy as np
from sklearn.base import BaseEstimator, TransformerMixin

from .errors import (
    EmptyInputError,
    ExportError,
    LabelConflictError,
    ScoreRangeError,
    SchemaError,
)

SCORE_COLUMNS = ("patient_id", "series_uid", "slice_index", "score", "label")
POOLED_COLUMNS = ("patient_id", "score", "label", "method", "k")
POOL_METHODS = ("mean", "max", "topk")


@dataclass(frozen=True)
class ScoreRow:
    patient_id: str
    series_uid: str
    slice_index: int
    score: float
    label: int


@dataclass(frozen=True)
class PatientScore:
    patient_id: str
    score: float
    label: int
    method: str
    k: Optional[int] = None

    def __post_init__(self):
        if self.method not in POOL_METHODS:
            raise ValueError(f"unknown pooling method {self.method!r}")
        if self.method == "topk" and (self.k is None or self.k < 1):
            raise ValueError("topk pooling needs k >= 1")


class ScoreTable:
    """Validated per-slice scores. Rows keep file order."""

    def __init__(self, rows):
        self.rows = list(rows)
        self._validate()

    def __len__(self):
        return len(self.rows)

    def _validate(self):
        seen = set()
        labels = {}
        for r in self.rows:
            if r.slice_index < 0:
                raise SchemaError(f"negative slice_index in {r}")
            if not 0.0 <= r.score <= 1.0:
                raise ScoreRangeError(f"score {r.score} outside [0, 1] for {r.patient_id}")
            if r.label not in (0, 1):
                raise SchemaError(f"label must be 0 or 1, got {r.label}")
            key = (r.patient_id, r.series_uid, r.slice_index)
            if key in seen:
                raise SchemaError(f"duplicate row {key}")
            seen.add(key)
            if labels.setdefault(r.patient_id, r.label) != r.label:
                raise LabelConflictError(f"patient {r.patient_id} has labels 0 and 1")

    def by_patient(self):
        """``{patient_id: (scores, label)}`` with scores in row order."""
        groups = defaultdict(list)
        labels = {}
        for r in self.rows:
            groups[r.patient_id].append(r.score)
            labels[r.patient_id] = r.label
        return {p: (groups[p], labels[p]) for p in sorted(groups)}


def load_scores_csv(path):
    try:
        fh = open(path, newline="", encoding="utf-8")
    except OSError as exc:
        raise ExportError(f"cannot read {path}: {exc}") from exc
    with fh:
        reader = csv.reader(fh)
        header = next(reader, None)
        if tuple(h.strip() for h in header or ()) != SCORE_COLUMNS:
            raise SchemaError(f"{path}: header must be {','.join(SCORE_COLUMNS)}")
        rows = []
        for lineno, row in enumerate(reader, start=2):
            if not row:
                continue
            if len(row) != len(SCORE_COLUMNS):
                raise SchemaError(f"{path}:{lineno}: expected 5 fields, got {len(row)}")
            try:
                score = float(row[3])
                rows.append(ScoreRow(row[0], row[1], int(row[2]), score, int(row[4])))
            except ValueError as exc:
                raise SchemaError(f"{path}:{lineno}: {exc}") from exc
            if not math.isfinite(score):
                raise ScoreRangeError(f"{path}:{lineno}: non-finite score")
    return ScoreTable(rows)


def pool_patient(scores, method="mean", k=None):
    """Pool one patient's slice scores.

    ``topk`` averages the ``k`` largest scores, or all of them when fewer
    than ``k`` exist.
    """
    x = np.asarray(scores, dtype=np.float64)
    if x.size == 0:
        raise EmptyInputError("no slice scores to pool")
    if method == "mean":
        return float(np.mean(x))
    if method == "max":
        return float(np.max(x))
    if method == "topk":
        if k is None or k < 1:
            raise ValueError("topk pooling needs k >= 1")
        top = np.sort(x)[::-1][: int(k)]
        return float(np.mean(top))
    raise ValueError(f"unknown pooling method {method!r}")


def pool_table(table, method="mean", k=None):
    """Pool every patient of ``table``; output sorted by patient_id."""
    if method != "topk":
        k = None
    return [
        PatientScore(pid, pool_patient(scores, method, k), label, method, k)
        for pid, (scores, label) in table.by_patient().items()
    ]


def within_patient_dispersion(table):
    """Median over patients of the sample std (n-1) of slice scores.

    Patients with a single slice contribute 0.
    """
    groups = table.by_patient()
    if not groups:
        raise EmptyInputError("score table is empty")
    stds = [statistics.stdev(s) if len(s) > 1 else 0.0 for s, _ in groups.values()]
    return float(statistics.median(stds))


def write_pooled_csv(patient_scores, path):
    try:
        with open(path, "w", newline="", encoding="utf-8") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(POOLED_COLUMNS)
            for p in sorted(patient_scores, key=lambda p: p.patient_id):
                w.writerow([p.patient_id, repr(p.score), p.label, p.method,
                            "" if p.k is None else p.k])
    except OSError as exc:
        raise ExportError(f"cannot write {path}: {exc}") from exc


def load_pooled_csv(path):
    try:
        fh = open(path, newline="", encoding="utf-8")
    except OSError as exc:
        raise ExportError(f"cannot read {path}: {exc}") from exc
    out = []
    with fh:
        reader = csv.reader(fh)
        header = next(reader, None)
        if tuple(header or ()) != POOLED_COLUMNS:
            raise SchemaError(f"{path}: header must be {','.join(POOLED_COLUMNS)}")
        for lineno, row in enumerate(reader, start=2):
            if not row:
                continue
            try:
                pid, score, label, method, k = row
                out.append(PatientScore(pid, float(score), int(label), method,
                                        int(k) if k else None))
            except ValueError as exc:
                raise SchemaError(f"{path}:{lineno}: {exc}") from exc
    if len({p.patient_id for p in out}) != len(out):
        raise SchemaError(f"{path}: duplicate patient ids")
    return out


class PatientPooler(TransformerMixin, BaseEstimator):
    """Pool a :class:`ScoreTable` into patient-level scores.

    ``transform`` returns a ``(n_patients,)`` float array ordered by
    patient id; ``patient_ids_`` and ``labels_`` are set alongside.
    """

    def __init__(self, method="mean", k=None):
        self.method = method
        self.k = k

    def fit(self, X, y=None):
        if self.method not in POOL_METHODS:
            raise ValueError(f"unknown pooling method {self.method!r}")
        if self.method == "topk" and (self.k is None or self.k < 1):
            raise ValueError("topk pooling needs k >= 1")
        return self

    def transform(self, X):
        pooled = pool_table(X, self.method, self.k)
        self.patient_ids_ = [p.patient_id for p in pooled]
        self.labels_ = np.array([p.label for p in pooled], dtype=int)
        return np.array([p.score for p in pooled], dtype=float)
