"""QC CSV report and corpus-level summary."""

from __future__ import annotations

import csv
from dataclasses import dataclass, fields
from pathlib import Path

from .errors import ExportError, SchemaError

QC_COLUMNS = ("patient_id", "series_uid", "status", "reason", "original_slices", "kept_slices")
REPORT_FILENAME = "qc_report.csv"
SUMMARY_FILENAME = "qc_summary.txt"


@dataclass(frozen=True)
class QcRecord:
    patient_id: str
    series_uid: str
    status: str
    reason: str
    original_slices: int
    kept_slices: int

    def __post_init__(self):
        if self.status not in ("accepted", "rejected"):
            raise ValueError(f"bad status {self.status!r}")
        if not 0 <= self.kept_slices <= self.original_slices:
            raise ValueError("kept_slices must lie in [0, original_slices]")
        if self.status == "rejected" and self.kept_slices != 0:
            raise ValueError("rejected series cannot keep slices")

    @classmethod
    def from_outcome(cls, outcome):
        return cls(outcome.patient_id, outcome.series_uid, outcome.status,
                   outcome.reason or "", outcome.original_slices, outcome.kept_slices)


@dataclass(frozen=True)
class QcSummary:
    total_series: int = 0
    accepted_series: int = 0
    total_raw_images: int = 0
    total_kept_images: int = 0
    discard_proportion: float = 0.0

    def as_text(self):
        return "".join(f"{f.name}={getattr(self, f.name)!r}\n" for f in fields(self))


def _sort_key(rec):
    return rec.patient_id, rec.series_uid


def write_qc_csv(records, path):
    try:
        with open(path, "w", newline="", encoding="utf-8") as fh:
            writer = csv.writer(fh, lineterminator="\n")
            writer.writerow(QC_COLUMNS)
            for r in sorted(records, key=_sort_key):
                writer.writerow([getattr(r, c) for c in QC_COLUMNS])
    except OSError as exc:
        raise ExportError(f"cannot write {path}: {exc}") from exc


def read_qc_csv(path):
    try:
        with open(path, newline="", encoding="utf-8") as fh:
            reader = csv.reader(fh)
            header = next(reader, None)
            if tuple(header or ()) != QC_COLUMNS:
                raise SchemaError(f"{path}: unexpected header {header}")
            out = []
            for row in reader:
                if len(row) != len(QC_COLUMNS):
                    raise SchemaError(f"{path}: bad row {row}")
                out.append(QcRecord(row[0], row[1], row[2], row[3], int(row[4]), int(row[5])))
            return out
    except OSError as exc:
        raise ExportError(f"cannot read {path}: {exc}") from exc
    except ValueError as exc:
        raise SchemaError(f"{path}: {exc}") from exc


def summarize(records):
    records = list(records)
    raw = sum(r.original_slices for r in records)
    kept = sum(r.kept_slices for r in records)
    return QcSummary(
        total_series=len(records),
        accepted_series=sum(r.status == "accepted" for r in records),
        total_raw_images=raw,
        total_kept_images=kept,
        discard_proportion=1.0 - kept / raw if raw > 0 else 0.0,
    )


def write_summary(summary, path):
    try:
        Path(path).write_text(summary.as_text(), encoding="utf-8")
    except OSError as exc:
        raise ExportError(f"cannot write {path}: {exc}") from exc
