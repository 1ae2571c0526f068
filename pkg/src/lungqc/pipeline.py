"""End-to-end QC run: scan, assemble, gate, detect, export, report."""

from __future__ import annotations

import logging
import os
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field, fields
from pathlib import Path

from .dicom import assemble_series, scan_directory
from .errors import LungQCError, SeriesError
from .export import WindowConfig, export_block, write_montage_pgm
from .lung import LungDetectConfig
from .report import (
    REPORT_FILENAME,
    SUMMARY_FILENAME,
    QcRecord,
    summarize,
    write_qc_csv,
    write_summary,
)
from .series_qc import GateConfig, SeriesOutcome, process_series

logger = logging.getLogger(__name__)

CONFIG_ENV_VAR = "VIRTUAL_EYES_CONFIG"
MONTAGE_FILENAME = "montage.pgm"


class ConfigError(LungQCError):
    code = "CONFIG_ERROR"


@dataclass(frozen=True)
class PipelineConfig:
    hu_low: float = -950.0
    hu_high: float = -700.0
    open_radius: int = 2
    close_radius: int = 5
    min_region_frac: float = 0.01
    min_lung_ratio: float = 0.05
    connectivity: int = 8
    min_slices: int = 64
    required_matrix: tuple = (512, 512)
    min_block: int = 20
    center: float = -500.0
    width: float = 1500.0
    workers: int = field(default_factory=lambda: os.cpu_count() or 1)
    overwrite: bool = False
    montage_columns: int = 10

    def __post_init__(self):
        if self.workers < 1:
            raise ValueError("workers must be >= 1")
        if self.montage_columns < 1:
            raise ValueError("montage_columns must be >= 1")
        # sub-config constructors do the range checks
        _ = (self.detect, self.gate, self.window)

    @property
    def detect(self):
        return LungDetectConfig(self.hu_low, self.hu_high, self.open_radius, self.close_radius,
                                self.min_region_frac, self.min_lung_ratio, self.connectivity)

    @property
    def gate(self):
        return GateConfig(self.min_slices, self.required_matrix, self.min_block)

    @property
    def window(self):
        return WindowConfig(self.center, self.width)


def _parse_bool(text):
    t = text.strip().lower()
    if t in ("1", "true", "yes", "on"):
        return True
    if t in ("0", "false", "no", "off"):
        return False
    raise ValueError(f"not a boolean: {text!r}")


def _parse_matrix(text):
    parts = text.lower().replace("x", ",").split(",")
    if len(parts) != 2:
        raise ValueError(f"matrix must look like 512x512, got {text!r}")
    return tuple(int(p) for p in parts)


_PARSERS = {
    "float": float,
    "int": int,
    "bool": _parse_bool,
    "tuple": _parse_matrix,
}


def parse_config(text, source="<config>"):
    """Parse ``key = value`` lines into a :class:`PipelineConfig` kwargs dict.

    ``#`` starts a comment. Unknown keys and malformed values raise
    :class:`ConfigError`.
    """
    types = {f.name: f.type for f in fields(PipelineConfig)}
    values = {}
    for lineno, line in enumerate(text.splitlines(), start=1):
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"{source}:{lineno}: expected 'key = value'")
        key, value = (s.strip() for s in line.split("=", 1))
        if key not in types:
            raise ConfigError(f"{source}:{lineno}: unknown key {key!r}")
        try:
            values[key] = _PARSERS[types[key]](value)
        except ValueError as exc:
            raise ConfigError(f"{source}:{lineno}: bad value for {key}: {exc}") from exc
    return values


def load_config(path=None, **overrides):
    """Build a config from ``path`` (or ``$VIRTUAL_EYES_CONFIG``) plus overrides.

    ``None`` overrides are ignored.
    """
    values = {}
    path = path or os.environ.get(CONFIG_ENV_VAR)
    if path:
        try:
            text = Path(path).read_text(encoding="utf-8")
        except OSError as exc:
            raise LungQCError(f"cannot read config {path}: {exc}", code="IO_ERROR") from exc
        values = parse_config(text, str(path))
    values.update({k: v for k, v in overrides.items() if v is not None})
    try:
        return PipelineConfig(**values)
    except ValueError as exc:
        raise ConfigError(str(exc)) from exc


@dataclass
class QcRunResult:
    outcomes: list
    summary: object
    skipped_files: int
    written: list


def process_record(record, cfg, out_root, montages=False):
    """Worker body: one series from file list to exported block."""
    try:
        series = assemble_series(record)
    except SeriesError as exc:
        logger.info("series %s rejected: %s", record.series_uid, exc)
        return SeriesOutcome.rejected(record.series_uid, record.patient_id, exc.code,
                                      len(record.files)), None
    for w in series.warnings:
        logger.warning("series %s: %s", record.series_uid, w)
    outcome, block = process_series(series, cfg.detect, cfg.gate)
    if not outcome.accepted:
        return outcome, None
    path = export_block(outcome, block, out_root, overwrite=cfg.overwrite)
    if montages:
        write_montage_pgm(block, path.with_name(MONTAGE_FILENAME), cfg.montage_columns,
                          cfg.window)
    return outcome, path


def _run_one(args):
    return process_record(*args)


def run_qc(input_dir, output_dir, cfg=None, montages=False):
    """Run the full QC pipeline and write the report files.

    Outputs are ordered by (patient_id, series_uid) regardless of worker
    count or completion order.
    """
    cfg = cfg or PipelineConfig()
    out_root = Path(output_dir)
    scan = scan_directory(input_dir)
    logger.info("found %d series, skipped %d files", len(scan.records), scan.skipped_count)
    try:
        out_root.mkdir(parents=True, exist_ok=True)
    except OSError as exc:
        raise LungQCError(f"cannot create {out_root}: {exc}", code="IO_ERROR") from exc

    jobs = [(rec, cfg, out_root, montages) for rec in scan.records]
    if cfg.workers == 1 or len(jobs) <= 1:
        results = [_run_one(j) for j in jobs]
    else:
        with ProcessPoolExecutor(max_workers=min(cfg.workers, len(jobs))) as pool:
            results = list(pool.map(_run_one, jobs))

    outcomes = [o for o, _ in results]
    records = [QcRecord.from_outcome(o) for o in outcomes]
    summary = summarize(records)
    write_qc_csv(records, out_root / REPORT_FILENAME)
    write_summary(summary, out_root / SUMMARY_FILENAME)
    return QcRunResult(outcomes=outcomes, summary=summary, skipped_files=scan.skipped_count,
                       written=[p for _, p in results if p is not None])
