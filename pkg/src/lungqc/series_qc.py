"""Series gates, longest lung block and the accept/reject decision."""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Optional

import numpy as np
from sklearn.base import BaseEstimator, TransformerMixin
from sklearn.utils.validation import check_is_fitted

from ._validation import check_hu_volume
from .dicom import is_axial
from .export import quantize_block
from .lung import LungDetectConfig, detect_lung_slice


ACCEPTED = "accepted"
REJECTED = "rejected"

REJECTION_REASONS = (
    "TOO_FEW_SLICES",
    "BAD_MATRIX",
    "NOT_AXIAL",
    "UNSUPPORTED_TRANSFER_SYNTAX",
    "MALFORMED_SERIES",
    "MISSING_GEOMETRY",
    "NO_LUNG_BLOCK",
    "BLOCK_TOO_SHORT",
)


@dataclass(frozen=True)
class GateConfig:
    min_slices: int = 64
    required_matrix: tuple = (512, 512)
    min_block: int = 20

    def __post_init__(self):
        if self.min_slices < 1:
            raise ValueError("min_slices must be >= 1")
        if self.min_block < 1:
            raise ValueError("min_block must be >= 1")
        object.__setattr__(self, "required_matrix", tuple(int(v) for v in self.required_matrix))
        if len(self.required_matrix) != 2 or min(self.required_matrix) < 1:
            raise ValueError(f"bad required_matrix {self.required_matrix!r}")


@dataclass(frozen=True)
class SeriesOutcome:
    series_uid: str
    patient_id: str
    status: str
    reason: Optional[str]
    original_slices: int
    kept_slices: int
    block: Optional[tuple] = None
    warnings: tuple = field(default=())

    @property
    def accepted(self):
        return self.status == ACCEPTED

    @classmethod
    def rejected(cls, series_uid, patient_id, reason, original_slices, warnings=()):
        if reason not in REJECTION_REASONS:
            raise ValueError(f"unknown rejection reason {reason!r}")
        return cls(series_uid, patient_id, REJECTED, reason, original_slices, 0, None,
                   tuple(warnings))


def gate_series(series, cfg=None):
    """Scanner-level gates. Returns ``None`` on pass, else a reason code.

    Checked in order: slice count, matrix, orientation.
    """
    cfg = cfg or GateConfig()
    if len(series.slices) < cfg.min_slices:
        return "TOO_FEW_SLICES"
    if tuple(series.matrix) != cfg.required_matrix:
        return "BAD_MATRIX"
    if not is_axial(series.orientation):
        return "NOT_AXIAL"
    return None


def extract_longest_block(flags):
    """Longest run of True values as inclusive ``(start, end)``.

    Ties go to the earliest run; ``None`` when no flag is set.
    """
    flags = np.asarray(flags, dtype=bool)
    if not flags.any():
        return None
    padded = np.concatenate(([False], flags, [False])).astype(np.int8)
    edges = np.diff(padded)
    starts = np.flatnonzero(edges == 1)
    ends = np.flatnonzero(edges == -1) - 1
    best = int(np.argmax(ends - starts))  # argmax returns the first maximum
    return int(starts[best]), int(ends[best])


def slice_flags(volume, detect_cfg=None):
    detect_cfg = detect_cfg or LungDetectConfig()
    return np.array([detect_lung_slice(s, detect_cfg).lung_flag for s in volume], dtype=bool)


def decide(series_uid, patient_id, flags, min_block, warnings=()):
    """Turn per-slice flags into an outcome (gates assumed passed)."""
    n = len(flags)
    block = extract_longest_block(flags)
    if block is None:
        return SeriesOutcome.rejected(series_uid, patient_id, "NO_LUNG_BLOCK", n, warnings)
    kept = block[1] - block[0] + 1
    if kept < min_block:
        return SeriesOutcome.rejected(series_uid, patient_id, "BLOCK_TOO_SHORT", n, warnings)
    return SeriesOutcome(series_uid, patient_id, ACCEPTED, None, n, kept, block, tuple(warnings))


def process_series(series, detect_cfg=None, gate_cfg=None):
    """Gate, detect and trim one assembled series.

    Returns ``(outcome, block)``; ``block`` is the int16
    :class:`~lungqc.export.LungBlock` for accepted series, else ``None``.
    """
    detect_cfg = detect_cfg or LungDetectConfig()
    gate_cfg = gate_cfg or GateConfig()
    warnings = tuple(getattr(series, "warnings", ()))
    reason = gate_series(series, gate_cfg)
    if reason is not None:
        return SeriesOutcome.rejected(series.series_uid, series.patient_id, reason,
                                      len(series.slices), warnings), None
    flags = [detect_lung_slice(s, detect_cfg).lung_flag for s in series.slices]
    outcome = decide(series.series_uid, series.patient_id, flags, gate_cfg.min_block, warnings)
    if not outcome.accepted:
        return outcome, None
    block = quantize_block(series.slices, outcome.block, series.series_uid, series.patient_id)
    return outcome, block


class LungBlockExtractor(TransformerMixin, BaseEstimator):
    """Fit on a ``(depth, rows, cols)`` HU volume; transform trims it to the
    longest contiguous lung block.

    After ``fit``: ``flags_`` (per-slice lung flags), ``block_`` (inclusive
    start/end or ``None``), ``reason_`` (rejection code or ``None``).
    Transforming a rejected volume raises ``ValueError``.
    """

    def __init__(self, hu_low=-950.0, hu_high=-700.0, open_radius=2, close_radius=5,
                 min_region_frac=0.01, min_lung_ratio=0.05, connectivity=8,
                 min_slices=64, required_matrix=(512, 512), min_block=20):
        self.hu_low = hu_low
        self.hu_high = hu_high
        self.open_radius = open_radius
        self.close_radius = close_radius
        self.min_region_frac = min_region_frac
        self.min_lung_ratio = min_lung_ratio
        self.connectivity = connectivity
        self.min_slices = min_slices
        self.required_matrix = required_matrix
        self.min_block = min_block

    def _configs(self):
        p = self.get_params()
        gate = GateConfig(*(p.pop(k) for k in ("min_slices", "required_matrix", "min_block")))
        return LungDetectConfig(**p), gate

    def fit(self, X, y=None):
        detect_cfg, gate_cfg = self._configs()
        X = check_hu_volume(X)
        self.n_slices_in_ = X.shape[0]
        self.flags_ = np.zeros(X.shape[0], dtype=bool)
        self.block_ = None
        if X.shape[0] < gate_cfg.min_slices:
            self.reason_ = "TOO_FEW_SLICES"
        elif X.shape[1:] != gate_cfg.required_matrix:
            self.reason_ = "BAD_MATRIX"
        else:
            self.flags_ = slice_flags(X, detect_cfg)
            out = decide("", "", self.flags_, gate_cfg.min_block)
            self.reason_ = out.reason
            self.block_ = out.block
        return self

    def transform(self, X):
        check_is_fitted(self, "flags_")
        X = check_hu_volume(X)
        if X.shape[0] != self.n_slices_in_:
            raise ValueError(f"fitted on {self.n_slices_in_} slices, got {X.shape[0]}")
        if self.block_ is None:
            raise ValueError(f"volume was rejected ({self.reason_}); nothing to transform")
        start, end = self.block_
        return X[start : end + 1]
