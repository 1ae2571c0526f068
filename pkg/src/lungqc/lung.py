"""Per-slice lung detection.

threshold -> disk opening -> disk closing -> component area filter, then
the fraction of the field covered by the cleaned mask decides the flag.
"""

from __future__ import annotations

from dataclasses import asdict, dataclass

import numpy as np
from sklearn.base import BaseEstimator, TransformerMixin
from sklearn.utils.validation import check_is_fitted

from ._validation import check_hu_slice, check_hu_volume
from .morphology import filter_components, morph_close, morph_open


@dataclass(frozen=True)
class LungDetectConfig:
    hu_low: float = -950.0
    hu_high: float = -700.0
    open_radius: int = 2
    close_radius: int = 5
    min_region_frac: float = 0.01
    min_lung_ratio: float = 0.05
    connectivity: int = 8

    def __post_init__(self):
        if not self.hu_low < self.hu_high:
            raise ValueError(f"hu_low ({self.hu_low}) must be below hu_high ({self.hu_high})")
        for name in ("open_radius", "close_radius"):
            v = getattr(self, name)
            if int(v) != v or v < 1:
                raise ValueError(f"{name} must be an integer >= 1, got {v!r}")
        for name in ("min_region_frac", "min_lung_ratio"):
            v = getattr(self, name)
            if not 0 < v < 1:
                raise ValueError(f"{name} must lie in (0, 1), got {v!r}")
        if self.connectivity not in (4, 8):
            raise ValueError(f"connectivity must be 4 or 8, got {self.connectivity!r}")


@dataclass(frozen=True)
class SliceLungStats:
    mask: np.ndarray
    area_ratio: float
    lung_flag: bool


def threshold_hu(hu, low=-950.0, high=-700.0):
    """Inclusive HU band mask."""
    if not low < high:
        raise ValueError("low must be below high")
    hu = np.asarray(hu)
    return (hu >= low) & (hu <= high)


def clean_mask(mask, cfg):
    mask = morph_open(mask, cfg.open_radius)
    mask = morph_close(mask, cfg.close_radius)
    return filter_components(mask, cfg.min_region_frac, cfg.connectivity)


def detect_lung_slice(hu, cfg=None):
    """Run the full per-slice detector on one HU slice."""
    cfg = cfg or LungDetectConfig()
    data = hu.data if hasattr(hu, "data") else hu
    data = check_hu_slice(data)
    raw = threshold_hu(data, cfg.hu_low, cfg.hu_high)
    if raw.any():
        mask = clean_mask(raw, cfg)
    else:
        mask = raw  # opening of an empty mask is empty
    ratio = int(np.count_nonzero(mask)) / mask.size
    return SliceLungStats(mask=mask, area_ratio=ratio, lung_flag=ratio >= cfg.min_lung_ratio)


class LungSliceDetector(TransformerMixin, BaseEstimator):
    """Stateless transformer over stacks of HU slices.

    ``transform`` returns cleaned lung masks, ``predict`` the per-slice
    lung flags and ``area_ratio`` the covered fraction of each slice.
    Inputs are ``(depth, rows, cols)`` arrays; a single 2-D slice is
    treated as depth 1.

    Examples
    --------
    >>> import numpy as np
    >>> det = LungSliceDetector().fit()
    >>> det.predict(np.full((2, 64, 64), -800.0)).tolist()
    [True, True]
    """

    def __init__(self, hu_low=-950.0, hu_high=-700.0, open_radius=2, close_radius=5,
                 min_region_frac=0.01, min_lung_ratio=0.05, connectivity=8):
        self.hu_low = hu_low
        self.hu_high = hu_high
        self.open_radius = open_radius
        self.close_radius = close_radius
        self.min_region_frac = min_region_frac
        self.min_lung_ratio = min_lung_ratio
        self.connectivity = connectivity

    @classmethod
    def from_config(cls, cfg):
        return cls(**asdict(cfg))

    def fit(self, X=None, y=None):
        self.config_ = LungDetectConfig(**self.get_params())
        if X is not None:
            X = check_hu_volume(X)
            self.n_features_in_ = X.shape[1] * X.shape[2]
        return self

    def slice_stats(self, X):
        check_is_fitted(self, "config_")
        return [detect_lung_slice(s, self.config_) for s in check_hu_volume(X)]

    def transform(self, X):
        stats = self.slice_stats(X)
        return np.stack([s.mask for s in stats]) if stats else np.zeros((0, 0, 0), bool)

    def area_ratio(self, X):
        return np.array([s.area_ratio for s in self.slice_stats(X)])

    def predict(self, X):
        return np.array([s.lung_flag for s in self.slice_stats(X)], dtype=bool)
