"""Lung-block persistence: int16 NPY volumes, lung-window montages."""

from __future__ import annotations

import ast
import math
import os
import struct
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .errors import DuplicateOutputError, ExportError

NPY_MAGIC = b"\x93NUMPY"
BLOCK_FILENAME = "lung_block.npy"
INT16_MIN, INT16_MAX = -32768, 32767


@dataclass(frozen=True)
class WindowConfig:
    center: float = -500.0
    width: float = 1500.0

    def __post_init__(self):
        if not self.width > 0:
            raise ValueError(f"window width must be positive, got {self.width}")

    @property
    def lower(self):
        return self.center - self.width / 2


@dataclass
class LungBlock:
    voxels: np.ndarray  # int16, (depth, rows, cols)
    series_uid: str = ""
    patient_id: str = ""
    source_block: tuple = (0, 0)

    @property
    def depth(self):
        return self.voxels.shape[0]


def round_half_away(x):
    """Round to nearest integer, halves away from zero. Returns float64."""
    x = np.asarray(x, dtype=np.float64)
    whole = np.trunc(x)
    frac = x - whole  # exact for binary floats
    return whole + np.where(np.abs(frac) >= 0.5, np.sign(x), 0.0)


def quantize_hu(hu):
    return np.clip(round_half_away(hu), INT16_MIN, INT16_MAX).astype(np.int16)


def quantize_block(slices, block_range, series_uid="", patient_id=""):
    """Round and clamp the HU slices ``block_range`` (inclusive) to int16."""
    start, end = block_range
    if not 0 <= start <= end < len(slices):
        raise ValueError(f"block {block_range} outside 0..{len(slices) - 1}")
    data = [s.data if hasattr(s, "data") else s for s in slices[start : end + 1]]
    return LungBlock(voxels=quantize_hu(np.stack(data)), series_uid=series_uid,
                     patient_id=patient_id, source_block=(start, end))


# -- NPY ---------------------------------------------------------------------

def npy_header(shape, descr="<i2"):
    """Version 1.0 header bytes (magic through the trailing newline)."""
    text = f"{{'descr': '{descr}', 'fortran_order': False, 'shape': {tuple(shape)!r}, }}"
    preamble = len(NPY_MAGIC) + 2 + 2
    total = preamble + len(text) + 1
    text += " " * (-total % 64) + "\n"
    if len(text) > 0xFFFF:
        raise ValueError("header too long for NPY v1.0")
    return NPY_MAGIC + b"\x01\x00" + struct.pack("<H", len(text)) + text.encode("latin1")


def write_npy_int16(voxels, path):
    """Write a C-ordered little-endian int16 NPY v1.0 file."""
    if isinstance(voxels, LungBlock):
        voxels = voxels.voxels
    arr = np.ascontiguousarray(voxels, dtype="<i2")
    try:
        with open(path, "wb") as fh:
            fh.write(npy_header(arr.shape))
            fh.write(arr.tobytes(order="C"))
    except OSError as exc:
        raise ExportError(f"cannot write {path}: {exc}") from exc


def read_npy_int16(path):
    """Read an int16 NPY v1.x/2.x file written in C order."""
    try:
        with open(path, "rb") as fh:
            raw = fh.read()
    except OSError as exc:
        raise ExportError(f"cannot read {path}: {exc}") from exc
    if raw[:6] != NPY_MAGIC:
        raise ExportError(f"{path} is not an NPY file")
    major = raw[6]
    if major == 1:
        (hlen,) = struct.unpack_from("<H", raw, 8)
        start = 10
    else:
        (hlen,) = struct.unpack_from("<I", raw, 8)
        start = 12
    header = ast.literal_eval(raw[start : start + hlen].decode("latin1"))
    if header.get("fortran_order"):
        raise ExportError("Fortran-ordered arrays are not supported")
    dtype = np.dtype(header["descr"])
    if dtype.kind != "i" or dtype.itemsize != 2:
        raise ExportError(f"expected int16 data, got {header['descr']}")
    shape = tuple(header["shape"])
    data = np.frombuffer(raw, dtype=dtype, offset=start + hlen, count=math.prod(shape))
    return data.reshape(shape).astype(np.int16)


def block_path(out_root, patient_id, series_uid):
    return Path(out_root) / patient_id / series_uid / BLOCK_FILENAME


def export_block(outcome, block, out_root, overwrite=False):
    """Write ``block`` to ``out_root/<patient_id>/<series_uid>/lung_block.npy``."""
    if not outcome.accepted:
        raise ValueError(f"series {outcome.series_uid} was rejected; nothing to export")
    path = block_path(out_root, outcome.patient_id, outcome.series_uid)
    try:
        path.parent.mkdir(parents=True, exist_ok=True)
    except OSError as exc:
        raise ExportError(f"cannot create {path.parent}: {exc}") from exc
    if path.exists() and not overwrite:
        raise DuplicateOutputError(f"{path} already exists")
    # write-then-rename keeps a concurrent reader from seeing a partial file
    tmp = path.with_name(f".{path.name}.{os.getpid()}.tmp")
    write_npy_int16(block, tmp)
    os.replace(tmp, path)
    return path


# -- display -----------------------------------------------------------------

def window_rescale(hu, cfg=None):
    """Clip to the window and map linearly onto 0..255 (uint8)."""
    cfg = cfg or WindowConfig()
    lower = cfg.lower
    v = np.clip(np.asarray(hu, dtype=np.float64), lower, lower + cfg.width)
    return round_half_away((v - lower) / cfg.width * 255.0).astype(np.uint8)


def montage(voxels, columns=10, cfg=None):
    """Tile windowed slices row-major into one uint8 image."""
    if columns < 1:
        raise ValueError("columns must be >= 1")
    if isinstance(voxels, LungBlock):
        voxels = voxels.voxels
    depth, rows, cols = voxels.shape
    grid_rows = math.ceil(depth / columns)
    img = np.zeros((grid_rows * rows, columns * cols), dtype=np.uint8)
    for i in range(depth):
        r, c = divmod(i, columns)
        img[r * rows : (r + 1) * rows, c * cols : (c + 1) * cols] = window_rescale(voxels[i], cfg)
    return img


def write_pgm(image, path):
    image = np.asarray(image, dtype=np.uint8)
    h, w = image.shape
    try:
        with open(path, "wb") as fh:
            fh.write(f"P5\n{w} {h}\n255\n".encode("ascii"))
            fh.write(image.tobytes())
    except OSError as exc:
        raise ExportError(f"cannot write {path}: {exc}") from exc


def write_montage_pgm(block, path, columns=10, cfg=None):
    write_pgm(montage(block, columns, cfg), path)
