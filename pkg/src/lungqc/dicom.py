"""Minimal DICOM Part-10 reader, HU conversion and series assembly.

Only uncompressed little-endian transfer syntaxes are decoded. The reader
pulls the handful of tags the QC pipeline needs and the PixelData payload;
everything else is skipped, including nested sequences.
"""

from __future__ import annotations

import logging
import math
import os
import struct
from dataclasses import dataclass, field
from pathlib import Path
from typing import Optional

import numpy as np

from .errors import (
    DicomError,
    LungQCError,
    MalformedDicomError,
    NotDicomError,
    SeriesError,
    UnsupportedTransferSyntaxError,
)

logger = logging.getLogger(__name__)

IMPLICIT_VR_LE = "1.2.840.10008.1.2"
EXPLICIT_VR_LE = "1.2.840.10008.1.2.1"
EXPLICIT_VR_BE = "1.2.840.10008.1.2.2"
SUPPORTED_TRANSFER_SYNTAXES = (IMPLICIT_VR_LE, EXPLICIT_VR_LE)

# VRs that use a 2-byte reserved field and a 4-byte length in explicit VR.
_LONG_VRS = frozenset(
    {b"OB", b"OD", b"OF", b"OL", b"OV", b"OW", b"SQ", b"SV", b"UC", b"UN", b"UR", b"UT", b"UV"}
)
_UNDEFINED = 0xFFFFFFFF

_ITEM = (0xFFFE, 0xE000)
_ITEM_DELIM = (0xFFFE, 0xE00D)
_SEQ_DELIM = (0xFFFE, 0xE0DD)
_PIXEL_DATA = (0x7FE0, 0x0010)

# tag -> (field name, value kind)
_TAGS = {
    (0x0002, 0x0010): ("transfer_syntax_uid", "str"),
    (0x0008, 0x0018): ("sop_uid", "str"),
    (0x0010, 0x0020): ("patient_id", "str"),
    (0x0020, 0x000E): ("series_uid", "str"),
    (0x0020, 0x0013): ("instance_number", "int"),
    (0x0020, 0x0032): ("image_position_patient", "floats"),
    (0x0020, 0x0037): ("image_orientation_patient", "floats"),
    (0x0028, 0x0010): ("rows", "us"),
    (0x0028, 0x0011): ("cols", "us"),
    (0x0028, 0x0100): ("bits_allocated", "us"),
    (0x0028, 0x0103): ("pixel_representation", "us"),
    (0x0028, 0x1052): ("rescale_intercept", "float"),
    (0x0028, 0x1053): ("rescale_slope", "float"),
}


@dataclass(frozen=True)
class DicomHeader:
    series_uid: str
    sop_uid: str
    patient_id: str
    transfer_syntax_uid: str
    rows: int
    cols: int
    bits_allocated: int
    pixel_representation: int  # 0 unsigned, 1 signed
    rescale_slope: float = 1.0
    rescale_intercept: float = 0.0
    image_position_patient: Optional[tuple] = None
    image_orientation_patient: Optional[tuple] = None
    instance_number: Optional[int] = None

    @property
    def signed(self):
        return self.pixel_representation == 1

    @property
    def pixel_dtype(self):
        kind = "i" if self.signed else "u"
        return np.dtype(f"<{kind}{self.bits_allocated // 8}")

    @property
    def payload_size(self):
        return self.rows * self.cols * (self.bits_allocated // 8)


@dataclass(frozen=True)
class HuSlice:
    data: np.ndarray  # float32, rows x cols
    z: Optional[float]
    source_sop_uid: str
    instance_number: Optional[int] = None


@dataclass
class SeriesRecord:
    series_uid: str
    patient_id: str
    files: list = field(default_factory=list)


@dataclass
class ScanResult:
    records: list
    skipped_count: int = 0
    examined_count: int = 0


@dataclass
class SortedSeries:
    series_uid: str
    patient_id: str
    slices: list
    matrix: tuple
    orientation: Optional[tuple] = None
    warnings: tuple = ()

    def __len__(self):
        return len(self.slices)

    def volume(self):
        """Stack slices into a (depth, rows, cols) float32 array."""
        if not self.slices:
            return np.zeros((0,) + tuple(self.matrix), dtype=np.float32)
        return np.stack([s.data for s in self.slices])


# -- low-level element walking ----------------------------------------------

class _Reader:
    __slots__ = ("buf", "pos", "explicit")

    def __init__(self, buf, pos, explicit):
        self.buf = buf
        self.pos = pos
        self.explicit = explicit

    def need(self, n):
        if self.pos + n > len(self.buf):
            raise MalformedDicomError(f"truncated element at offset {self.pos}")

    def element_header(self):
        """Return (tag, vr, length) and advance past the element header."""
        self.need(8)
        group, elem = struct.unpack_from("<HH", self.buf, self.pos)
        tag = (group, elem)
        if group == 0xFFFE:
            (length,) = struct.unpack_from("<I", self.buf, self.pos + 4)
            self.pos += 8
            return tag, None, length
        if self.explicit:
            vr = bytes(self.buf[self.pos + 4 : self.pos + 6])
            if vr in _LONG_VRS:
                self.need(12)
                (length,) = struct.unpack_from("<I", self.buf, self.pos + 8)
                self.pos += 12
            else:
                (length,) = struct.unpack_from("<H", self.buf, self.pos + 6)
                self.pos += 8
            return tag, vr, length
        (length,) = struct.unpack_from("<I", self.buf, self.pos + 4)
        self.pos += 8
        return tag, None, length

    def value(self, length):
        self.need(length)
        v = self.buf[self.pos : self.pos + length]
        self.pos += length
        return v

    def skip_undefined_sequence(self):
        """Skip items up to and including the sequence delimiter."""
        while True:
            tag, _, length = self.element_header()
            if tag == _SEQ_DELIM:
                return
            if tag != _ITEM:
                raise MalformedDicomError(f"unexpected tag {tag} inside sequence")
            if length == _UNDEFINED:
                self.skip_undefined_item()
            else:
                self.value(length)

    def skip_undefined_item(self):
        while True:
            tag, vr, length = self.element_header()
            if tag == _ITEM_DELIM:
                return
            if length == _UNDEFINED:
                self.skip_undefined_sequence()
            else:
                self.value(length)


def _decode(kind, raw):
    if kind == "us":
        if len(raw) < 2:
            raise MalformedDicomError("short US value")
        return struct.unpack_from("<H", raw)[0]
    text = bytes(raw).decode("ascii", errors="replace").strip(" \x00")
    if kind == "str":
        return text
    if kind == "int":
        return int(text) if text else None
    parts = [p.strip() for p in text.split("\\")]
    try:
        nums = [float(p) for p in parts if p]
    except ValueError as exc:
        raise MalformedDicomError(f"bad numeric string {text!r}") from exc
    if kind == "float":
        return nums[0] if nums else None
    return tuple(nums) if nums else None


def _check_magic(data):
    if len(data) < 132 or bytes(data[128:132]) != b"DICM":
        raise NotDicomError("missing 128-byte preamble / DICM magic")


def _read(data, *, stop_before_pixels, enforce_syntax):
    """Walk the file; return (fields, pixel bytes or None)."""
    buf = memoryview(data)
    _check_magic(buf)
    fields = {}

    # File meta group is always explicit VR little endian.
    rd = _Reader(buf, 132, explicit=True)
    while rd.pos + 2 <= len(buf):
        (group,) = struct.unpack_from("<H", buf, rd.pos)
        if group != 0x0002:
            break
        tag, vr, length = rd.element_header()
        raw = rd.value(length)
        if tag in _TAGS:
            name, kind = _TAGS[tag]
            fields[name] = _decode(kind, raw)

    ts = fields.get("transfer_syntax_uid")
    if not ts:
        raise MalformedDicomError("file meta lacks TransferSyntaxUID (0002,0010)")
    if ts not in SUPPORTED_TRANSFER_SYNTAXES:
        if enforce_syntax:
            raise UnsupportedTransferSyntaxError(f"transfer syntax {ts} is not supported")
        if ts == EXPLICIT_VR_BE:
            raise UnsupportedTransferSyntaxError("big-endian data sets cannot be scanned")
    rd.explicit = ts != IMPLICIT_VR_LE

    pixels = None
    while rd.pos < len(buf):
        tag, vr, length = rd.element_header()
        if tag == _PIXEL_DATA:
            if stop_before_pixels:
                break
            if length == _UNDEFINED:
                raise MalformedDicomError("encapsulated PixelData in an uncompressed syntax")
            pixels = rd.value(length)
            break
        if length == _UNDEFINED:
            # SQ or UN with undefined length; both are encoded as items.
            rd.skip_undefined_sequence()
            continue
        raw = rd.value(length)
        if tag in _TAGS:
            name, kind = _TAGS[tag]
            fields[name] = _decode(kind, raw)
    return fields, pixels


def _build_header(fields):
    for key in ("rows", "cols", "bits_allocated"):
        if key not in fields:
            raise MalformedDicomError(f"required attribute {key} missing")
    rows, cols, bits = fields["rows"], fields["cols"], fields["bits_allocated"]
    if rows <= 0 or cols <= 0:
        raise MalformedDicomError(f"invalid matrix {rows}x{cols}")
    if bits not in (8, 16):
        raise MalformedDicomError(f"BitsAllocated={bits} not supported")
    rep = fields.get("pixel_representation", 0)
    if rep not in (0, 1):
        raise MalformedDicomError(f"PixelRepresentation={rep} invalid")

    ipp = fields.get("image_position_patient")
    if ipp is not None and len(ipp) != 3:
        raise MalformedDicomError("ImagePositionPatient must have 3 values")
    iop = fields.get("image_orientation_patient")
    if iop is not None:
        if len(iop) != 6:
            raise MalformedDicomError("ImageOrientationPatient must have 6 values")
        for vec in (iop[:3], iop[3:]):
            if abs(math.sqrt(sum(c * c for c in vec)) - 1.0) > 1e-3:
                raise MalformedDicomError("ImageOrientationPatient cosines are not unit vectors")

    slope = fields.get("rescale_slope")
    intercept = fields.get("rescale_intercept")
    return DicomHeader(
        series_uid=fields.get("series_uid", ""),
        sop_uid=fields.get("sop_uid", ""),
        patient_id=fields.get("patient_id", ""),
        transfer_syntax_uid=fields["transfer_syntax_uid"],
        rows=rows,
        cols=cols,
        bits_allocated=bits,
        pixel_representation=rep,
        rescale_slope=1.0 if slope is None else slope,
        rescale_intercept=0.0 if intercept is None else intercept,
        image_position_patient=ipp,
        image_orientation_patient=iop,
        instance_number=fields.get("instance_number"),
    )


def parse_dicom_file(data):
    """Parse a complete DICOM file held in memory.

    Returns ``(header, payload)`` where ``payload`` is exactly
    ``rows * cols * bits_allocated / 8`` bytes of raw pixel data.

    Raises
    ------
    NotDicomError
        Preamble or ``DICM`` magic missing.
    UnsupportedTransferSyntaxError
        Anything other than implicit or explicit VR little endian.
    MalformedDicomError
        Truncated elements, missing required tags or a short pixel payload.
    """
    fields, pixels = _read(data, stop_before_pixels=False, enforce_syntax=True)
    header = _build_header(fields)
    if pixels is None:
        raise MalformedDicomError("PixelData (7FE0,0010) missing")
    if len(pixels) < header.payload_size:
        raise MalformedDicomError(
            f"pixel payload has {len(pixels)} bytes, expected {header.payload_size}"
        )
    return header, bytes(pixels[: header.payload_size])


def read_series_key(data):
    """Cheap header scan used for grouping: returns (patient_id, series_uid).

    Tolerates compressed transfer syntaxes, which are rejected later at the
    series level rather than silently dropped here.
    """
    fields, _ = _read(data, stop_before_pixels=True, enforce_syntax=False)
    uid = fields.get("series_uid")
    if not uid:
        raise MalformedDicomError("SeriesInstanceUID (0020,000E) missing")
    return fields.get("patient_id", ""), uid


def decode_pixels(header, payload):
    return np.frombuffer(payload, dtype=header.pixel_dtype).reshape(header.rows, header.cols)


def hu_convert(raw, slope=1.0, intercept=0.0):
    """Map stored pixel values to Hounsfield units as float32."""
    raw = np.asarray(raw)
    return (raw.astype(np.float64) * float(slope) + float(intercept)).astype(np.float32)


# -- directory scan and assembly --------------------------------------------

def _iter_files(root):
    for dirpath, dirnames, filenames in os.walk(root):
        dirnames.sort()
        for name in sorted(filenames):
            yield Path(dirpath) / name


def scan_directory(root):
    """Group every DICOM file under ``root`` by SeriesInstanceUID.

    Files that are not DICOM, or whose header cannot be read, are skipped
    and counted. Records come back sorted by (patient_id, series_uid) and
    file lists are sorted by path.
    """
    root = Path(root)
    if not root.is_dir() or not os.access(root, os.R_OK | os.X_OK):
        raise LungQCError(f"cannot read input directory {root}", code="IO_ERROR")

    groups = {}
    skipped = examined = 0
    for path in _iter_files(root):
        examined += 1
        try:
            with open(path, "rb") as fh:
                data = fh.read()
            patient_id, uid = read_series_key(data)
        except NotDicomError:
            skipped += 1
            continue
        except (DicomError, OSError) as exc:
            logger.warning("skipping %s: %s", path, exc)
            skipped += 1
            continue
        rec = groups.get(uid)
        if rec is None:
            rec = groups[uid] = SeriesRecord(series_uid=uid, patient_id=patient_id)
        elif rec.patient_id != patient_id:
            logger.warning("series %s spans patients %r and %r", uid, rec.patient_id, patient_id)
        rec.files.append(path)

    records = sorted(groups.values(), key=lambda r: (r.patient_id, r.series_uid))
    for rec in records:
        rec.files.sort()
    return ScanResult(records=records, skipped_count=skipped, examined_count=examined)


def load_slice(data):
    """Parse one file into ``(header, HuSlice)``."""
    header, payload = parse_dicom_file(data)
    raw = decode_pixels(header, payload)
    z = None if header.image_position_patient is None else header.image_position_patient[2]
    hu = HuSlice(
        data=hu_convert(raw, header.rescale_slope, header.rescale_intercept),
        z=z,
        source_sop_uid=header.sop_uid,
        instance_number=header.instance_number,
    )
    return header, hu


def _sort_key_factory(items):
    """Pick the ordering key for a series; raise MISSING_GEOMETRY if none works."""
    has_z = [h.image_position_patient is not None for h, _, _ in items]
    has_inst = [h.instance_number is not None for h, _, _ in items]
    if not all(a or b for a, b in zip(has_z, has_inst)):
        raise SeriesError("slice without ImagePositionPatient or InstanceNumber",
                          code="MISSING_GEOMETRY")
    inf = float("inf")
    if all(has_z):
        return lambda it: (
            it[0].image_position_patient[2],
            inf if it[0].instance_number is None else it[0].instance_number,
            it[0].sop_uid,
            str(it[2]),
        )
    if all(has_inst):
        return lambda it: (it[0].instance_number, it[0].sop_uid, str(it[2]))
    raise SeriesError("slices mix position-only and instance-only geometry",
                      code="MISSING_GEOMETRY")


def assemble_series(record):
    """Read, convert and z-sort every file of a series.

    Raises
    ------
    SeriesError
        ``code`` is UNSUPPORTED_TRANSFER_SYNTAX, MALFORMED_SERIES or
        MISSING_GEOMETRY.
    """
    items = []
    for path in record.files:
        try:
            with open(path, "rb") as fh:
                header, hu = load_slice(fh.read())
        except UnsupportedTransferSyntaxError as exc:
            raise SeriesError(f"{path}: {exc}", code=exc.code) from exc
        except (DicomError, OSError) as exc:
            raise SeriesError(f"{path}: {exc}", code="MALFORMED_SERIES") from exc
        items.append((header, hu, path))
    return _assemble(record.series_uid, record.patient_id, items)


def assemble_from_bytes(series_uid, patient_id, blobs):
    """Like :func:`assemble_series` for in-memory file contents."""
    items = []
    for i, data in enumerate(blobs):
        try:
            header, hu = load_slice(data)
        except UnsupportedTransferSyntaxError as exc:
            raise SeriesError(str(exc), code=exc.code) from exc
        except DicomError as exc:
            raise SeriesError(str(exc), code="MALFORMED_SERIES") from exc
        items.append((header, hu, i))
    return _assemble(series_uid, patient_id, items)


def _assemble(series_uid, patient_id, items):
    if not items:
        return SortedSeries(series_uid, patient_id, [], (0, 0))
    matrices = {(h.rows, h.cols) for h, _, _ in items}
    if len(matrices) > 1:
        raise SeriesError(f"mixed matrix sizes {sorted(matrices)}", code="MALFORMED_SERIES")
    items.sort(key=_sort_key_factory(items))

    warnings = []
    orientations = [h.image_orientation_patient for h, _, _ in items]
    if any(o is None for o in orientations):
        warnings.append("MISSING_ORIENTATION")
        orientation = next((o for o in orientations if o is not None), None)
    else:
        orientation = orientations[0]
        if any(not is_axial(o) for o in orientations):
            orientation = next(o for o in orientations if not is_axial(o))
    return SortedSeries(
        series_uid=series_uid,
        patient_id=patient_id,
        slices=[hu for _, hu, _ in items],
        matrix=matrices.pop(),
        orientation=orientation,
        warnings=tuple(warnings),
    )


AXIAL_ORIENTATION = (1.0, 0.0, 0.0, 0.0, 1.0, 0.0)


def is_axial(orientation, tol=0.01):
    """True if the direction cosines match the axial frame component-wise."""
    if orientation is None:
        return True
    return all(abs(a - b) <= tol for a, b in zip(orientation, AXIAL_ORIENTATION))
