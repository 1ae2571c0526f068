"""Synthetic CT phantoms and a byte-level DICOM writer.

The writer shares no code with :mod:`lungqc.dicom` so tests can use it as
an independent fixture source. Phantoms are a soft-tissue field with two
elliptical parenchyma regions on a known slice range.
"""

from __future__ import annotations

import struct
from dataclasses import dataclass
from pathlib import Path

import numpy as np

CT_IMAGE_STORAGE = "1.2.840.10008.5.1.4.1.1.2"
IMPLICIT_LE = "1.2.840.10008.1.2"
EXPLICIT_LE = "1.2.840.10008.1.2.1"
JPEG_BASELINE = "1.2.840.10008.1.2.4.50"
_IMPL_CLASS_UID = "1.2.826.0.1.3680043.10.1"
UID_ROOT = "1.2.826.0.1.3680043.10.2"

# VR for every tag this writer emits (needed only for explicit VR).
_VR = {
    (0x0002, 0x0000): "UL", (0x0002, 0x0001): "OB", (0x0002, 0x0002): "UI",
    (0x0002, 0x0003): "UI", (0x0002, 0x0010): "UI", (0x0002, 0x0012): "UI",
    (0x0008, 0x0016): "UI", (0x0008, 0x0018): "UI", (0x0008, 0x0060): "CS",
    (0x0008, 0x1140): "SQ",
    (0x0010, 0x0020): "LO", (0x0020, 0x000D): "UI", (0x0020, 0x000E): "UI",
    (0x0020, 0x0013): "IS", (0x0020, 0x0032): "DS", (0x0020, 0x0037): "DS",
    (0x0028, 0x0002): "US", (0x0028, 0x0004): "CS", (0x0028, 0x0010): "US",
    (0x0028, 0x0011): "US", (0x0028, 0x0100): "US", (0x0028, 0x0101): "US",
    (0x0028, 0x0102): "US", (0x0028, 0x0103): "US", (0x0028, 0x1052): "DS",
    (0x0028, 0x1053): "DS", (0x7FE0, 0x0010): "OW",
}
_LONG = {"OB", "OW", "OF", "SQ", "UT", "UN"}


def format_ds(value):
    """Decimal-string encoding that round-trips through ``float``, max 16 chars."""
    value = float(value)
    if value == int(value) and abs(value) < 1e15:
        return str(int(value))
    text = repr(value)
    if len(text) > 16:
        text = f"{value:.10g}"
    return text


def _pad(raw, vr):
    if len(raw) % 2:
        raw += b"\x00" if vr in ("UI", "OB", "OW", "UN") else b" "
    return raw


def _encode_value(vr, value):
    if isinstance(value, (bytes, bytearray)):
        return bytes(value)
    if vr == "US":
        return struct.pack("<H", value)
    if vr == "UL":
        return struct.pack("<I", value)
    if vr == "DS":
        if isinstance(value, (tuple, list)):
            return "\\".join(format_ds(v) for v in value).encode("ascii")
        return format_ds(value).encode("ascii")
    if vr == "IS":
        return str(int(value)).encode("ascii")
    return str(value).encode("ascii")


def _element(tag, value, explicit):
    vr = _VR[tag]
    raw = _pad(_encode_value(vr, value), vr)
    head = struct.pack("<HH", *tag)
    length = len(raw)
    if not explicit:
        return head + struct.pack("<I", length) + raw
    if vr in _LONG:
        return head + vr.encode() + b"\x00\x00" + struct.pack("<I", length) + raw
    return head + vr.encode() + struct.pack("<H", length) + raw


def _encapsulated(payload):
    item = struct.pack("<HHI", 0xFFFE, 0xE000, 0)  # empty offset table
    frag = _pad(bytes(payload), "OB")
    item += struct.pack("<HHI", 0xFFFE, 0xE000, len(frag)) + frag
    return item + struct.pack("<HHI", 0xFFFE, 0xE0DD, 0)


def _sequence_header(explicit):
    head = struct.pack("<HH", 0x0008, 0x1140)
    if explicit:
        return head + b"SQ\x00\x00" + struct.pack("<I", 0xFFFFFFFF)
    return head + struct.pack("<I", 0xFFFFFFFF)


def _undefined_sequence(explicit):
    """A referenced-image sequence with one undefined-length item, for parser tests."""
    inner = _element((0x0008, 0x0018), "1.2.3.4.5", explicit)
    item = struct.pack("<HHI", 0xFFFE, 0xE000, 0xFFFFFFFF) + inner
    item += struct.pack("<HHI", 0xFFFE, 0xE00D, 0)
    return item + struct.pack("<HHI", 0xFFFE, 0xE0DD, 0)


def write_dicom_bytes(
    pixels,
    *,
    patient_id="PHANTOM",
    series_uid=UID_ROOT + ".1",
    sop_uid=UID_ROOT + ".1.1",
    study_uid=UID_ROOT + ".0",
    transfer_syntax=EXPLICIT_LE,
    rescale_slope=1.0,
    rescale_intercept=0.0,
    image_position=(0.0, 0.0, 0.0),
    image_orientation=(1.0, 0.0, 0.0, 0.0, 1.0, 0.0),
    instance_number=1,
    include_sequence=False,
):
    """Serialize a single-frame CT image as a DICOM Part-10 byte string.

    ``pixels`` is a 2-D integer array (int16, uint16, int8 or uint8). Pass
    ``None`` for ``image_position``, ``image_orientation``,
    ``instance_number``, ``rescale_slope`` or ``rescale_intercept`` to omit
    the tag.
    """
    pixels = np.asarray(pixels)
    if pixels.ndim != 2:
        raise ValueError("pixels must be 2-D")
    if pixels.dtype.kind not in "iu" or pixels.dtype.itemsize not in (1, 2):
        raise ValueError(f"unsupported pixel dtype {pixels.dtype}")
    bits = pixels.dtype.itemsize * 8
    signed = pixels.dtype.kind == "i"
    explicit = transfer_syntax != IMPLICIT_LE
    native = transfer_syntax in (IMPLICIT_LE, EXPLICIT_LE)

    meta_body = b"".join(
        _element(tag, val, True)
        for tag, val in (
            ((0x0002, 0x0001), b"\x00\x01"),
            ((0x0002, 0x0002), CT_IMAGE_STORAGE),
            ((0x0002, 0x0003), sop_uid),
            ((0x0002, 0x0010), transfer_syntax),
            ((0x0002, 0x0012), _IMPL_CLASS_UID),
        )
    )
    meta = _element((0x0002, 0x0000), len(meta_body), True) + meta_body

    elements = [
        ((0x0008, 0x0016), CT_IMAGE_STORAGE),
        ((0x0008, 0x0018), sop_uid),
        ((0x0008, 0x0060), "CT"),
        ((0x0010, 0x0020), patient_id),
        ((0x0020, 0x000D), study_uid),
        ((0x0020, 0x000E), series_uid),
        ((0x0020, 0x0013), instance_number),
        ((0x0020, 0x0032), image_position),
        ((0x0020, 0x0037), image_orientation),
        ((0x0028, 0x0002), 1),
        ((0x0028, 0x0004), "MONOCHROME2"),
        ((0x0028, 0x0010), pixels.shape[0]),
        ((0x0028, 0x0011), pixels.shape[1]),
        ((0x0028, 0x0100), bits),
        ((0x0028, 0x0101), bits),
        ((0x0028, 0x0102), bits - 1),
        ((0x0028, 0x0103), 1 if signed else 0),
        ((0x0028, 0x1052), rescale_intercept),
        ((0x0028, 0x1053), rescale_slope),
    ]
    body = bytearray()
    for tag, val in elements:
        if val is None:
            continue
        body += _element(tag, val, explicit)
        if include_sequence and tag == (0x0008, 0x0060):
            body += _sequence_header(explicit) + _undefined_sequence(explicit)

    payload = pixels.astype(pixels.dtype.newbyteorder("<"), copy=False).tobytes(order="C")
    if native:
        body += _element((0x7FE0, 0x0010), payload, explicit)
    else:
        head = struct.pack("<HH", 0x7FE0, 0x0010) + b"OB\x00\x00" + struct.pack("<I", 0xFFFFFFFF)
        body += head + _encapsulated(payload[:64])
    return b"\x00" * 128 + b"DICM" + meta + bytes(body)


# -- phantoms ----------------------------------------------------------------

@dataclass(frozen=True)
class Ellipse:
    cy: float
    cx: float
    ay: float  # semi-axis along rows
    ax: float  # semi-axis along cols

    def rasterize(self, shape):
        yy, xx = np.ogrid[: shape[0], : shape[1]]
        return ((yy - self.cy) / self.ay) ** 2 + ((xx - self.cx) / self.ax) ** 2 <= 1.0


@dataclass
class Phantom:
    volume: np.ndarray  # float32 HU, (depth, rows, cols)
    lung_range: tuple | None  # inclusive slice indices, None if lung-free
    ellipses: tuple
    lung_pixels: int  # rasterized ellipse pixel count per lung slice

    @property
    def lung_fraction(self):
        return self.lung_pixels / (self.volume.shape[1] * self.volume.shape[2])


def lung_ellipses(shape=(512, 512), rng=None, margin=6):
    """Two non-overlapping vertical ellipses, one per half of the field."""
    rng = np.random.default_rng(rng)
    rows, cols = shape
    out = []
    for side in (0, 1):
        ax = rng.uniform(0.10, 0.18) * cols
        ay = rng.uniform(0.22, 0.32) * rows
        half_lo = side * cols / 2 + margin + ax
        half_hi = (side + 1) * cols / 2 - margin - ax
        cx = rng.uniform(half_lo, max(half_lo, half_hi))
        cy = rng.uniform(margin + ay, rows - margin - ay)
        out.append(Ellipse(cy=cy, cx=cx, ay=ay, ax=ax))
    return tuple(out)


def make_phantom(
    n_slices=100,
    lung_range=(20, 79),
    shape=(512, 512),
    rng=None,
    ellipses=None,
    lung_hu=-850.0,
    background=(0, 60),
):
    """Build a phantom volume.

    Background voxels are uniform integers in ``background`` HU. Voxels
    inside the ellipses on slices ``lung_range`` (inclusive) are ``lung_hu``
    plus uniform integer noise in [-40, 40].
    """
    rng = np.random.default_rng(rng)
    if ellipses is None:
        ellipses = lung_ellipses(shape, rng)
    lung = np.zeros(shape, dtype=bool)
    for e in ellipses:
        lung |= e.rasterize(shape)
    lo, hi = background
    vol = rng.integers(lo, hi + 1, size=(n_slices,) + tuple(shape)).astype(np.float32)
    if lung_range is not None:
        start, end = lung_range
        noise = rng.integers(-40, 41, size=(end - start + 1, int(lung.sum())))
        vol[start : end + 1, lung] = (lung_hu + noise).astype(np.float32)
    return Phantom(volume=vol, lung_range=lung_range, ellipses=tuple(ellipses),
                   lung_pixels=int(lung.sum()))


def phantom_series(phantom, patient_id="PHANTOM", series_uid=UID_ROOT + ".1", spacing=2.5):
    """Wrap a phantom as an in-memory :class:`~lungqc.dicom.SortedSeries`."""
    from .dicom import HuSlice, SortedSeries

    slices = [
        HuSlice(data=phantom.volume[i], z=i * spacing, source_sop_uid=f"{series_uid}.{i + 1}",
                instance_number=i + 1)
        for i in range(phantom.volume.shape[0])
    ]
    return SortedSeries(series_uid=series_uid, patient_id=patient_id, slices=slices,
                        matrix=phantom.volume.shape[1:], orientation=(1.0, 0, 0, 0, 1.0, 0))


def write_phantom_series(
    directory,
    phantom,
    patient_id="PHANTOM",
    series_uid=UID_ROOT + ".1",
    transfer_syntax=EXPLICIT_LE,
    spacing=2.5,
    shuffle_names=True,
):
    """Write one file per slice, stored as int16 with intercept -1024.

    File names are decoupled from slice order when ``shuffle_names`` is
    set, so readers must sort by geometry.
    """
    directory = Path(directory)
    directory.mkdir(parents=True, exist_ok=True)
    depth = phantom.volume.shape[0]
    order = np.arange(depth)
    if shuffle_names:
        order = np.random.default_rng(depth).permutation(depth)
    raw = np.rint(phantom.volume + 1024.0).astype(np.int16)
    paths = []
    for i in range(depth):
        data = write_dicom_bytes(
            raw[i],
            patient_id=patient_id,
            series_uid=series_uid,
            sop_uid=f"{series_uid}.{i + 1}",
            transfer_syntax=transfer_syntax,
            rescale_slope=1.0,
            rescale_intercept=-1024.0,
            image_position=(-250.0, -250.0, i * spacing),
            instance_number=i + 1,
        )
        path = directory / f"IM{order[i]:05d}.dcm"
        path.write_bytes(data)
        paths.append(path)
    return paths


def build_demo_corpus(root, seed=0):
    """Three-series corpus: one accepted, one too short, one without lungs."""
    root = Path(root)
    rng = np.random.default_rng(seed)
    specs = [
        ("100001", f"{UID_ROOT}.100001.1", dict(n_slices=100, lung_range=(20, 79))),
        ("100002", f"{UID_ROOT}.100002.1", dict(n_slices=50, lung_range=(10, 39))),
        ("100003", f"{UID_ROOT}.100003.1", dict(n_slices=80, lung_range=None)),
    ]
    for patient_id, uid, kw in specs:
        ph = make_phantom(rng=rng, **kw)
        write_phantom_series(root / patient_id / uid, ph, patient_id=patient_id, series_uid=uid)
    return root
