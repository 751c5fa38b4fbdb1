"""Image containers, PGM/PNG I/O, grayscale conversion and histograms.

Gray images are plain ``numpy`` arrays of dtype ``uint8`` and shape
``(height, width)``; RGB images have shape ``(height, width, 3)``.  Every
operation here returns a new array and never mutates its input.
"""
from __future__ import annotations

import os
import re
from dataclasses import dataclass

import numpy as np

from .errors import (
    MalformedHeaderError,
    TruncatedPayloadError,
    UnreadableFileError,
    UnsupportedBitDepthError,
    UnsupportedFormatError,
    ValidationError,
)

__all__ = [
    "Histogram",
    "as_gray",
    "to_grayscale",
    "histogram",
    "load_image",
    "load_gray",
    "save_gray",
    "read_pgm",
    "write_pgm",
]

# BT.601 luma weights scaled by 1000 so conversion is exact integer arithmetic.
_LUMA_WEIGHTS = np.array([299, 587, 114], dtype=np.int64)


@dataclass(frozen=True)
class Histogram:
    """256-bin intensity histogram of an 8-bit image."""

    bins: np.ndarray

    @property
    def total(self) -> int:
        return int(self.bins.sum())

    def __eq__(self, other):
        if not isinstance(other, Histogram):
            return NotImplemented
        return np.array_equal(self.bins, other.bins)

    def __hash__(self):
        return hash(self.bins.tobytes())


def as_gray(img) -> np.ndarray:
    """Validate and return ``img`` as a read-only 2-D uint8 array."""
    a = np.asarray(img)
    if a.ndim != 2 or a.shape[0] < 1 or a.shape[1] < 1:
        raise ValidationError(f"gray image must be a non-empty 2-D array, got shape {a.shape}")
    if a.dtype != np.uint8:
        if a.size and (a.min() < 0 or a.max() > 255 or not np.all(a == np.round(a))):
            raise ValidationError("gray image values must be integers in [0, 255]")
        a = a.astype(np.uint8)
    return a


def to_grayscale(img) -> np.ndarray:
    """Convert an RGB image to 8-bit gray with BT.601 luma, rounding half up.

    A 2-D input is treated as already gray and returned unchanged (copied).
    """
    a = np.asarray(img)
    if a.ndim == 2:
        return as_gray(a).copy()
    if a.ndim != 3 or a.shape[2] != 3:
        raise ValidationError(f"RGB image must have shape (h, w, 3), got {a.shape}")
    weighted = a.astype(np.int64) @ _LUMA_WEIGHTS
    gray = (weighted + 500) // 1000
    return np.clip(gray, 0, 255).astype(np.uint8)


def histogram(img) -> Histogram:
    a = as_gray(img)
    return Histogram(np.bincount(a.ravel(), minlength=256).astype(np.int64))


# -- PGM ---------------------------------------------------------------------

_TOKEN = re.compile(rb"\s*(?:#[^\n]*\n\s*)*(\S+)")


def _parse_netpbm_header(buf: bytes):
    """Return (magic, width, height, maxval, payload_offset)."""
    if len(buf) < 2:
        raise MalformedHeaderError("malformed header: file too short")
    magic = buf[:2]
    if magic not in (b"P5", b"P6"):
        raise UnsupportedFormatError(f"unsupported netpbm magic {magic!r}")
    pos = 2
    fields = []
    for _ in range(3):
        m = _TOKEN.match(buf, pos)
        if m is None:
            raise MalformedHeaderError("malformed header: missing width/height/maxval")
        tok = m.group(1)
        if not tok.isdigit():
            raise MalformedHeaderError(f"malformed header: bad field {tok!r}")
        fields.append(int(tok))
        pos = m.end()
    # exactly one whitespace byte separates maxval from the raster
    if pos >= len(buf) or buf[pos : pos + 1] not in (b" ", b"\t", b"\n", b"\r"):
        raise MalformedHeaderError("malformed header: no separator after maxval")
    width, height, maxval = fields
    if width < 1 or height < 1 or maxval < 1:
        raise MalformedHeaderError("malformed header: non-positive dimension or maxval")
    if maxval > 255:
        raise UnsupportedBitDepthError(f"maxval {maxval} implies 16-bit samples; only 8-bit is supported")
    return magic, width, height, maxval, pos + 1


def read_pgm(path) -> np.ndarray:
    """Read a binary PGM (P5) or PPM (P6) file with maxval <= 255."""
    try:
        with open(path, "rb") as fh:
            buf = fh.read()
    except OSError as exc:
        raise UnreadableFileError(f"cannot read {path}: {exc}") from exc
    magic, width, height, _maxval, offset = _parse_netpbm_header(buf)
    channels = 3 if magic == b"P6" else 1
    need = width * height * channels
    payload = buf[offset : offset + need]
    if len(payload) < need:
        raise TruncatedPayloadError(f"truncated payload: expected {need} bytes, found {len(payload)}")
    data = np.frombuffer(payload, dtype=np.uint8)
    shape = (height, width, 3) if channels == 3 else (height, width)
    return data.reshape(shape).copy()


def write_pgm(img, path) -> None:
    a = as_gray(img)
    h, w = a.shape
    with open(path, "wb") as fh:
        fh.write(b"P5\n%d %d\n255\n" % (w, h))
        fh.write(np.ascontiguousarray(a).tobytes())


def save_gray(img, path) -> None:
    """Save a gray image as P5 PGM (the only write format)."""
    write_pgm(img, path)


def _read_png(path) -> np.ndarray:
    from PIL import Image, UnidentifiedImageError

    try:
        im = Image.open(path)
        im.load()
    except FileNotFoundError as exc:
        raise UnreadableFileError(f"cannot read {path}: {exc}") from exc
    except (UnidentifiedImageError, OSError, SyntaxError) as exc:
        msg = str(exc)
        if "truncated" in msg.lower():
            raise TruncatedPayloadError(f"truncated payload in {path}: {msg}") from exc
        raise UnreadableFileError(f"cannot decode {path}: {msg}") from exc
    if im.mode in ("I", "I;16", "I;16B", "I;16L", "F"):
        raise UnsupportedBitDepthError(f"PNG mode {im.mode} is not 8-bit")
    if im.mode in ("L", "1"):
        return np.asarray(im.convert("L"), dtype=np.uint8).copy()
    if im.mode == "LA":
        return np.asarray(im.getchannel("L"), dtype=np.uint8).copy()
    return np.asarray(im.convert("RGB"), dtype=np.uint8).copy()


def load_image(path) -> np.ndarray:
    """Load a PGM/PPM or PNG file.

    Returns a 2-D array for gray sources and an ``(h, w, 3)`` array for
    colour sources.
    """
    path = os.fspath(path)
    try:
        with open(path, "rb") as fh:
            head = fh.read(8)
    except OSError as exc:
        raise UnreadableFileError(f"cannot read {path}: {exc}") from exc
    if head[:2] in (b"P5", b"P6"):
        return read_pgm(path)
    if head.startswith(b"\x89PNG"):
        return _read_png(path)
    if head[:1] == b"P" and head[1:2].isdigit():
        raise UnsupportedFormatError(f"{path}: only binary P5/P6 netpbm is supported")
    if len(head) < 2:
        raise MalformedHeaderError(f"malformed header: {path} is too short")
    raise UnsupportedFormatError(f"{path}: not a PGM or PNG file")


def load_gray(path) -> np.ndarray:
    """Load any supported image and convert it to gray."""
    return to_grayscale(load_image(path))
