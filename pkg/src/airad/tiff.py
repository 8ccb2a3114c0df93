"""Multi-page baseline TIFF codec for 32-bit float slices.

Little-endian only, uncompressed, one strip per page; lossless round-trip
of f32 payloads is the contract.
"""
from __future__ import annotations

import struct
from pathlib import Path

import numpy as np

from .errors import BadMagic, EmptyInput, IoFailure, TruncatedFile, UnsupportedTiffFeature

TAG_IMAGE_WIDTH = 256
TAG_IMAGE_LENGTH = 257
TAG_BITS_PER_SAMPLE = 258
TAG_COMPRESSION = 259
TAG_PHOTOMETRIC = 262
TAG_STRIP_OFFSETS = 273
TAG_SAMPLES_PER_PIXEL = 277
TAG_ROWS_PER_STRIP = 278
TAG_STRIP_BYTE_COUNTS = 279
TAG_SAMPLE_FORMAT = 339

_TYPE_SHORT = 3
_TYPE_LONG = 4


def write_tiff_stack(slices, path) -> None:
    """Write a sequence of equal-sized 2D f32 arrays as one multi-page TIFF."""
    slices = [np.asarray(s, dtype="<f4") for s in slices]
    if not slices:
        raise EmptyInput("no slices to write")
    h, w = slices[0].shape
    for s in slices:
        if s.shape != (h, w):
            raise EmptyInput(f"slice shapes differ: {s.shape} vs {(h, w)}")

    out = bytearray()
    out += b"II" + struct.pack("<H", 42) + struct.pack("<I", 0)  # IFD0 offset patched below

    ifd_offsets = []
    for sl in slices:
        data_offset = len(out)
        out += sl.tobytes(order="C")
        if len(out) % 2:
            out += b"\x00"
        ifd_offset = len(out)
        ifd_offsets.append(ifd_offset)
        entries = [
            (TAG_IMAGE_WIDTH, _TYPE_LONG, 1, w),
            (TAG_IMAGE_LENGTH, _TYPE_LONG, 1, h),
            (TAG_BITS_PER_SAMPLE, _TYPE_SHORT, 1, 32),
            (TAG_COMPRESSION, _TYPE_SHORT, 1, 1),
            (TAG_PHOTOMETRIC, _TYPE_SHORT, 1, 1),
            (TAG_STRIP_OFFSETS, _TYPE_LONG, 1, data_offset),
            (TAG_SAMPLES_PER_PIXEL, _TYPE_SHORT, 1, 1),
            (TAG_ROWS_PER_STRIP, _TYPE_LONG, 1, h),
            (TAG_STRIP_BYTE_COUNTS, _TYPE_LONG, 1, h * w * 4),
            (TAG_SAMPLE_FORMAT, _TYPE_SHORT, 1, 3),
        ]
        out += struct.pack("<H", len(entries))
        for tag, typ, count, value in entries:
            out += struct.pack("<HHI", tag, typ, count)
            if typ == _TYPE_SHORT:
                out += struct.pack("<HH", value, 0)
            else:
                out += struct.pack("<I", value)
        out += struct.pack("<I", 0)  # next-IFD pointer patched below

    struct.pack_into("<I", out, 4, ifd_offsets[0])
    for prev, nxt in zip(ifd_offsets, ifd_offsets[1:]):
        # next-IFD pointer sits after the 2-byte count and 12-byte entries
        struct.pack_into("<I", out, prev + 2 + 12 * 10, nxt)

    try:
        Path(path).parent.mkdir(parents=True, exist_ok=True)
        Path(path).write_bytes(bytes(out))
    except OSError as exc:
        raise IoFailure(str(exc)) from exc


def _tag_value(raw, offset):
    tag, typ, count = struct.unpack_from("<HHI", raw, offset)
    if typ == _TYPE_SHORT:
        (value,) = struct.unpack_from("<H", raw, offset + 8)
    elif typ == _TYPE_LONG:
        (value,) = struct.unpack_from("<I", raw, offset + 8)
    else:
        raise UnsupportedTiffFeature(f"tag {tag}: unsupported field type {typ}")
    if count != 1:
        raise UnsupportedTiffFeature(f"tag {tag}: multi-value fields not supported")
    return tag, value


def read_tiff_stack(path):
    """Read back a multi-page f32 TIFF written by :func:`write_tiff_stack`."""
    try:
        raw = Path(path).read_bytes()
    except OSError as exc:
        raise IoFailure(str(exc)) from exc
    if raw[:2] != b"II" or struct.unpack_from("<H", raw, 2)[0] != 42:
        raise BadMagic("not a little-endian TIFF")
    (ifd_offset,) = struct.unpack_from("<I", raw, 4)

    pages = []
    while ifd_offset:
        if ifd_offset + 2 > len(raw):
            raise TruncatedFile("IFD offset beyond end of file")
        (n_entries,) = struct.unpack_from("<H", raw, ifd_offset)
        tags = {}
        for i in range(n_entries):
            tag, value = _tag_value(raw, ifd_offset + 2 + 12 * i)
            tags[tag] = value
        (ifd_offset,) = struct.unpack_from("<I", raw, ifd_offset + 2 + 12 * n_entries)

        if tags.get(TAG_BITS_PER_SAMPLE) != 32 or tags.get(TAG_SAMPLE_FORMAT) != 3:
            raise UnsupportedTiffFeature("only 32-bit IEEE-float samples supported")
        if tags.get(TAG_COMPRESSION, 1) != 1:
            raise UnsupportedTiffFeature("compressed TIFF not supported")
        w, h = tags[TAG_IMAGE_WIDTH], tags[TAG_IMAGE_LENGTH]
        off, nbytes = tags[TAG_STRIP_OFFSETS], tags[TAG_STRIP_BYTE_COUNTS]
        if nbytes != h * w * 4 or off + nbytes > len(raw):
            raise TruncatedFile("strip does not match image dimensions")
        page = np.frombuffer(raw, dtype="<f4", count=h * w, offset=off).reshape(h, w)
        pages.append(page.copy())
    return pages
