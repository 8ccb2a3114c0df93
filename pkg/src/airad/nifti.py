"""NIfTI-1 reader/writer (plain and gzip single-file).

Only the 348-byte NIfTI-1 layout is handled; NIfTI-2 and DICOM are out of
scope. Datatype codes 2 (u8), 4 (i16), 16 (f32) and 64 (f64) are accepted,
everything is converted to f32 at the boundary.
"""
from __future__ import annotations

import gzip
import struct
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .errors import BadMagic, IoFailure, TruncatedFile, UnsupportedDatatype
from .types import LabelMask, Volume

HEADER_SIZE = 348
SINGLE_FILE_MAGIC = b"n+1\x00"
PAIR_MAGIC = b"ni1\x00"

_DTYPES = {2: "u1", 4: "i2", 16: "f4", 64: "f8"}
_GZIP_MAGIC = b"\x1f\x8b"


@dataclass
class NiftiHeader:
    dims: tuple[int, int, int]
    datatype_code: int
    pixdim: tuple[float, ...]
    vox_offset: int
    scl_slope: float
    scl_inter: float
    qform_code: int
    sform_code: int
    affine: np.ndarray
    magic: bytes
    byteswapped: bool = False


def _read_bytes(path) -> bytes:
    try:
        raw = Path(path).read_bytes()
    except OSError as exc:
        raise IoFailure(str(exc)) from exc
    if raw[:2] == _GZIP_MAGIC:
        try:
            raw = gzip.decompress(raw)
        except OSError as exc:
            raise IoFailure(f"bad gzip stream in {path}: {exc}") from exc
    return raw


def _quaternion_affine(b, c, d, qoffset, pixdim, qfac):
    a_sq = 1.0 - (b * b + c * c + d * d)
    a = np.sqrt(a_sq) if a_sq > 0 else 0.0
    rot = np.array([
        [a * a + b * b - c * c - d * d, 2 * (b * c - a * d), 2 * (b * d + a * c)],
        [2 * (b * c + a * d), a * a + c * c - b * b - d * d, 2 * (c * d - a * b)],
        [2 * (b * d - a * c), 2 * (c * d + a * b), a * a + d * d - b * b - c * c],
    ])
    scale = np.diag([pixdim[0], pixdim[1], pixdim[2] * qfac])
    affine = np.zeros((3, 4))
    affine[:, :3] = rot @ scale
    affine[:, 3] = qoffset
    return affine


def parse_header(raw: bytes) -> NiftiHeader:
    if len(raw) < HEADER_SIZE:
        raise TruncatedFile(f"header shorter than {HEADER_SIZE} bytes")
    magic = raw[344:348]
    if magic not in (SINGLE_FILE_MAGIC, PAIR_MAGIC):
        raise BadMagic(f"not a NIfTI-1 file (magic {magic!r})")

    endian = "<"
    (ndim,) = struct.unpack_from("<h", raw, 40)
    swapped = not (1 <= ndim <= 7)
    if swapped:
        endian = ">"
        (ndim,) = struct.unpack_from(">h", raw, 40)
        if not (1 <= ndim <= 7):
            raise BadMagic("dim[0] invalid under both byte orders")

    dim = struct.unpack_from(endian + "8h", raw, 40)
    datatype, _bitpix = struct.unpack_from(endian + "2h", raw, 70)
    pixdim = struct.unpack_from(endian + "8f", raw, 76)
    (vox_offset,) = struct.unpack_from(endian + "f", raw, 108)
    scl_slope, scl_inter = struct.unpack_from(endian + "2f", raw, 112)
    qform_code, sform_code = struct.unpack_from(endian + "2h", raw, 252)
    quatern = struct.unpack_from(endian + "3f", raw, 256)
    qoffset = struct.unpack_from(endian + "3f", raw, 268)
    srow = np.array(struct.unpack_from(endian + "12f", raw, 280)).reshape(3, 4)

    if datatype not in _DTYPES:
        raise UnsupportedDatatype(f"datatype code {datatype} not supported")

    nx = max(dim[1], 1)
    ny = max(dim[2], 1) if ndim >= 2 else 1
    nz = max(dim[3], 1) if ndim >= 3 else 1
    for extra in dim[4:4 + max(ndim - 3, 0)]:
        if extra > 1:
            raise UnsupportedDatatype("4D+ NIfTI volumes not supported")

    spacing = tuple(abs(p) if p != 0 else 1.0 for p in pixdim[1:4])
    if sform_code > 0:
        affine = srow.copy()
    elif qform_code > 0:
        qfac = -1.0 if pixdim[0] < 0 else 1.0
        affine = _quaternion_affine(*quatern, np.array(qoffset), spacing, qfac)
    else:
        affine = np.zeros((3, 4))
        affine[0, 0], affine[1, 1], affine[2, 2] = spacing

    return NiftiHeader(
        dims=(nx, ny, nz),
        datatype_code=datatype,
        pixdim=spacing,
        vox_offset=int(vox_offset) if vox_offset >= HEADER_SIZE else HEADER_SIZE + 4,
        scl_slope=scl_slope,
        scl_inter=scl_inter,
        qform_code=qform_code,
        sform_code=sform_code,
        affine=affine,
        magic=magic,
        byteswapped=swapped,
    )


def _read_payload(raw: bytes, hdr: NiftiHeader) -> np.ndarray:
    nx, ny, nz = hdr.dims
    dtype = np.dtype(_DTYPES[hdr.datatype_code])
    if hdr.byteswapped:
        dtype = dtype.newbyteorder(">")
    else:
        dtype = dtype.newbyteorder("<")
    count = nx * ny * nz
    need = hdr.vox_offset + count * dtype.itemsize
    if len(raw) < need:
        raise TruncatedFile(f"data ends at {len(raw)} bytes, header implies {need}")
    flat = np.frombuffer(raw, dtype=dtype, count=count, offset=hdr.vox_offset)
    return flat.reshape((nx, ny, nz), order="F")


def read_header(path) -> NiftiHeader:
    """Parse only the header; voxel payload is not loaded."""
    return parse_header(_read_bytes(path))


def _source_id(path) -> str:
    name = Path(path).name
    for suffix in (".nii.gz", ".nii"):
        if name.endswith(suffix):
            return name[: -len(suffix)]
    return Path(path).stem


def read_nifti(path) -> Volume:
    raw = _read_bytes(path)
    hdr = parse_header(raw)
    data = _read_payload(raw, hdr).astype(np.float32)
    if hdr.scl_slope != 0.0 and not (hdr.scl_slope == 1.0 and hdr.scl_inter == 0.0):
        data = data * np.float32(hdr.scl_slope) + np.float32(hdr.scl_inter)
    return Volume(voxels=data, spacing=hdr.pixdim, affine=hdr.affine,
                  source_id=_source_id(path))


def read_labelmask(path) -> LabelMask:
    raw = _read_bytes(path)
    hdr = parse_header(raw)
    data = _read_payload(raw, hdr)
    return LabelMask(labels=np.asarray(data).astype(np.uint8), spacing=hdr.pixdim,
                     affine=hdr.affine, source_id=_source_id(path))


def _build_header(shape, spacing, affine, datatype, bitpix) -> bytes:
    hdr = bytearray(HEADER_SIZE)
    struct.pack_into("<i", hdr, 0, HEADER_SIZE)
    struct.pack_into("<8h", hdr, 40, 3, shape[0], shape[1], shape[2], 1, 1, 1, 1)
    struct.pack_into("<2h", hdr, 70, datatype, bitpix)
    struct.pack_into("<8f", hdr, 76, 1.0, spacing[0], spacing[1], spacing[2], 0, 0, 0, 0)
    struct.pack_into("<f", hdr, 108, float(HEADER_SIZE + 4))
    struct.pack_into("<2f", hdr, 112, 1.0, 0.0)  # scl_slope, scl_inter
    struct.pack_into("<2h", hdr, 252, 0, 1)  # qform off, sform on
    struct.pack_into("<12f", hdr, 280, *np.asarray(affine, dtype=np.float64).ravel())
    hdr[344:348] = SINGLE_FILE_MAGIC
    return bytes(hdr) + b"\x00" * 4  # pad to vox_offset 352


def write_nifti(obj, path, use_gzip: bool | None = None) -> None:
    """Write a Volume (f32) or LabelMask (u8) as a single-file NIfTI-1.

    When ``use_gzip`` is None the file is gzipped iff the path ends in .gz.
    """
    path = Path(path)
    if use_gzip is None:
        use_gzip = path.name.endswith(".gz")
    if isinstance(obj, LabelMask):
        data, datatype, bitpix = obj.labels, 2, 8
    else:
        data, datatype, bitpix = obj.voxels.astype("<f4"), 16, 32
    if data.size == 0:
        raise IoFailure("refusing to write empty grid")
    payload = _build_header(data.shape, obj.spacing, obj.affine, datatype, bitpix)
    payload += np.asfortranarray(data).tobytes(order="F")
    try:
        path.parent.mkdir(parents=True, exist_ok=True)
        if use_gzip:
            with gzip.open(path, "wb", compresslevel=6) as fh:
                fh.write(payload)
        else:
            path.write_bytes(payload)
    except OSError as exc:
        raise IoFailure(str(exc)) from exc
