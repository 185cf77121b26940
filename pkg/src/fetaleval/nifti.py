"""Bit-exact NIfTI-1 reader/writer for label volumes.

Only the needs of label-map evaluation are covered: the five integer and
float scalar datatypes, single-file ``.nii`` plus ``.hdr``/``.img`` pairs,
optional gzip, and the standard sform/qform/pixdim affine fallback chain.
Extensions are skipped via ``vox_offset``; NIfTI-2 is out of scope.
"""

from __future__ import annotations

import gzip
import struct
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .datamodel import LabelSchema, LabelVolume, _column_norms

HEADER_SIZE = 348
SINGLE_FILE_VOX_OFFSET = 352.0
MAGIC_SINGLE = b"n+1\x00"
MAGIC_PAIR = b"ni1\x00"

# Field order matches the on-disk layout; 's' fields are raw bytes.
_HEADER_FMT = "i10s18sih2c8h3f4h8f3fh2c4f2i80s24s2h6f12f16s4s"

_DTYPES = {2: "u1", 4: "i2", 8: "i4", 16: "f4", 64: "f8"}
_BITPIX = {2: 8, 4: 16, 8: 32, 16: 32, 64: 64}


class NiftiFormatError(ValueError):
    """Malformed or unsupported NIfTI input; message names the offending field."""


@dataclass(frozen=True)
class NiftiHeader:
    """Parsed NIfTI-1 header fields relevant to label volumes."""

    sizeof_hdr: int
    dim: tuple[int, ...]
    datatype: int
    bitpix: int
    pixdim: tuple[float, ...]
    vox_offset: float
    scl_slope: float
    scl_inter: float
    qform_code: int
    sform_code: int
    quatern: tuple[float, float, float]
    qoffset: tuple[float, float, float]
    srow_x: tuple[float, float, float, float]
    srow_y: tuple[float, float, float, float]
    srow_z: tuple[float, float, float, float]
    magic: bytes
    byte_order: str  # '<' little, '>' big

    @property
    def shape(self) -> tuple[int, int, int]:
        return self.dim[1], self.dim[2], self.dim[3]


def _open_maybe_gzip(path: Path):
    with open(path, "rb") as probe:
        magic = probe.read(2)
    if magic == b"\x1f\x8b":
        return gzip.open(path, "rb")
    return open(path, "rb")


def _parse_header(blob: bytes) -> NiftiHeader:
    if len(blob) < HEADER_SIZE:
        raise NiftiFormatError(f"sizeof_hdr: file holds {len(blob)} bytes, header needs {HEADER_SIZE}")
    byte_order = None
    for order in ("<", ">"):
        if struct.unpack_from(order + "i", blob, 0)[0] == HEADER_SIZE:
            byte_order = order
            break
    if byte_order is None:
        raise NiftiFormatError("sizeof_hdr: not 348 in either byte order")
    fields = struct.unpack_from(byte_order + _HEADER_FMT, blob, 0)
    # Unpack positions follow _HEADER_FMT; see write path for the layout.
    dim = fields[7:15]
    intent_code, datatype, bitpix, _slice_start = fields[18:22]
    pixdim = fields[22:30]
    vox_offset, scl_slope, scl_inter = fields[30:33]
    qform_code, sform_code = fields[44:46]
    quatern = fields[46:49]
    qoffset = fields[49:52]
    srow = fields[52:64]
    magic = fields[65]
    return NiftiHeader(
        sizeof_hdr=fields[0],
        dim=tuple(int(d) for d in dim),
        datatype=int(datatype),
        bitpix=int(bitpix),
        pixdim=tuple(float(p) for p in pixdim),
        vox_offset=float(vox_offset),
        scl_slope=float(scl_slope),
        scl_inter=float(scl_inter),
        qform_code=int(qform_code),
        sform_code=int(sform_code),
        quatern=(float(quatern[0]), float(quatern[1]), float(quatern[2])),
        qoffset=(float(qoffset[0]), float(qoffset[1]), float(qoffset[2])),
        srow_x=tuple(float(v) for v in srow[0:4]),
        srow_y=tuple(float(v) for v in srow[4:8]),
        srow_z=tuple(float(v) for v in srow[8:12]),
        magic=bytes(magic),
        byte_order=byte_order,
    )


def _validate_header(hdr: NiftiHeader) -> None:
    if hdr.magic not in (MAGIC_SINGLE, MAGIC_PAIR):
        raise NiftiFormatError(f"magic: {hdr.magic!r} is neither 'n+1' nor 'ni1'")
    if hdr.dim[0] not in (3, 4):
        raise NiftiFormatError(f"dim[0]: {hdr.dim[0]} unsupported (need 3 or 4)")
    if hdr.dim[0] == 4 and hdr.dim[4] != 1:
        raise NiftiFormatError(f"dim[4]: {hdr.dim[4]} != 1 for a 4D header")
    if any(d < 1 for d in hdr.dim[1:4]):
        raise NiftiFormatError(f"dim: non-positive spatial extent {hdr.dim[1:4]}")
    if hdr.datatype not in _DTYPES:
        raise NiftiFormatError(f"datatype: code {hdr.datatype} unsupported")
    if hdr.bitpix != _BITPIX[hdr.datatype]:
        raise NiftiFormatError(f"bitpix: {hdr.bitpix} inconsistent with datatype {hdr.datatype}")


def _quaternion_affine(hdr: NiftiHeader) -> np.ndarray:
    b, c, d = hdr.quatern
    a2 = 1.0 - (b * b + c * c + d * d)
    if a2 < -1e-5:
        raise NiftiFormatError(f"quatern_b/c/d: norm {b*b + c*c + d*d:.6f} exceeds 1")
    a = float(np.sqrt(max(a2, 0.0)))
    rot = np.array(
        [
            [a * a + b * b - c * c - d * d, 2 * (b * c - a * d), 2 * (b * d + a * c)],
            [2 * (b * c + a * d), a * a + c * c - b * b - d * d, 2 * (c * d - a * b)],
            [2 * (b * d - a * c), 2 * (c * d + a * b), a * a + d * d - b * b - c * c],
        ]
    )
    qfac = hdr.pixdim[0]
    if qfac == 0.0:
        qfac = 1.0
    scales = np.array([hdr.pixdim[1], hdr.pixdim[2], qfac * hdr.pixdim[3]])
    affine = np.eye(4)
    affine[:3, :3] = rot * scales[np.newaxis, :]
    affine[:3, 3] = hdr.qoffset
    return affine


def header_affine(hdr: NiftiHeader) -> tuple[np.ndarray, str]:
    """Affine plus its source: 'sform' wins over 'qform' over 'pixdim'."""
    if hdr.sform_code > 0:
        affine = np.array([hdr.srow_x, hdr.srow_y, hdr.srow_z, (0.0, 0.0, 0.0, 1.0)])
        return affine, "sform"
    if hdr.qform_code > 0:
        return _quaternion_affine(hdr), "qform"
    affine = np.diag([hdr.pixdim[1], hdr.pixdim[2], hdr.pixdim[3], 1.0])
    return affine, "pixdim"


def read_header(path: str | Path) -> NiftiHeader:
    path = Path(path)
    with _open_maybe_gzip(path) as fh:
        try:
            blob = fh.read(HEADER_SIZE)
        except (OSError, EOFError) as exc:
            raise NiftiFormatError(f"header: unreadable stream ({exc})") from exc
    hdr = _parse_header(blob)
    _validate_header(hdr)
    return hdr


def _data_blob(path: Path, hdr: NiftiHeader) -> bytes:
    if hdr.magic == MAGIC_SINGLE:
        with _open_maybe_gzip(path) as fh:
            blob = fh.read()
        offset = int(hdr.vox_offset)
        if offset < HEADER_SIZE:
            raise NiftiFormatError(f"vox_offset: {hdr.vox_offset} below header size in single-file image")
        return blob[offset:]
    # .hdr/.img pair: voxels live in the sibling .img(.gz) file.
    stem = path.name
    for suffix in (".hdr.gz", ".hdr", ".nii.gz", ".nii"):
        if stem.endswith(suffix):
            stem = stem[: -len(suffix)]
            break
    for candidate in (path.with_name(stem + ".img"), path.with_name(stem + ".img.gz")):
        if candidate.exists():
            with _open_maybe_gzip(candidate) as fh:
                blob = fh.read()
            return blob[int(hdr.vox_offset):]
    raise NiftiFormatError(f"magic: pair image {stem}.img not found next to {path.name}")


def read_volume(
    path: str | Path,
    schema: LabelSchema | None = None,
) -> LabelVolume:
    """Read a NIfTI-1 label map into a :class:`LabelVolume`.

    Labels are ``round(scl_slope * raw + scl_inter)`` with a zero slope
    treated as one; values farther than 1e-3 from an integer are rejected.
    When ``schema`` is given, voxel codes are validated against it.
    """
    path = Path(path)
    hdr = read_header(path)
    nx, ny, nz = hdr.shape
    count = nx * ny * nz
    dtype = np.dtype(hdr.byte_order + _DTYPES[hdr.datatype])
    blob = _data_blob(path, hdr)
    need = count * dtype.itemsize
    if len(blob) < need:
        raise NiftiFormatError(f"data: truncated, need {need} bytes for dim {hdr.shape}, found {len(blob)}")
    raw = np.frombuffer(blob[:need], dtype=dtype)

    slope = hdr.scl_slope if hdr.scl_slope != 0.0 else 1.0
    inter = hdr.scl_inter
    if slope == 1.0 and inter == 0.0 and raw.dtype.kind in "iu":
        values = raw.astype(np.int64)
    else:
        scaled = raw.astype(np.float64) * slope + inter
        rounded = np.rint(scaled)
        off = np.abs(scaled - rounded)
        if off.size and float(off.max()) > 1e-3:
            worst = int(np.argmax(off))
            raise NiftiFormatError(
                f"data: voxel {worst} value {scaled.flat[worst]!r} is {off.max():.3g} from an integer"
            )
        values = rounded.astype(np.int64)
    if values.size and (values.min() < 0 or values.max() > 255):
        raise NiftiFormatError(f"data: label value range [{values.min()}, {values.max()}] outside uint8")

    grid = values.astype(np.uint8).reshape((nx, ny, nz), order="F")
    affine, _source = header_affine(hdr)
    spacing = _column_norms(affine)
    if np.any(spacing <= 0) or not np.all(np.isfinite(spacing)):
        raise NiftiFormatError(f"pixdim/affine: non-positive voxel spacing {tuple(spacing)}")
    volume = LabelVolume(data=grid, spacing=tuple(float(s) for s in spacing), affine=affine)
    if schema is not None:
        volume.validate_codes(schema)
    return volume


def _pack_header(volume: LabelVolume) -> bytes:
    nx, ny, nz = volume.dims
    sx, sy, sz = volume.spacing
    aff = volume.affine
    fields = (
        HEADER_SIZE,                                  # sizeof_hdr
        b"",                                          # data_type
        b"",                                          # db_name
        0,                                            # extents
        0,                                            # session_error
        b"\x00",                                      # regular
        b"\x00",                                      # dim_info
        3, nx, ny, nz, 1, 1, 1, 1,                    # dim[8]
        0.0, 0.0, 0.0,                                # intent_p1..p3
        0, 2, 8, 0,                                   # intent_code, datatype, bitpix, slice_start
        1.0, sx, sy, sz, 0.0, 0.0, 0.0, 0.0,          # pixdim[8] (pixdim[0] = qfac)
        SINGLE_FILE_VOX_OFFSET, 1.0, 0.0,             # vox_offset, scl_slope, scl_inter
        0,                                            # slice_end
        b"\x00", b"\x00",                             # slice_code, xyzt_units
        0.0, 0.0, 0.0, 0.0,                           # cal_max, cal_min, slice_duration, toffset
        0, 0,                                         # glmax, glmin
        b"fetaleval label volume",                    # descrip
        b"",                                          # aux_file
        0, 1,                                         # qform_code, sform_code
        0.0, 0.0, 0.0, 0.0, 0.0, 0.0,                 # quatern_b/c/d, qoffset_x/y/z
        aff[0, 0], aff[0, 1], aff[0, 2], aff[0, 3],   # srow_x
        aff[1, 0], aff[1, 1], aff[1, 2], aff[1, 3],   # srow_y
        aff[2, 0], aff[2, 1], aff[2, 2], aff[2, 3],   # srow_z
        b"",                                          # intent_name
        MAGIC_SINGLE,                                 # magic
    )
    header = struct.pack("<" + _HEADER_FMT, *fields)
    assert len(header) == HEADER_SIZE
    return header + b"\x00\x00\x00\x00"  # no extensions


def write_volume(volume: LabelVolume, path: str | Path) -> None:
    """Write a single-file little-endian NIfTI-1 (uint8, sform affine).

    Compresses when the path ends in ``.gz``.
    """
    path = Path(path)
    payload = _pack_header(volume) + np.asarray(volume.data, dtype=np.uint8).tobytes(order="F")
    if path.name.endswith(".gz"):
        # mtime pinned so identical volumes produce identical bytes
        with open(path, "wb") as fh:
            with gzip.GzipFile(fileobj=fh, mode="wb", mtime=0) as gz:
                gz.write(payload)
    else:
        path.write_bytes(payload)
