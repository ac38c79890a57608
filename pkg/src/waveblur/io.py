"""Image and operator file I/O.

Operator files (little endian)::

    b"WTHETA01"
    u32 d, u32 dims[d], u32 J, u32 family id, u32 order, u32 K
    u64 row_offsets[N + 1]
    u32 col_indices[K]
    f64 values[K]

with ``N = prod(dims)``.
"""

from __future__ import annotations

import struct
from pathlib import Path

import numpy as np

from .errors import BadImageFile, CorruptOperatorFile
from .theta import SparseOperator
from .wavelet import FAMILY_IDS, Family, SubbandLayout, make_filters

__all__ = ["read_image", "write_image", "write_operator", "read_operator"]

MAGIC = b"WTHETA01"
_ID_TO_FAMILY = {v: k for k, v in FAMILY_IDS.items()}


def _read_pgm(path: Path) -> np.ndarray:
    data = path.read_bytes()
    if not data.startswith(b"P5"):
        raise BadImageFile(f"{path}: not a binary PGM (P5) file")
    # header: magic, width, height, maxval separated by whitespace, comments allowed
    fields = []
    pos = 2
    while len(fields) < 3:
        while data[pos : pos + 1].isspace():
            pos += 1
        if data[pos : pos + 1] == b"#":
            pos = data.index(b"\n", pos) + 1
            continue
        start = pos
        while not data[pos : pos + 1].isspace():
            pos += 1
        fields.append(int(data[start:pos]))
    pos += 1
    width, height, maxval = fields
    dtype = ">u2" if maxval > 255 else "u1"
    count = width * height
    if len(data) - pos < count * np.dtype(dtype).itemsize:
        raise BadImageFile(f"{path}: truncated pixel data")
    arr = np.frombuffer(data, dtype=dtype, count=count, offset=pos)
    return arr.reshape(height, width).astype(np.float64) / maxval


def _write_pgm(path: Path, u: np.ndarray, bits: int) -> None:
    maxval = 255 if bits == 8 else 65535
    q = np.round(np.clip(u, 0.0, 1.0) * maxval)
    arr = q.astype(">u2" if bits == 16 else "u1")
    header = f"P5\n{u.shape[1]} {u.shape[0]}\n{maxval}\n".encode()
    path.write_bytes(header + arr.tobytes())


def read_image(path) -> np.ndarray:
    """Read an 8/16-bit grayscale PGM or PNG, mapped linearly to [0, 1]."""
    path = Path(path)
    if path.suffix.lower() in (".pgm", ".pnm"):
        return _read_pgm(path)
    from PIL import Image

    with Image.open(path) as im:
        if im.mode in ("I;16", "I;16B", "I"):
            arr = np.asarray(im, dtype=np.float64)
            return arr / 65535.0
        if im.mode != "L":
            im = im.convert("L")
        return np.asarray(im, dtype=np.float64) / 255.0


def write_image(path, u, bits: int = 8) -> None:
    """Write a [0, 1] image as grayscale PGM or PNG, clamping out-of-range values."""
    path = Path(path)
    u = np.asarray(u, dtype=np.float64)
    if u.ndim != 2:
        raise ValueError("only 2D images can be written")
    if bits not in (8, 16):
        raise ValueError("bits must be 8 or 16")
    if path.suffix.lower() in (".pgm", ".pnm"):
        _write_pgm(path, u, bits)
        return
    from PIL import Image

    if bits == 8:
        im = Image.fromarray(np.round(np.clip(u, 0, 1) * 255).astype(np.uint8), mode="L")
    else:
        im = Image.fromarray(np.round(np.clip(u, 0, 1) * 65535).astype(np.uint16))
    im.save(path)


def write_operator(path, op: SparseOperator, family, order: int) -> None:
    layout = op.layout
    if layout is None:
        raise ValueError("operator has no subband layout attached")
    if op.n >= 2**32:
        raise ValueError("operator too large for 32-bit column indices")
    family = Family(family)
    head = struct.pack(
        f"<{len(layout.dims) + 5}I",
        len(layout.dims),
        *layout.dims,
        layout.levels,
        FAMILY_IDS[family],
        order,
        op.nnz,
    )
    with open(path, "wb") as fh:
        fh.write(MAGIC)
        fh.write(head)
        fh.write(op.row_offsets.astype("<u8").tobytes())
        fh.write(op.col_indices.astype("<u4").tobytes())
        fh.write(op.values.astype("<f8").tobytes())


def read_operator(path):
    """Read an operator file; returns ``(op, filters)``.

    Magic, header sizes and index bounds are validated before use.
    """
    data = Path(path).read_bytes()
    if data[:8] != MAGIC:
        raise CorruptOperatorFile(f"{path}: bad magic {data[:8]!r}")
    pos = 8

    def take_u32(count):
        nonlocal pos
        end = pos + 4 * count
        if end > len(data):
            raise CorruptOperatorFile(f"{path}: truncated header")
        vals = struct.unpack_from(f"<{count}I", data, pos)
        pos = end
        return vals

    (d,) = take_u32(1)
    if d not in (1, 2):
        raise CorruptOperatorFile(f"{path}: unsupported dimension d={d}")
    dims = take_u32(d)
    J, fam_id, order, K = take_u32(4)
    if fam_id not in _ID_TO_FAMILY:
        raise CorruptOperatorFile(f"{path}: unknown filter family id {fam_id}")
    try:
        layout = SubbandLayout(tuple(dims), J)
        filters = make_filters(_ID_TO_FAMILY[fam_id], order)
    except ValueError as exc:
        raise CorruptOperatorFile(f"{path}: {exc}") from None
    n = layout.size
    expected = pos + 8 * (n + 1) + 4 * K + 8 * K
    if len(data) != expected:
        raise CorruptOperatorFile(f"{path}: size {len(data)} bytes, expected {expected}")
    offsets = np.frombuffer(data, "<u8", n + 1, pos).astype(np.int64)
    pos += 8 * (n + 1)
    cols = np.frombuffer(data, "<u4", K, pos).astype(np.int64)
    pos += 4 * K
    vals = np.frombuffer(data, "<f8", K, pos).copy()
    if offsets[0] != 0 or offsets[-1] != K or np.any(np.diff(offsets) < 0):
        raise CorruptOperatorFile(f"{path}: inconsistent row offsets")
    if K and cols.max() >= n:
        raise CorruptOperatorFile(f"{path}: column index out of range")
    rows = np.repeat(np.arange(n), np.diff(offsets))
    bad = (np.diff(cols) <= 0) & (rows[1:] == rows[:-1])
    if np.any(bad):
        r = int(rows[1:][bad][0])
        raise CorruptOperatorFile(f"{path}: columns not strictly increasing in row {r}")
    op = SparseOperator(n, offsets, cols, vals, layout, filters.name)
    return op, filters
