"""Matrix and mask file formats: CSV and binary/ASCII PGM."""

import csv
import io
import os

import numpy as np

from .core import ObservationMask
from .exceptions import ParseError, UnsupportedMaxval

__all__ = ["load_matrix", "save_matrix", "load_mask", "save_mask", "infer_format"]

PGM_MAXVALS = (255, 65535)


def infer_format(path, format=None):
    """``"csv"`` or ``"pgm"`` from an explicit format or the file extension."""
    if format is not None:
        fmt = format.lower()
    else:
        fmt = os.path.splitext(str(path))[1].lower().lstrip(".")
    if fmt not in ("csv", "pgm"):
        raise ValueError(f"unsupported matrix format {fmt!r} (expected csv or pgm)")
    return fmt


def _read_csv_rows(text):
    rows = []
    for lineno, row in enumerate(csv.reader(io.StringIO(text)), start=1):
        if not row or all(not cell.strip() for cell in row):
            continue
        try:
            rows.append((lineno, [float(cell) for cell in row]))
        except ValueError:
            bad = next(cell for cell in row if not _is_float(cell))
            raise ParseError(f"non-numeric value {bad!r}", line=lineno) from None
    return rows


def _is_float(cell):
    try:
        float(cell)
    except ValueError:
        return False
    return True


def _load_csv(path):
    with open(path, newline="") as fh:
        rows = _read_csv_rows(fh.read())
    if not rows:
        raise ParseError("empty CSV file", line=1)
    width = len(rows[0][1])
    for lineno, row in rows:
        if len(row) != width:
            raise ParseError(f"expected {width} columns, found {len(row)}", line=lineno)
    return np.array([row for _, row in rows], dtype=float)


def _pgm_tokens(data, count, pos):
    """Read ``count`` whitespace-separated header tokens, skipping comments."""
    tokens = []
    n = len(data)
    while len(tokens) < count:
        while pos < n and data[pos : pos + 1].isspace():
            pos += 1
        if pos < n and data[pos : pos + 1] == b"#":
            while pos < n and data[pos : pos + 1] not in (b"\n", b"\r"):
                pos += 1
            continue
        start = pos
        while pos < n and not data[pos : pos + 1].isspace() and data[pos : pos + 1] != b"#":
            pos += 1
        if start == pos:
            raise ParseError("truncated PGM header", position=pos)
        tok = data[start:pos]
        if not tok.isdigit():
            raise ParseError(f"invalid PGM header token {tok!r}", position=start)
        tokens.append(int(tok))
    return tokens, pos


def _load_pgm(path):
    with open(path, "rb") as fh:
        data = fh.read()
    magic = data[:2]
    if magic not in (b"P2", b"P5"):
        raise ParseError(f"not a P2/P5 PGM file (magic {magic!r})", position=0)
    (width, height, maxval), pos = _pgm_tokens(data, 3, 2)
    if maxval not in PGM_MAXVALS:
        raise UnsupportedMaxval(f"PGM maxval {maxval} is not one of {PGM_MAXVALS}")
    if width < 1 or height < 1:
        raise ParseError("PGM dimensions must be positive", position=pos)
    n = width * height
    if magic == b"P5":
        pos += 1  # single whitespace byte after maxval
        dtype = np.dtype(">u2") if maxval > 255 else np.dtype("u1")
        raw = data[pos : pos + n * dtype.itemsize]
        if len(raw) < n * dtype.itemsize:
            raise ParseError(
                f"expected {n * dtype.itemsize} pixel bytes, found {len(raw)}", position=pos
            )
        pixels = np.frombuffer(raw, dtype=dtype).astype(float)
    else:
        pixels, _ = _pgm_tokens(data, n, pos)
        pixels = np.asarray(pixels, dtype=float)
    if np.any(pixels > maxval):
        raise ParseError(f"pixel value exceeds maxval {maxval}")
    return pixels.reshape(height, width) / maxval


def load_matrix(path, format=None):
    """Load a matrix from CSV or a grayscale PGM (scaled to ``[0, 1]``)."""
    fmt = infer_format(path, format)
    return _load_csv(path) if fmt == "csv" else _load_pgm(path)


def save_matrix(path, M, format=None, maxval=255):
    """Write ``M`` as CSV (full precision) or PGM (P5, values clipped to ``[0, 1]``)."""
    fmt = infer_format(path, format)
    M = np.asarray(M, dtype=float)
    if fmt == "csv":
        with open(path, "w", newline="") as fh:
            writer = csv.writer(fh, lineterminator="\n")
            for row in M:
                writer.writerow([repr(float(v)) for v in row])
        return
    if maxval not in PGM_MAXVALS:
        raise UnsupportedMaxval(f"PGM maxval {maxval} is not one of {PGM_MAXVALS}")
    pixels = np.rint(np.clip(M, 0.0, 1.0) * maxval)
    dtype = ">u2" if maxval > 255 else "u1"
    header = f"P5\n{M.shape[1]} {M.shape[0]}\n{maxval}\n".encode()
    with open(path, "wb") as fh:
        fh.write(header + pixels.astype(dtype).tobytes())


def load_mask(path, shape=None, kind="auto"):
    """Observation mask from a dense 0/1 CSV or a 1-based ``i,j`` index list.

    With ``kind="auto"`` a file is read as a dense mask when ``shape`` is
    unknown, or when its dimensions equal ``shape`` and every value is 0 or
    1; otherwise every line must hold one ``i,j`` pair and ``shape`` is
    required.  ``kind="dense"`` or ``kind="index"`` forces the layout.
    """
    if kind not in ("auto", "dense", "index"):
        raise ValueError(f"unknown mask kind {kind!r}")
    with open(path, newline="") as fh:
        rows = _read_csv_rows(fh.read())
    if not rows:
        if shape is None:
            raise ParseError("empty mask file needs the matrix shape", line=1)
        return ObservationMask(np.zeros(shape, dtype=bool))
    values = [row for _, row in rows]
    widths = {len(r) for r in values}
    binary = all(v in (0.0, 1.0) for r in values for v in r)
    dense_shape = (len(values), widths.pop()) if len(widths) == 1 else None
    looks_dense = binary and dense_shape is not None and (
        shape is None or dense_shape == tuple(shape))
    if kind == "dense" or (kind == "auto" and looks_dense):
        if dense_shape is None:
            raise ParseError("rows of a dense mask must have equal length")
        if not binary:
            raise ParseError("dense mask values must be 0 or 1")
        if shape is not None and dense_shape != tuple(shape):
            raise ParseError(f"mask shape {dense_shape} does not match {tuple(shape)}")
        return ObservationMask(np.array(values, dtype=bool))
    if shape is None:
        raise ParseError("index-list mask needs the matrix shape")
    pairs = []
    for lineno, row in rows:
        if len(row) != 2 or any(v != int(v) for v in row):
            raise ParseError("expected an integer pair 'i,j'", line=lineno)
        pairs.append((int(row[0]), int(row[1])))
    return ObservationMask.from_indices(pairs, shape)


def save_mask(path, mask, index_list=False):
    """Write a mask as a dense 0/1 CSV, or as 1-based ``i,j`` lines."""
    W = np.asarray(mask, dtype=bool)
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        if index_list:
            for i, j in zip(*np.nonzero(W)):
                writer.writerow([int(i) + 1, int(j) + 1])
        else:
            for row in W.astype(int):
                writer.writerow(row.tolist())
