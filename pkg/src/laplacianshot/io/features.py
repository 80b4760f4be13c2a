"""Feature file formats.

Binary layout (all little-endian)::

    offset 0   4 bytes  magic "LSFT"
    offset 4   u32      version (1)
    offset 8   u32      n_rows
    offset 12  u32      dim
    offset 16  u32      flags   bit 0: labels present, bit 1: base mean appended
    offset 20  n_rows records of [i32 label if bit 0] + dim x f32
    then       dim x f32 base mean if bit 1

The file length must match the header exactly.

CSV layout: header ``id,label,f0,...,f{M-1}`` where the ``label`` column is
optional, one row per feature vector.
"""

from __future__ import annotations

import csv
import math
import struct
from pathlib import Path

import numpy as np

from ..core import FeatureMatrix, LaplacianShotError

MAGIC = b"LSFT"
VERSION = 1
HEADER = struct.Struct("<4sIIII")
FLAG_LABELS = 1
FLAG_BASE_MEAN = 2


class FeatureFileError(LaplacianShotError):
    """Malformed feature file. ``offset`` (bytes) or ``line`` locate the problem."""

    def __init__(self, message, path=None, offset=None, line=None):
        where = []
        if path is not None:
            where.append(str(path))
        if offset is not None:
            where.append(f"byte offset {offset}")
        if line is not None:
            where.append(f"line {line}")
        super().__init__(f"{': '.join([', '.join(where), message]) if where else message}")
        self.path, self.offset, self.line = path, offset, line


class BadMagic(FeatureFileError):
    pass


class BadVersion(FeatureFileError):
    pass


class TruncatedFile(FeatureFileError):
    pass


class NonFiniteValue(FeatureFileError):
    pass


def _record_dtype(dim: int, labels: bool) -> np.dtype:
    fields = [("label", "<i4")] if labels else []
    fields.append(("x", "<f4", (dim,)))
    return np.dtype(fields)


def encode_binary(features: FeatureMatrix, base_mean=None) -> bytes:
    n, dim = features.data.shape
    has_labels = features.labels is not None
    flags = (FLAG_LABELS if has_labels else 0) | (FLAG_BASE_MEAN if base_mean is not None else 0)
    records = np.zeros(n, dtype=_record_dtype(dim, has_labels))
    if has_labels:
        lab = features.labels
        if lab.size and (lab.min() < -(2**31) or lab.max() >= 2**31):
            raise ValueError("labels do not fit in 32 bits")
        records["label"] = lab
    records["x"] = features.data.astype("<f4")
    parts = [HEADER.pack(MAGIC, VERSION, n, dim, flags), records.tobytes()]
    if base_mean is not None:
        mean = np.asarray(base_mean, dtype="<f4").reshape(-1)
        if mean.shape[0] != dim:
            raise ValueError(f"base mean has dim {mean.shape[0]}, features have {dim}")
        parts.append(mean.tobytes())
    return b"".join(parts)


def decode_binary(buf: bytes, path=None) -> tuple:
    if len(buf) < HEADER.size:
        raise TruncatedFile(f"header needs {HEADER.size} bytes, file has {len(buf)}",
                            path, offset=len(buf))
    magic, version, n, dim, flags = HEADER.unpack_from(buf, 0)
    if magic != MAGIC:
        raise BadMagic(f"bad magic {magic!r}, expected {MAGIC!r}", path, offset=0)
    if version != VERSION:
        raise BadVersion(f"unsupported version {version}", path, offset=4)
    if flags & ~(FLAG_LABELS | FLAG_BASE_MEAN):
        raise FeatureFileError(f"unknown flag bits {flags:#x}", path, offset=16)

    has_labels = bool(flags & FLAG_LABELS)
    dtype = _record_dtype(dim, has_labels)
    body = n * dtype.itemsize
    tail = 4 * dim if flags & FLAG_BASE_MEAN else 0
    expected = HEADER.size + body + tail
    if len(buf) < expected:
        raise TruncatedFile(f"expected {expected} bytes, file has {len(buf)}",
                            path, offset=len(buf))
    if len(buf) > expected:
        raise FeatureFileError(f"{len(buf) - expected} trailing bytes after declared content",
                               path, offset=expected)

    records = np.frombuffer(buf, dtype=dtype, count=n, offset=HEADER.size)
    x = records["x"].reshape(n, dim)
    bad = np.argwhere(~np.isfinite(x))
    if bad.size:
        r, c = bad[0]
        off = HEADER.size + r * dtype.itemsize + (4 if has_labels else 0) + 4 * c
        raise NonFiniteValue(f"non-finite value at row {r}, column {c}", path, offset=int(off))

    base_mean = None
    if tail:
        base_mean = np.frombuffer(buf, dtype="<f4", count=dim, offset=HEADER.size + body)
        bad = np.flatnonzero(~np.isfinite(base_mean))
        if bad.size:
            raise NonFiniteValue(f"non-finite base mean entry {bad[0]}", path,
                                 offset=HEADER.size + body + 4 * int(bad[0]))
        base_mean = base_mean.astype(np.float64)
    labels = records["label"].astype(np.int64) if has_labels else None
    return FeatureMatrix(x.astype(np.float64), labels), base_mean


def read_features_binary(path) -> tuple:
    """Load a binary feature file; returns ``(FeatureMatrix, base_mean or None)``."""
    path = Path(path)
    return decode_binary(path.read_bytes(), path)


def write_features_binary(features: FeatureMatrix, path, base_mean=None) -> None:
    Path(path).write_bytes(encode_binary(features, base_mean))


def _parse_float(cell, line, path):
    try:
        value = float(cell)
    except ValueError:
        raise FeatureFileError(f"non-numeric cell {cell!r}", path, line=line) from None
    if not math.isfinite(value):
        raise NonFiniteValue(f"non-finite cell {cell!r}", path, line=line)
    return value


def read_features_csv(path) -> FeatureMatrix:
    path = Path(path)
    with path.open(newline="") as fh:
        reader = csv.reader(fh)
        try:
            header = next(reader)
        except StopIteration:
            raise FeatureFileError("empty file", path, line=1) from None
        header = [h.strip() for h in header]
        if not header or header[0] != "id":
            raise FeatureFileError("header must start with 'id'", path, line=1)
        has_labels = len(header) > 1 and header[1] == "label"
        first = 2 if has_labels else 1
        feat_cols = header[first:]
        if feat_cols != [f"f{i}" for i in range(len(feat_cols))]:
            raise FeatureFileError("feature columns must be named f0, f1, ...", path, line=1)

        ids, labels, rows = [], [], []
        for line, row in enumerate(reader, start=2):
            if not row:
                continue
            if len(row) != len(header):
                raise FeatureFileError(
                    f"expected {len(header)} cells, got {len(row)}", path, line=line)
            ids.append(row[0])
            if has_labels:
                try:
                    labels.append(int(row[1]))
                except ValueError:
                    raise FeatureFileError(f"non-integer label {row[1]!r}", path,
                                           line=line) from None
            rows.append([_parse_float(c, line, path) for c in row[first:]])

    data = np.array(rows, dtype=np.float64).reshape(len(rows), len(feat_cols))
    return FeatureMatrix(data, np.array(labels) if has_labels else None, tuple(ids))


def write_features_csv(features: FeatureMatrix, path) -> None:
    """Write with ``repr`` floats so values survive a round trip exactly."""
    has_labels = features.labels is not None
    ids = features.ids if features.ids is not None else range(features.rows)
    with Path(path).open("w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["id"] + (["label"] if has_labels else []) + [f"f{i}" for i in range(features.dim)])
        for r, rid in enumerate(ids):
            head = [rid] + ([int(features.labels[r])] if has_labels else [])
            w.writerow(head + [repr(float(v)) for v in features.data[r]])


def is_csv(path) -> bool:
    return Path(path).suffix.lower() == ".csv"


def read_features(path) -> tuple:
    """Dispatch on extension: ``.csv`` is CSV, anything else is binary."""
    if is_csv(path):
        return read_features_csv(path), None
    return read_features_binary(path)


def write_features(features: FeatureMatrix, path, base_mean=None) -> None:
    if is_csv(path):
        if base_mean is not None:
            raise ValueError("CSV files cannot carry a base mean; use the binary format")
        write_features_csv(features, path)
    else:
        write_features_binary(features, path, base_mean)
