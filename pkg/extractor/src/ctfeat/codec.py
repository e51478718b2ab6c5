"""QCNF feature-file codec and manifest reader.

This is the wire format shared with the training toolkit:
``QCNF`` magic, little-endian ``u16`` version (1), ``u32`` record count,
``u32`` vector dim, then per record ``u16`` id length + UTF-8 id,
``u8`` label code, and dim float32 values.
"""

from __future__ import annotations

import csv
import struct
from dataclasses import dataclass

import numpy as np

MAGIC = b"QCNF"
VERSION = 1

LABELS = ("Normal", "Cyst", "Stone", "Tumor")
LABEL_TO_CODE = {name: i for i, name in enumerate(LABELS)}


class FormatError(ValueError):
    """Malformed manifest or feature file."""


@dataclass
class FeatureRecord:
    sample_id: str
    label: int
    vector: np.ndarray

    def __post_init__(self):
        self.vector = np.asarray(self.vector, dtype=np.float32)
        if self.vector.ndim != 1:
            raise ValueError("feature vector must be 1-D")
        if not np.all(np.isfinite(self.vector)):
            raise ValueError(f"non-finite feature vector for {self.sample_id!r}")


@dataclass(frozen=True)
class ManifestRecord:
    sample_id: str
    path: str
    label: str

    @property
    def label_code(self) -> int:
        return LABEL_TO_CODE[self.label]


def read_manifest(path) -> list:
    """CSV with header ``id,path,label``; ids unique, labels one of
    Normal/Cyst/Stone/Tumor (case-sensitive)."""
    records = []
    seen = set()
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        header = next(reader, None)
        if header is None or [c.strip() for c in header] != ["id", "path", "label"]:
            raise FormatError(
                f"manifest {path}: expected header 'id,path,label', got {header}"
            )
        for lineno, row in enumerate(reader, start=2):
            if not row:
                continue
            if len(row) != 3:
                raise FormatError(
                    f"manifest {path}:{lineno}: expected 3 fields, got {len(row)}"
                )
            sid, p, label = row
            if label not in LABEL_TO_CODE:
                raise FormatError(f"manifest {path}:{lineno}: unknown label {label!r}")
            if sid in seen:
                raise FormatError(f"manifest {path}:{lineno}: duplicate id {sid!r}")
            seen.add(sid)
            records.append(ManifestRecord(sid, p, label))
    return records


def write_features(path, records, dim: int = None) -> None:
    records = list(records)
    if dim is None:
        dim = records[0].vector.size if records else 0
    for r in records:
        if r.vector.size != dim:
            raise ValueError(
                f"record {r.sample_id!r} has dim {r.vector.size}, expected {dim}"
            )
    with open(path, "wb") as fh:
        fh.write(MAGIC)
        fh.write(struct.pack("<HII", VERSION, len(records), dim))
        for r in records:
            ident = r.sample_id.encode("utf-8")
            if len(ident) > 0xFFFF:
                raise ValueError(f"sample id too long: {r.sample_id!r}")
            fh.write(struct.pack("<H", len(ident)))
            fh.write(ident)
            fh.write(struct.pack("<B", r.label))
            fh.write(r.vector.astype("<f4", copy=False).tobytes())


def _read_exact(fh, count: int, what: str) -> bytes:
    data = fh.read(count)
    if len(data) != count:
        offset = fh.tell() - len(data)
        raise FormatError(
            f"truncated feature file while reading {what}: expected {count} bytes "
            f"at offset {offset}, got {len(data)}"
        )
    return data


def read_features(path) -> list:
    records = []
    with open(path, "rb") as fh:
        magic = _read_exact(fh, 4, "magic")
        if magic != MAGIC:
            raise FormatError(f"bad magic {magic!r} at offset 0, expected {MAGIC!r}")
        version, count, dim = struct.unpack("<HII", _read_exact(fh, 10, "header"))
        if version != VERSION:
            raise FormatError(f"unsupported feature-file version {version} at offset 4")
        for i in range(count):
            (id_len,) = struct.unpack("<H", _read_exact(fh, 2, f"record {i} id length"))
            ident = _read_exact(fh, id_len, f"record {i} id").decode("utf-8")
            (label,) = struct.unpack("<B", _read_exact(fh, 1, f"record {i} label"))
            vec = np.frombuffer(
                _read_exact(fh, 4 * dim, f"record {i} vector"), dtype="<f4"
            ).copy()
            records.append(FeatureRecord(ident, int(label), vec))
        if fh.read(1):
            raise FormatError(f"trailing bytes after {count} records")
    return records
